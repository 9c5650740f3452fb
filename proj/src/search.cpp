/*
 * Copyright 2026 The semland Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "semland/search.hpp"

#include <array>
#include <cmath>
#include <algorithm>
#include <cstdint>
#include <queue>
#include <unordered_map>

namespace semland {

namespace {

using Eigen::Vector3d;

struct Node {
    Vector3d p;
    Vector3d v;
    Vector3d a;  // acceleration of the primitive that reached this node
    double g{0.0};
    int parent{-1};
};

struct OpenEntry {
    double f;
    double g;
    std::uint64_t counter;
    int node;
};

// min-heap on (f, g, counter)
struct OpenOrder {
    bool operator()(const OpenEntry& x, const OpenEntry& y) const {
        if (x.f != y.f) return x.f > y.f;
        if (x.g != y.g) return x.g > y.g;
        return x.counter > y.counter;
    }
};

using CellKey = std::array<std::int64_t, 6>;

struct CellHash {
    std::size_t operator()(const CellKey& k) const {
        std::size_t h = 1469598103934665603ull;
        for (auto v : k) {
            h ^= static_cast<std::size_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        }
        return h;
    }
};

CellKey cell_of(const Vector3d& p, const Vector3d& v, const PlannerConfig& cfg) {
    CellKey k;
    for (int d = 0; d < 3; ++d) {
        k[d] = static_cast<std::int64_t>(std::floor(p(d) / cfg.pos_resolution + 1e-9));
        k[3 + d] = static_cast<std::int64_t>(std::floor(v(d) / cfg.vel_resolution + 1e-9));
    }
    return k;
}

bool in_corridor(const Vector3d& p, const Corridor& corridor) {
    for (const auto& b : corridor.boxes) {
        if (b.contains(p, 1e-9)) return true;
    }
    return false;
}

struct CollisionModel {
    std::vector<AxisBox> raw;       // never exempt
    std::vector<AxisBox> inflated;  // exempt inside clearance boxes
    std::vector<AxisBox> clearances;

    bool segment_collides(const Vector3d& a, const Vector3d& b) const {
        for (const auto& box : raw) {
            if (segment_intersects_box(a, b, box)) return true;
        }
        for (const auto& box : inflated) {
            if (!segment_intersects_box(a, b, box)) continue;
            bool exempt = false;
            for (const auto& c : clearances) {
                if (c.contains(a) && c.contains(b)) exempt = true;
            }
            if (!exempt) return true;
        }
        return false;
    }
};

}  // namespace

double PrimitivePath::duration() const {
    double t = 0.0;
    for (const auto& s : segments) t += s.duration;
    return t;
}

Vector3d PrimitivePath::end() const {
    if (segments.empty()) return start;
    const auto& last = segments.back();
    return last.position(last.duration);
}

double h0(const Vector3d& p, const Vector3d& goal, const PlannerConfig& cfg) {
    const double beyond = std::max(0.0, (p - goal).norm() - cfg.goal_tol);
    return cfg.rho * beyond / cfg.v_max;
}

std::vector<AxisBox> penalty_safe_boxes(const Corridor& corridor,
                                        const std::vector<UnsafeRegion>& unsafe,
                                        const PlannerConfig& cfg) {
    std::vector<AxisBox> grown;
    grown.reserve(unsafe.size());
    for (const auto& r : unsafe) grown.push_back(inflate(r).grown(cfg.penalty_margin));
    return carve_all(corridor.boxes, grown, true);
}

PrimitivePath plan_primitives(const StartState& start, const Vector3d& goal,
                              const Corridor& corridor, const std::vector<UnsafeRegion>& unsafe,
                              const PlannerConfig& cfg) {
    if (!in_corridor(start.p, corridor)) throw std::invalid_argument("start outside corridor");
    if (!in_corridor(goal, corridor)) throw std::invalid_argument("goal outside corridor");

    CollisionModel collision;
    for (const auto& r : unsafe) {
        if (r.box.contains(start.p)) throw StartBlocked();
        if (r.box.contains(goal)) throw GoalBlocked();
        collision.raw.push_back(r.box.grown(cfg.collision_margin));
        collision.inflated.push_back(inflate(r).grown(cfg.collision_margin));
    }
    const Vector3d half = Vector3d::Constant(cfg.clearance_radius);
    collision.clearances = {AxisBox::centered(start.p, half), AxisBox::centered(goal, half)};

    const std::vector<AxisBox> safe = penalty_safe_boxes(corridor, unsafe, cfg);
    auto heuristic = [&](const Vector3d& p) {
        double h = cfg.heuristic_weight * h0(p, goal, cfg);
        if (cfg.lambda > 0.0 && !safe.empty()) {
            h += cfg.lambda * penalty(p, safe, collision.clearances, cfg.eps);
        }
        return h;
    };

    std::vector<Vector3d> accelerations;
    for (int ax = -1; ax <= 1; ++ax)
        for (int ay = -1; ay <= 1; ++ay)
            for (int az = -1; az <= 1; ++az)
                accelerations.emplace_back(ax * cfg.a_max, ay * cfg.a_max, az * cfg.a_max);

    std::vector<Node> nodes;
    nodes.push_back(Node{start.p, start.v, Vector3d::Zero(), 0.0, -1});
    std::priority_queue<OpenEntry, std::vector<OpenEntry>, OpenOrder> open;
    std::uint64_t counter = 0;
    open.push(OpenEntry{heuristic(start.p), 0.0, counter++, 0});
    // per cell: best g seen so far and whether it has been expanded
    struct CellState {
        double g;
        bool closed;
    };
    std::unordered_map<CellKey, CellState, CellHash> cells;
    cells.reserve(1 << 16);
    cells[cell_of(start.p, start.v, cfg)] = CellState{0.0, false};

    int expansions = 0;
    while (!open.empty()) {
        const OpenEntry top = open.top();
        open.pop();
        const Node node = nodes[top.node];
        CellState& here = cells[cell_of(node.p, node.v, cfg)];
        if (here.closed) continue;
        here.closed = true;

        if ((node.p - goal).norm() <= cfg.goal_tol && node.v.norm() <= cfg.goal_vel_tol) {
            PrimitivePath path;
            path.start = start.p;
            path.cost = node.g;
            path.expansions = expansions;
            for (int i = top.node; nodes[i].parent >= 0; i = nodes[i].parent) {
                const Node& parent = nodes[nodes[i].parent];
                path.segments.push_back(Primitive{parent.p, parent.v, nodes[i].a, cfg.tau});
            }
            std::reverse(path.segments.begin(), path.segments.end());
            return path;
        }
        if (++expansions > cfg.max_expansions) break;

        for (const Vector3d& a : accelerations) {
            const Primitive prim{node.p, node.v, a, cfg.tau};
            const Vector3d v1 = prim.velocity(cfg.tau);
            if (v1.norm() > cfg.v_max + 1e-9) continue;
            const Vector3d p1 = prim.position(cfg.tau);
            const CellKey child_key = cell_of(p1, v1, cfg);
            const double g1 = node.g + (a.squaredNorm() + cfg.rho) * cfg.tau;
            auto it = cells.find(child_key);
            if (it != cells.end() && (it->second.closed || it->second.g <= g1)) continue;

            const double speed = std::max(node.v.norm(), v1.norm());
            const int pieces = std::max(1, static_cast<int>(std::ceil(speed * cfg.tau / cfg.check_resolution)));
            bool ok = true;
            Vector3d prev = node.p;
            for (int s = 1; s <= pieces && ok; ++s) {
                const Vector3d q = prim.position(cfg.tau * s / pieces);
                ok = in_corridor(q, corridor) && !collision.segment_collides(prev, q);
                prev = q;
            }
            if (!ok) continue;

            cells[child_key] = CellState{g1, false};
            nodes.push_back(Node{p1, v1, a, g1, top.node});
            open.push(OpenEntry{g1 + heuristic(p1), g1, counter++, static_cast<int>(nodes.size()) - 1});
        }
    }
    throw NoPath();
}

ReferenceTrajectory densify(const PrimitivePath& path, double dt, double yaw) {
    ReferenceTrajectory traj;
    traj.cost = path.cost;
    const double total = path.duration();
    const auto count = static_cast<std::size_t>(std::ceil(total / dt - 1e-9)) + 1;
    traj.samples.reserve(count);

    std::vector<double> seg_start(path.segments.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < path.segments.size(); ++k) {
        seg_start[k] = acc;
        acc += path.segments[k].duration;
    }
    std::size_t k = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const double t = (i + 1 == count) ? total : static_cast<double>(i) * dt;
        RefSample sample{t, path.start, yaw};
        if (!path.segments.empty()) {
            while (k + 1 < path.segments.size() && t >= seg_start[k + 1]) ++k;
            const Primitive& seg = path.segments[k];
            sample.p = seg.position(std::min(t - seg_start[k], seg.duration));
        }
        traj.samples.push_back(sample);
    }
    return traj;
}

ReferenceTrajectory plan(const StartState& start, const Vector3d& goal, const Corridor& corridor,
                         const std::vector<UnsafeRegion>& unsafe, const PlannerConfig& cfg) {
    const PrimitivePath path = plan_primitives(start, goal, corridor, unsafe, cfg);
    ReferenceTrajectory traj = densify(path, cfg.sample_dt, start.yaw);

    std::vector<AxisBox> inflated;
    for (const auto& r : unsafe) inflated.push_back(inflate(r));
    const std::vector<AxisBox> free_boxes = carve_all(corridor.boxes, inflated, true);
    // lo > hi marks "no box yet"
    traj.boxes.assign(traj.samples.size(), AxisBox{Vector3d::Ones(), -Vector3d::Ones()});
    if (!assign_boxes(traj, free_boxes)) {
        // samples outside the free set sit in an endpoint exemption
        const Vector3d half = Vector3d::Constant(cfg.clearance_radius);
        for (std::size_t i = 0; i < traj.samples.size(); ++i) {
            const Vector3d& p = traj.samples[i].p;
            if (traj.boxes[i].valid()) continue;
            const Vector3d& anchor = (p - start.p).norm() <= (p - goal).norm() ? start.p : goal;
            traj.boxes[i] = AxisBox::centered(anchor, half);
        }
    }
    return traj;
}

bool assign_boxes(ReferenceTrajectory& traj, const std::vector<AxisBox>& free_boxes, std::size_t first) {
    if (traj.boxes.size() != traj.samples.size()) traj.boxes.resize(traj.samples.size());
    bool all = true;
    int current = -1;
    for (std::size_t i = first; i < traj.samples.size(); ++i) {
        const Vector3d& p = traj.samples[i].p;
        if (current < 0 || !free_boxes[current].contains(p, 1e-9)) {
            current = -1;
            for (std::size_t b = 0; b < free_boxes.size(); ++b) {
                if (free_boxes[b].contains(p, 1e-9)) {
                    current = static_cast<int>(b);
                    break;
                }
            }
        }
        if (current < 0) {
            all = false;
            continue;
        }
        traj.boxes[i] = free_boxes[current];
    }
    return all;
}

bool trajectory_hits_unsafe(const ReferenceTrajectory& traj, const std::vector<UnsafeRegion>& unsafe) {
    for (const auto& r : unsafe) {
        const AxisBox box = inflate(r);
        for (std::size_t i = 0; i < traj.samples.size(); ++i) {
            const Vector3d& a = traj.samples[i].p;
            const Vector3d& b = i + 1 < traj.samples.size() ? traj.samples[i + 1].p : a;
            if (segment_intersects_box(a, b, box)) return true;
        }
    }
    return false;
}

}  // namespace semland
