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

// Corridor geometry: axis-aligned boxes, H-polytopes, carving unsafe boxes
// out of corridor boxes, and the corridor-distance penalty used by the
// front-end search heuristic.

#pragma once

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace semland {

template <typename Scalar>
struct AxisBoxT {
    using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
    Vec3 lo{Vec3::Zero()};
    Vec3 hi{Vec3::Zero()};

    static AxisBoxT centered(const Vec3& center, const Vec3& half_extent) {
        return AxisBoxT{center - half_extent, center + half_extent};
    }
    [[nodiscard]] bool valid() const { return (lo.array() <= hi.array()).all(); }
    [[nodiscard]] Vec3 center() const { return (lo + hi) / Scalar(2); }
    [[nodiscard]] Vec3 extent() const { return hi - lo; }
    [[nodiscard]] Scalar volume() const { return extent().prod(); }
    [[nodiscard]] bool contains(const Vec3& p, Scalar tol = Scalar(0)) const {
        return (p.array() >= lo.array() - tol).all() && (p.array() <= hi.array() + tol).all();
    }
    [[nodiscard]] bool contains_interior(const Vec3& p) const {
        return (p.array() > lo.array()).all() && (p.array() < hi.array()).all();
    }
    [[nodiscard]] bool contains(const AxisBoxT& other) const {
        return (other.lo.array() >= lo.array()).all() && (other.hi.array() <= hi.array()).all();
    }
    /// True iff the interiors overlap (touching faces do not count).
    [[nodiscard]] bool overlaps_interior(const AxisBoxT& other) const {
        return (lo.array() < other.hi.array()).all() && (other.lo.array() < hi.array()).all();
    }
    [[nodiscard]] AxisBoxT grown(Scalar margin) const {
        return AxisBoxT{lo.array() - margin, hi.array() + margin};
    }
    bool operator==(const AxisBoxT&) const = default;
};

using AxisBox = AxisBoxT<double>;

/// {x : A x <= b}
template <typename Scalar>
struct PolytopeT {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 3> A;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> b;

    [[nodiscard]] Eigen::Index rows() const { return A.rows(); }
};

using Polytope = PolytopeT<double>;

struct UnsafeRegion {
    AxisBox box;
    std::string semantic_class;
    double buffer{0.0};
    bool is_dynamic{false};
    double created_at{0.0};
};

struct Corridor {
    std::vector<AxisBox> boxes;
};

class FullyBlocked : public std::runtime_error {
public:
    FullyBlocked() : std::runtime_error("unsafe box covers the corridor box") {}
};

template <typename Scalar>
bool contains(const PolytopeT<Scalar>& poly, const Eigen::Matrix<Scalar, 3, 1>& p) {
    return ((poly.A * p - poly.b).array() <= Scalar(1e-9)).all();
}

template <typename Scalar>
PolytopeT<Scalar> box_to_polytope(const AxisBoxT<Scalar>& box) {
    PolytopeT<Scalar> poly;
    poly.A.setZero(6, 3);
    poly.b.resize(6);
    for (int d = 0; d < 3; ++d) {
        poly.A(d, d) = Scalar(1);
        poly.b(d) = box.hi(d);
        poly.A(3 + d, d) = Scalar(-1);
        poly.b(3 + d) = -box.lo(d);
    }
    return poly;
}

inline AxisBox inflate(const UnsafeRegion& region) {
    return region.box.grown(region.buffer);
}

template <typename Scalar>
Scalar squared_distance(const Eigen::Matrix<Scalar, 3, 1>& p, const AxisBoxT<Scalar>& box) {
    Scalar sum(0);
    for (int d = 0; d < 3; ++d) {
        if (p(d) < box.lo(d)) {
            sum += (p(d) - box.lo(d)) * (p(d) - box.lo(d));
        } else if (p(d) > box.hi(d)) {
            sum += (p(d) - box.hi(d)) * (p(d) - box.hi(d));
        }
    }
    return sum;
}

/// Axis-aligned difference corridor \ unsafe as interior-disjoint slabs
/// (at most six). Throws FullyBlocked when unsafe covers the corridor box.
template <typename Scalar>
std::vector<AxisBoxT<Scalar>> carve(const AxisBoxT<Scalar>& corridor_box,
                                    const AxisBoxT<Scalar>& unsafe) {
    if (unsafe.contains(corridor_box)) throw FullyBlocked();
    if (!corridor_box.overlaps_interior(unsafe)) return {corridor_box};

    std::vector<AxisBoxT<Scalar>> out;
    AxisBoxT<Scalar> rest = corridor_box;
    for (int d = 0; d < 3; ++d) {
        if (rest.lo(d) < unsafe.lo(d)) {
            AxisBoxT<Scalar> slab = rest;
            slab.hi(d) = unsafe.lo(d);
            out.push_back(slab);
            rest.lo(d) = unsafe.lo(d);
        }
        if (rest.hi(d) > unsafe.hi(d)) {
            AxisBoxT<Scalar> slab = rest;
            slab.lo(d) = unsafe.hi(d);
            out.push_back(slab);
            rest.hi(d) = unsafe.hi(d);
        }
    }
    return out;
}

/// Same point set as carve(), but as the (overlapping) maximal free boxes:
/// one per face of the unsafe box that lies strictly inside the corridor box.
/// Overlap lets consecutive MPC steps share a constraint box.
template <typename Scalar>
std::vector<AxisBoxT<Scalar>> carve_maximal(const AxisBoxT<Scalar>& corridor_box,
                                            const AxisBoxT<Scalar>& unsafe) {
    if (unsafe.contains(corridor_box)) throw FullyBlocked();
    if (!corridor_box.overlaps_interior(unsafe)) return {corridor_box};

    std::vector<AxisBoxT<Scalar>> out;
    for (int d = 0; d < 3; ++d) {
        if (corridor_box.lo(d) < unsafe.lo(d)) {
            AxisBoxT<Scalar> b = corridor_box;
            b.hi(d) = unsafe.lo(d);
            out.push_back(b);
        }
        if (corridor_box.hi(d) > unsafe.hi(d)) {
            AxisBoxT<Scalar> b = corridor_box;
            b.lo(d) = unsafe.hi(d);
            out.push_back(b);
        }
    }
    return out;
}

/// Carves every unsafe box out of every corridor box. Pieces that are fully
/// blocked disappear; with `maximal` the overlapping decomposition is used and
/// pieces contained in another piece are dropped.
template <typename Scalar>
std::vector<AxisBoxT<Scalar>> carve_all(const std::vector<AxisBoxT<Scalar>>& corridor,
                                        const std::vector<AxisBoxT<Scalar>>& unsafe,
                                        bool maximal) {
    std::vector<AxisBoxT<Scalar>> pieces = corridor;
    for (const auto& u : unsafe) {
        std::vector<AxisBoxT<Scalar>> next;
        for (const auto& piece : pieces) {
            try {
                auto cut = maximal ? carve_maximal(piece, u) : carve(piece, u);
                next.insert(next.end(), cut.begin(), cut.end());
            } catch (const FullyBlocked&) {
            }
        }
        if (maximal) {
            std::vector<AxisBoxT<Scalar>> kept;
            for (std::size_t i = 0; i < next.size(); ++i) {
                bool redundant = false;
                for (std::size_t j = 0; j < next.size() && !redundant; ++j) {
                    if (i == j || !next[j].contains(next[i])) continue;
                    // identical boxes: keep the first one only
                    redundant = !(next[i] == next[j]) || j < i;
                }
                if (!redundant) kept.push_back(next[i]);
            }
            next = std::move(kept);
        }
        pieces = std::move(next);
    }
    return pieces;
}

/// Corridor-distance penalty: zero on the closed safe union and inside any
/// clearance box, otherwise the squared distance to the nearest safe box
/// (per-axis violations squared and summed) plus eps.
template <typename Scalar>
Scalar penalty(const Eigen::Matrix<Scalar, 3, 1>& p, const std::vector<AxisBoxT<Scalar>>& safe_boxes,
               const std::vector<AxisBoxT<Scalar>>& clearances, Scalar eps) {
    for (const auto& c : clearances) {
        if (c.contains(p)) return Scalar(0);
    }
    Scalar best = std::numeric_limits<Scalar>::infinity();
    for (const auto& box : safe_boxes) {
        const Scalar d2 = squared_distance(p, box);
        if (d2 == Scalar(0)) return Scalar(0);
        best = std::min(best, d2);
    }
    return best + eps;
}

/// Slab test on the closed segment [p0, p1] against the closed box.
template <typename Scalar>
bool segment_intersects_box(const Eigen::Matrix<Scalar, 3, 1>& p0,
                            const Eigen::Matrix<Scalar, 3, 1>& p1, const AxisBoxT<Scalar>& box) {
    Scalar t0(0), t1(1);
    const Eigen::Matrix<Scalar, 3, 1> d = p1 - p0;
    for (int k = 0; k < 3; ++k) {
        if (d(k) == Scalar(0)) {
            if (p0(k) < box.lo(k) || p0(k) > box.hi(k)) return false;
            continue;
        }
        Scalar ta = (box.lo(k) - p0(k)) / d(k);
        Scalar tb = (box.hi(k) - p0(k)) / d(k);
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return false;
    }
    return true;
}

}  // namespace semland
