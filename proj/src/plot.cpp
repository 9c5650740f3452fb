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

#include "semland/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <tuple>

namespace semland {

namespace {

using nlohmann::json;

struct Xy {
    double x, y;
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    std::string s(buf);
    if (s == "-0.000") s = "0.000";
    return s;
}

bool is_vec3(const json& j) {
    return j.is_array() && j.size() == 3 && j[0].is_number() && j[1].is_number() && j[2].is_number();
}

Xy xy(const json& v) { return {v[0].get<double>(), v[1].get<double>()}; }

void validate(const json& r, std::size_t line) {
    const std::string where = "trace record " + std::to_string(line + 1);
    if (!r.is_object()) throw MalformedTrace(where + ": not an object");
    if (!r.contains("t") || !r["t"].is_number()) throw MalformedTrace(where + ": missing time");
    if (!r.contains("p") || !is_vec3(r["p"])) throw MalformedTrace(where + ": missing position");
    if (r.contains("target") && !is_vec3(r["target"])) throw MalformedTrace(where + ": bad target");
    if (r.contains("agents")) {
        if (!r["agents"].is_array()) throw MalformedTrace(where + ": agents is not an array");
        for (const auto& a : r["agents"]) {
            if (!a.is_object() || !a.contains("p") || !is_vec3(a["p"])) throw MalformedTrace(where + ": bad agent");
        }
    }
    if (r.contains("unsafe")) {
        if (!r["unsafe"].is_array()) throw MalformedTrace(where + ": unsafe is not an array");
        for (const auto& u : r["unsafe"]) {
            if (!u.is_object() || !u.contains("box") || !u["box"].is_object() || !is_vec3(u["box"].value("lo", json())) ||
                !is_vec3(u["box"].value("hi", json()))) {
                throw MalformedTrace(where + ": bad unsafe box");
            }
        }
    }
}

Xy target_of(const std::vector<json>& records) {
    for (const auto& r : records) {
        if (r.contains("target")) return xy(r["target"]);
    }
    return {0.0, 0.0};
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::vector<json> read_trace(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<json> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            records.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw MalformedTrace("trace record " + std::to_string(records.size() + 1) + ": " + e.what());
        }
        validate(records.back(), records.size() - 1);
    }
    return records;
}

MapTransform map_transform(const std::vector<json>& records, const PlotLayout& layout) {
    const Xy target = target_of(records);
    double x0 = target.x - 0.5, x1 = target.x + 0.5, y0 = target.y - 0.5, y1 = target.y + 0.5;
    auto grow = [&](Xy p) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    };
    for (const auto& r : records) {
        grow(xy(r["p"]));
        for (const auto& a : r.value("agents", json::array())) grow(xy(a["p"]));
        for (const auto& u : r.value("unsafe", json::array())) {
            grow(xy(u["box"]["lo"]));
            grow(xy(u["box"]["hi"]));
        }
    }
    const double span = std::max(x1 - x0, y1 - y0) + 2.0 * layout.pad_m;
    MapTransform m;
    m.scale = layout.map_size / span;
    // center the data in the square window
    m.x_min = 0.5 * (x0 + x1) - 0.5 * span;
    m.y_max = 0.5 * (y0 + y1) + 0.5 * span;
    m.left = layout.margin;
    m.top = layout.margin;
    return m;
}

std::string plot_trace(const std::vector<json>& records, const PlotLayout& layout) {
    for (std::size_t i = 0; i < records.size(); ++i) validate(records[i], i);
    const MapTransform m = map_transform(records, layout);
    const Xy target = target_of(records);
    const double strip_top = layout.strip_top();
    const double strip_w = layout.map_size;
    const double strip_h = layout.strip_height;

    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + num(layout.width) + "\" height=\"" +
           num(layout.height) + "\" viewBox=\"0 0 " + num(layout.width) + " " + num(layout.height) + "\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"" + num(layout.width) + "\" height=\"" + num(layout.height) +
           "\" fill=\"white\"/>\n";

    // axes
    svg += "<g id=\"axes\" fill=\"none\" stroke=\"black\" stroke-width=\"1\">\n";
    svg += "<rect x=\"" + num(m.left) + "\" y=\"" + num(m.top) + "\" width=\"" + num(layout.map_size) + "\" height=\"" +
           num(layout.map_size) + "\"/>\n";
    svg += "<rect x=\"" + num(layout.margin) + "\" y=\"" + num(strip_top) + "\" width=\"" + num(strip_w) +
           "\" height=\"" + num(strip_h) + "\"/>\n";
    svg += "</g>\n";
    svg += "<g id=\"labels\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg += "<text x=\"" + num(m.left) + "\" y=\"" + num(m.top - 8) + "\">top-down x-y (m), 1 m = " + num(m.scale) +
           " px</text>\n";
    svg += "<text x=\"" + num(layout.margin) + "\" y=\"" + num(strip_top - 8) + "\">altitude z (m) vs time (s)</text>\n";
    svg += "</g>\n";

    // unsafe boxes, each distinct footprint once
    std::set<std::tuple<std::string, std::string, std::string, std::string>> seen;
    svg += "<g id=\"unsafe\" fill=\"red\" fill-opacity=\"0.12\" stroke=\"red\" stroke-opacity=\"0.4\">\n";
    for (const auto& r : records) {
        for (const auto& u : r.value("unsafe", json::array())) {
            const Xy lo = xy(u["box"]["lo"]), hi = xy(u["box"]["hi"]);
            const auto key = std::make_tuple(num(m.px(lo.x)), num(m.py(hi.y)), num((hi.x - lo.x) * m.scale),
                                             num((hi.y - lo.y) * m.scale));
            if (!seen.insert(key).second) continue;
            svg += "<rect x=\"" + std::get<0>(key) + "\" y=\"" + std::get<1>(key) + "\" width=\"" + std::get<2>(key) +
                   "\" height=\"" + std::get<3>(key) + "\"/>\n";
        }
    }
    svg += "</g>\n";

    // agent paths
    std::size_t n_agents = 0;
    for (const auto& r : records) n_agents = std::max(n_agents, r.value("agents", json::array()).size());
    svg += "<g id=\"agents\" fill=\"none\" stroke=\"darkorange\" stroke-width=\"1.5\">\n";
    for (std::size_t a = 0; a < n_agents; ++a) {
        std::string pts;
        for (const auto& r : records) {
            const auto agents = r.value("agents", json::array());
            if (a >= agents.size()) continue;
            const Xy p = xy(agents[a]["p"]);
            pts += (pts.empty() ? "" : " ") + num(m.px(p.x)) + "," + num(m.py(p.y));
        }
        std::string cls = records.empty() ? "" : records.front()["agents"][a].value("class", std::string());
        svg += "<polyline class=\"" + escape(cls) + "\" points=\"" + pts + "\"/>\n";
    }
    svg += "</g>\n";

    // target: success radius
    svg += "<circle id=\"target\" cx=\"" + num(m.px(target.x)) + "\" cy=\"" + num(m.py(target.y)) + "\" r=\"" +
           num(0.5 * m.scale) + "\" fill=\"none\" stroke=\"green\" stroke-width=\"1.5\"/>\n";

    if (!records.empty()) {
        std::string pts;
        for (const auto& r : records) {
            const Xy p = xy(r["p"]);
            pts += (pts.empty() ? "" : " ") + num(m.px(p.x)) + "," + num(m.py(p.y));
        }
        svg += "<polyline id=\"uav-path\" points=\"" + pts + "\" fill=\"none\" stroke=\"navy\" stroke-width=\"2\"/>\n";

        // altitude strip
        const double t0 = records.front()["t"].get<double>();
        const double t1 = std::max(t0 + 1e-6, records.back()["t"].get<double>());
        double z_top = 1.0;
        for (const auto& r : records) {
            z_top = std::max(z_top, r["p"][2].get<double>());
            for (const auto& u : r.value("unsafe", json::array())) z_top = std::max(z_top, u.value("z_min", 0.0));
        }
        z_top *= 1.1;
        auto sx = [&](double t) { return layout.margin + (t - t0) / (t1 - t0) * strip_w; };
        auto sy = [&](double z) { return strip_top + strip_h - std::clamp(z, 0.0, z_top) / z_top * strip_h; };
        std::string alt, floor;
        for (const auto& r : records) {
            const double t = r["t"].get<double>();
            double z_min = 0.0;
            for (const auto& u : r.value("unsafe", json::array())) z_min = std::max(z_min, u.value("z_min", 0.0));
            alt += (alt.empty() ? "" : " ") + num(sx(t)) + "," + num(sy(r["p"][2].get<double>()));
            floor += (floor.empty() ? "" : " ") + num(sx(t)) + "," + num(sy(z_min));
        }
        svg += "<polyline id=\"z-min\" points=\"" + floor +
               "\" fill=\"none\" stroke=\"red\" stroke-dasharray=\"4 3\" stroke-width=\"1.5\"/>\n";
        svg += "<polyline id=\"altitude\" points=\"" + alt + "\" fill=\"none\" stroke=\"navy\" stroke-width=\"2\"/>\n";
        svg += "<g font-family=\"sans-serif\" font-size=\"11\">\n";
        svg += "<text x=\"" + num(layout.margin) + "\" y=\"" + num(strip_top + strip_h + 14) + "\">" + num(t0) +
               " s</text>\n";
        svg += "<text x=\"" + num(layout.margin + strip_w - 40) + "\" y=\"" + num(strip_top + strip_h + 14) + "\">" +
               num(t1) + " s</text>\n";
        svg += "<text x=\"" + num(layout.margin + strip_w + 4) + "\" y=\"" + num(strip_top + 10) + "\">" + num(z_top) +
               " m</text>\n";
        svg += "</g>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace semland
