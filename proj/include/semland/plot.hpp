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

// SVG rendering of a trial trace: top-down view plus an altitude strip.

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace semland {

class MalformedTrace : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Fixed page geometry; the world-to-page transform is exposed for tests.
struct PlotLayout {
    double width{720.0};
    double height{900.0};
    double margin{40.0};
    double map_size{640.0};    ///< square top-down panel
    double strip_height{160.0};
    double pad_m{1.0};         ///< world padding around the data

    [[nodiscard]] double strip_top() const { return margin + map_size + 40.0; }
};

struct MapTransform {
    double x_min{0.0}, y_max{0.0}, scale{1.0};
    double left{0.0}, top{0.0};

    [[nodiscard]] double px(double x) const { return left + (x - x_min) * scale; }
    [[nodiscard]] double py(double y) const { return top + (y_max - y) * scale; }
};

/// Square world window around every plotted xy point, padded by pad_m.
MapTransform map_transform(const std::vector<nlohmann::json>& records, const PlotLayout& layout = {});

std::vector<nlohmann::json> read_trace(const std::filesystem::path& path);
std::string plot_trace(const std::vector<nlohmann::json>& records, const PlotLayout& layout = {});

}  // namespace semland
