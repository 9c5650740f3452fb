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

// JSON files: scenarios, knowledge bases, corridors, unsafe sets, trajectories.

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "semland/geometry.hpp"
#include "semland/search.hpp"
#include "semland/semantics.hpp"
#include "semland/sim.hpp"

namespace semland::io {

using nlohmann::json;

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad shape or values inside a parseable file.
class SchemaError : public IoError {
public:
    using IoError::IoError;
};

json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

json to_json(const Eigen::Vector3d& v);
Eigen::Vector3d vec3_from(const json& j);

json to_json(const AxisBox& box);
AxisBox box_from(const json& j);

json to_json(const Polytope& poly);

json to_json(const UnsafeRegion& r);
UnsafeRegion unsafe_from(const json& j);

json to_json(const Corridor& c);
Corridor corridor_from(const json& j);

json to_json(const ReferenceTrajectory& traj);
ReferenceTrajectory trajectory_from(const json& j);

json to_json(const SafetySpec& spec);
json to_json(const KnowledgeEntry& e);
KnowledgeEntry knowledge_entry_from(const json& j);
std::vector<KnowledgeEntry> load_kb(const std::filesystem::path& path);

json to_json(const DynamicsParams& p);
DynamicsParams dynamics_from(const json& j);

json to_json(const Scenario& s);
Scenario scenario_from(const json& j);
Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& s, const std::filesystem::path& path);

json to_json(const TrialResult& r);

}  // namespace semland::io
