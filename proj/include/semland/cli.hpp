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

// Command-line front end: plan, trial, experiment, kb, plot.

#pragma once

#include <iosfwd>

namespace semland {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 2,
    kExitInfeasible = 3,
    kExitIo = 4,
};

/// Runs one command line. Diagnostics go to `err` as a single line.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace semland
