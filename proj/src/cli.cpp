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

#include "semland/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "semland/io.hpp"
#include "semland/plot.hpp"
#include "semland/search.hpp"
#include "semland/sim.hpp"

namespace semland {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
}

double env_double(const char* name, const std::string& value) {
    try {
        std::size_t used = 0;
        const double d = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return d;
    } catch (const std::exception&) {
        throw UsageError(std::string(name) + " is not a number: '" + value + "'");
    }
}

std::string default_kb_path() { return std::string(SEMLAND_DATA_DIR) + "/kb/default_kb.json"; }

// Options shared by trial and experiment; empty means "not given on the command line".
struct RunOptions {
    std::string scenario;
    std::string kb;
    std::string backend;
    std::optional<double> latency_ms;
    std::uint64_t seed{0};
    bool seed_given{false};
    std::string out_dir;
    bool plot{false};
};

void add_run_options(CLI::App* app, RunOptions& o) {
    app->add_option("--scenario", o.scenario, "scenario JSON file")->required();
    app->add_option("--kb", o.kb, "knowledge base JSON (default: SEMLAND_KB or the bundled KB)");
    app->add_option("--backend", o.backend, "deterministic | remote | malformed | noisy (default: SEMLAND_BACKEND)");
    app->add_option("--latency-ms", o.latency_ms, "injected reasoning latency (default: SEMLAND_LATENCY_MS or scenario)")
        ->check(CLI::NonNegativeNumber);
    app->add_option("--seed", o.seed, "base seed (default: SEMLAND_SEED or scenario)");
    app->add_option("--out-dir", o.out_dir, "directory for result files");
    app->add_flag("--plot", o.plot, "also render SVG plots of the traces");
}

struct Resolved {
    Scenario scenario;
    KnowledgeBase kb;
    PipelineConfig config;
    std::uint64_t seed{0};
    bool noisy{false};
};

// flags > SEMLAND_* environment > scenario file
Resolved resolve(RunOptions& o, CLI::App* app) {
    Resolved r;
    r.scenario = io::load_scenario(o.scenario);
    const std::string kb_path = !o.kb.empty() ? o.kb : env("SEMLAND_KB").value_or(default_kb_path());
    r.kb = make_kb(io::load_kb(kb_path), r.scenario);

    r.config = PipelineConfig::defaults();
    const std::string backend = !o.backend.empty() ? o.backend : env("SEMLAND_BACKEND").value_or("deterministic");
    if (backend == "deterministic") r.config.backend = BackendKind::Deterministic;
    else if (backend == "malformed") r.config.backend = BackendKind::Malformed;
    else if (backend == "noisy") r.noisy = true;
    else if (backend == "remote") {
        r.config.backend = BackendKind::Remote;
        r.config.remote = RemoteConfig::from_env();
        if (r.config.remote.url.empty()) throw UsageError("remote backend needs SEMLAND_LLM_URL");
        if (r.config.remote.temperature < 0.0 || r.config.remote.temperature > 0.5) {
            throw UsageError("SEMLAND_LLM_TEMPERATURE must lie in [0, 0.5]");
        }
    } else {
        throw UsageError("unknown backend '" + backend + "'");
    }

    if (o.latency_ms) {
        r.config.latency = *o.latency_ms / 1000.0;
    } else if (const auto v = env("SEMLAND_LATENCY_MS")) {
        const double ms = env_double("SEMLAND_LATENCY_MS", *v);
        if (ms < 0.0) throw UsageError("SEMLAND_LATENCY_MS must be non-negative");
        r.config.latency = ms / 1000.0;
    }

    if (app->count("--seed") > 0) {
        r.seed = o.seed;
    } else if (const auto v = env("SEMLAND_SEED")) {
        try {
            r.seed = std::stoull(*v);
        } catch (const std::exception&) {
            throw UsageError("SEMLAND_SEED is not an unsigned integer: '" + *v + "'");
        }
    } else {
        r.seed = r.scenario.seed;
    }
    return r;
}

void ensure_dir(const std::string& dir) {
    if (dir.empty()) return;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io::IoError("cannot create " + dir + ": " + ec.message());
}

void render(const std::string& trace, const std::string& svg) { io::write_text(svg, plot_trace(read_trace(trace))); }

Variant parse_variant(const std::string& s) {
    try {
        return variant_from_string(s);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

StartState start_from(const json& j) {
    StartState s;
    s.p = io::vec3_from(j.at("p"));
    if (j.contains("v")) s.v = io::vec3_from(j.at("v"));
    s.yaw = j.value("yaw", 0.0);
    return s;
}

PlannerConfig planner_from(const json& j, PlannerConfig c) {
    c.a_max = j.value("a_max", c.a_max);
    c.v_max = j.value("v_max", c.v_max);
    c.tau = j.value("tau", c.tau);
    c.rho = j.value("rho", c.rho);
    c.lambda = j.value("lambda", c.lambda);
    c.goal_tol = j.value("goal_tol", c.goal_tol);
    c.max_expansions = j.value("max_expansions", c.max_expansions);
    c.heuristic_weight = j.value("heuristic_weight", c.heuristic_weight);
    c.sample_dt = j.value("sample_dt", c.sample_dt);
    return c;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Semantic landing planner: search, MPC tracking and closed-loop trials", "semland"};
    app.require_subcommand(1);

    // plan
    std::string plan_in, plan_out;
    auto* plan_cmd = app.add_subcommand("plan", "plan a reference trajectory from a request JSON");
    plan_cmd->add_option("--input", plan_in, "request with corridor, unsafe, start, goal")->required();
    plan_cmd->add_option("--out", plan_out, "trajectory JSON (default: stdout)");

    // trial
    RunOptions trial_opts;
    std::string trial_variant = "full";
    auto* trial_cmd = app.add_subcommand("trial", "run one seeded closed-loop trial");
    add_run_options(trial_cmd, trial_opts);
    trial_cmd->add_option("--variant", trial_variant, "baseline | noisy | full");

    // experiment
    RunOptions exp_opts;
    int trials = 50;
    int jobs = 1;
    std::vector<std::string> variants = {"baseline", "noisy", "full"};
    bool traces = false;
    auto* exp_cmd = app.add_subcommand("experiment", "Monte Carlo comparison of pipeline variants");
    add_run_options(exp_cmd, exp_opts);
    exp_cmd->add_option("--trials", trials, "trials per variant")->check(CLI::PositiveNumber);
    exp_cmd->add_option("--jobs", jobs, "parallel trials")->check(CLI::PositiveNumber);
    exp_cmd->add_option("--variants", variants, "variants to run")->delimiter(',');
    exp_cmd->add_flag("--traces", traces, "write per-trial traces into --out-dir");

    // kb
    auto* kb_cmd = app.add_subcommand("kb", "inspect knowledge-base retrieval");
    kb_cmd->require_subcommand(1);
    std::string kb_path;
    std::string caption;
    int top_k = 3;
    auto* kb_index = kb_cmd->add_subcommand("index", "index a KB and print its statistics");
    kb_index->add_option("--kb", kb_path, "knowledge base JSON");
    auto* kb_query = kb_cmd->add_subcommand("query", "rank KB entries for a caption");
    kb_query->add_option("--kb", kb_path, "knowledge base JSON");
    kb_query->add_option("--caption", caption, "caption text")->required();
    kb_query->add_option("--k", top_k, "entries to show")->check(CLI::PositiveNumber);

    // plot
    std::string trace_in, svg_out;
    auto* plot_cmd = app.add_subcommand("plot", "render a trial trace as SVG");
    plot_cmd->add_option("--trace", trace_in, "trace JSON-lines file")->required();
    plot_cmd->add_option("--out", svg_out, "SVG file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "semland: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (plan_cmd->parsed()) {
            const json req = io::read_json(plan_in);
            const Corridor corridor = io::corridor_from(req.at("corridor"));
            std::vector<UnsafeRegion> unsafe;
            for (const auto& u : req.value("unsafe", json::array())) unsafe.push_back(io::unsafe_from(u));
            PlannerConfig cfg;
            cfg.heuristic_weight = 2.0;
            cfg = planner_from(req.value("planner", json::object()), cfg);
            const ReferenceTrajectory traj =
                plan(start_from(req.at("start")), io::vec3_from(req.at("goal")), corridor, unsafe, cfg);
            const std::string text = io::to_json(traj).dump(2) + "\n";
            if (plan_out.empty()) out << text;
            else io::write_text(plan_out, text);
            return kExitOk;
        }

        if (trial_cmd->parsed()) {
            Resolved r = resolve(trial_opts, trial_cmd);
            r.config.variant = r.noisy ? Variant::NoisyReasoner : parse_variant(trial_variant);
            ensure_dir(trial_opts.out_dir);
            const std::string stem = std::string(to_string(r.config.variant)) + "_" + std::to_string(r.seed);
            if (!trial_opts.out_dir.empty()) r.config.trace_path = trial_opts.out_dir + "/" + stem + ".jsonl";
            const TrialResult result = run_trial(r.scenario, r.seed, r.config, r.kb);
            const std::string text = io::to_json(result).dump(2) + "\n";
            out << text;
            if (!trial_opts.out_dir.empty()) {
                io::write_text(trial_opts.out_dir + "/" + stem + ".json", text);
                if (trial_opts.plot) render(r.config.trace_path, trial_opts.out_dir + "/" + stem + ".svg");
            } else if (trial_opts.plot) {
                throw UsageError("--plot needs --out-dir");
            }
            return kExitOk;
        }

        if (exp_cmd->parsed()) {
            Resolved r = resolve(exp_opts, exp_cmd);
            std::vector<Variant> vs;
            for (const auto& v : variants) vs.push_back(parse_variant(v));
            if (r.noisy) throw UsageError("experiment runs the noisy variant itself; pick the Full backend instead");
            if ((traces || exp_opts.plot) && exp_opts.out_dir.empty()) throw UsageError("--traces/--plot need --out-dir");
            ensure_dir(exp_opts.out_dir);
            const std::string trace_dir = traces || exp_opts.plot ? exp_opts.out_dir : "";
            const ExperimentResult res = run_experiment(r.scenario, trials, r.seed, vs, r.config, r.kb, jobs, trace_dir);
            const std::string csv = metrics_csv(res.metrics);
            out << csv;
            if (!exp_opts.out_dir.empty()) {
                io::write_text(exp_opts.out_dir + "/metrics.csv", csv);
                json all = json::array();
                for (const auto& t : res.trials) all.push_back(io::to_json(t));
                io::write_text(exp_opts.out_dir + "/trials.json", all.dump(2) + "\n");
                if (exp_opts.plot) {
                    for (const auto& t : res.trials) {
                        const std::string trace = t.trace_path;
                        render(trace, trace.substr(0, trace.size() - 6) + ".svg");
                    }
                }
            }
            return kExitOk;
        }

        if (kb_cmd->parsed()) {
            if (kb_path.empty()) kb_path = env("SEMLAND_KB").value_or(default_kb_path());
            const KnowledgeBase kb = index(io::load_kb(kb_path));
            if (kb_index->parsed()) {
                out << "entries " << kb.entries.size() << "\nchunks " << kb.chunks.size() << "\nvocabulary "
                    << kb.vocabulary.size() << '\n';
                for (std::size_t i = 0; i < kb.entries.size(); ++i) {
                    const auto& e = kb.entries[i];
                    out << i << ' ' << e.class_name << " dynamic=" << (e.is_dynamic ? "yes" : "no")
                        << " z_min=" << format_number(e.min_safe_altitude)
                        << " buffer=" << format_number(e.buffer_radius) << '\n';
                }
            } else {
                char buf[160];
                for (const auto& hit : retrieve(kb, caption, top_k)) {
                    std::snprintf(buf, sizeof(buf), "%-14s score=%.4f cosine=%.4f keyword=%.4f\n",
                                  kb.entries[hit.entry].class_name.c_str(), hit.score, hit.cosine, hit.keyword);
                    out << buf;
                }
            }
            return kExitOk;
        }

        if (plot_cmd->parsed()) {
            const std::string svg = plot_trace(read_trace(trace_in));
            if (svg_out.empty()) out << svg;
            else io::write_text(svg_out, svg);
            return kExitOk;
        }
    } catch (const UsageError& e) {
        err << "semland: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ScenarioInfeasible& e) {
        err << "semland: infeasible: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const PlanningError& e) {
        err << "semland: planning failed: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const FullyBlocked& e) {
        err << "semland: planning failed: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const io::IoError& e) {
        err << "semland: " << e.what() << '\n';
        return kExitIo;
    } catch (const MalformedTrace& e) {
        err << "semland: " << e.what() << '\n';
        return kExitIo;
    } catch (const EmptyKnowledgeBase& e) {
        err << "semland: " << e.what() << '\n';
        return kExitIo;
    } catch (const json::exception& e) {
        err << "semland: bad input: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::invalid_argument& e) {
        err << "semland: invalid input: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::runtime_error& e) {
        // unreadable trace files and similar
        err << "semland: " << e.what() << '\n';
        return kExitIo;
    }
    return kExitUsage;
}

}  // namespace semland
