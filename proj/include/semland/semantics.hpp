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

// Perception-side reasoning: knowledge-base retrieval, prompt assembly,
// strict output parsing with a grounded fallback, and inference backends.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace semland {

struct KnowledgeEntry {
    std::string class_name;
    std::vector<std::string> keywords;
    bool is_dynamic{false};
    double min_safe_altitude{0.0};  ///< m
    double buffer_radius{0.0};      ///< m
    std::string text;
};

class EmptyKnowledgeBase : public std::runtime_error {
public:
    EmptyKnowledgeBase() : std::runtime_error("knowledge base is empty") {}
};

class MalformedOutput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class Timeout : public BackendError {
public:
    Timeout() : BackendError("backend missed its deadline") {}
};
class TransportError : public BackendError {
public:
    using BackendError::BackendError;
};

/// Sparse tf-idf vector, sorted by term id.
using SparseVec = std::vector<std::pair<int, double>>;

struct KnowledgeBase {
    std::vector<KnowledgeEntry> entries;
    std::map<std::string, int> vocabulary;
    std::vector<double> idf;
    /// term id -> ids of the entries containing it
    std::map<int, std::vector<int>> inverted;
    /// Chunks of entry text; long entries are split every kChunkTokens tokens.
    struct Chunk {
        int entry;
        SparseVec vec;
    };
    std::vector<Chunk> chunks;
    /// Normalized keyword token lists per entry.
    std::vector<std::vector<std::vector<std::string>>> keyword_tokens;
};

inline constexpr int kChunkTokens = 512;

/// Lowercase alphanumeric runs.
std::vector<std::string> tokenize(const std::string& text);

KnowledgeBase index(std::vector<KnowledgeEntry> entries);

struct Retrieved {
    int entry{0};
    double score{0.0};
    double cosine{0.0};
    double keyword{0.0};
};

/// Hybrid score alpha*cosine + (1-alpha)*keyword overlap, best first, ties by id.
std::vector<Retrieved> retrieve(const KnowledgeBase& kb, const std::string& caption, int k = 3,
                                double alpha = 0.5);

double dot(const SparseVec& a, const SparseVec& b);
SparseVec vectorize(const KnowledgeBase& kb, const std::vector<std::string>& tokens);

/// Shortest decimal form that always keeps a fractional part ("0.0", "1.5").
std::string format_number(double v);

std::string context_line(const KnowledgeEntry& entry);
std::string build_prompt(const std::string& caption, const std::vector<const KnowledgeEntry*>& retrieved);
std::string build_prompt(const KnowledgeBase& kb, const std::string& caption, const std::vector<Retrieved>& retrieved);

enum class SpecSource { Backend, Fallback };
const char* to_string(SpecSource source);

struct SafetySpec {
    bool is_dynamic{false};
    double z_min{0.0};
    double buffer_radius{0.0};
    std::string matched_class;
    SpecSource source{SpecSource::Backend};
    double issued_at{0.0};
};

struct ParseLimits {
    double z_max{10.0};
};

/// First balanced JSON object in `raw`; exactly {is_dynamic: "yes"|"no", z_min}.
SafetySpec parse_response(const std::string& raw, const ParseLimits& limits = {});

class ReasonerBackend {
public:
    virtual ~ReasonerBackend() = default;
    /// Raw model text. Throws Timeout or TransportError.
    virtual std::string infer(const std::string& prompt, double deadline_s) = 0;
};

/// Reads the first context line of its own prompt and answers from it.
class DeterministicBackend : public ReasonerBackend {
public:
    std::string infer(const std::string& prompt, double deadline_s) override;
};

/// Always answers with prose, never JSON.
class MalformedBackend : public ReasonerBackend {
public:
    std::string infer(const std::string& prompt, double deadline_s) override;
};

/// With probability `p_noise` emits either unparseable text or a well-formed
/// answer with random fields; otherwise behaves like DeterministicBackend.
class NoisyBackend : public ReasonerBackend {
public:
    NoisyBackend(std::uint64_t seed, double p_noise = 0.5, double z_max = 10.0);
    std::string infer(const std::string& prompt, double deadline_s) override;

private:
    std::mt19937_64 rng_;
    double p_noise_;
    double z_max_;
};

struct RemoteConfig {
    std::string url;  ///< e.g. http://127.0.0.1:8080/v1/chat/completions
    std::string model{"default"};
    double temperature{0.2};
    int max_tokens{20};

    /// SEMLAND_LLM_URL, SEMLAND_LLM_MODEL, SEMLAND_LLM_TEMPERATURE.
    static RemoteConfig from_env();
};

/// Chat-completion client. The first prompt line is sent as the system
/// message, the remainder as the user message.
class RemoteBackend : public ReasonerBackend {
public:
    explicit RemoteBackend(RemoteConfig config);
    std::string infer(const std::string& prompt, double deadline_s) override;
    [[nodiscard]] std::string request_body(const std::string& prompt) const;

private:
    RemoteConfig config_;
};

struct InferOptions {
    double deadline_s{2.0};
    ParseLimits limits;
    bool fallback{true};
    int top_k{3};
    double alpha{0.5};
};

/// retrieve -> prompt -> backend -> parse. With fallback on, a malformed or
/// late answer is replaced by the top entry; the result is then always set.
std::optional<SafetySpec> infer_safety(const KnowledgeBase& kb, const std::string& caption,
                                       ReasonerBackend& backend, const InferOptions& options = {},
                                       double issued_at = 0.0);

}  // namespace semland
