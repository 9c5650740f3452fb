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

#include "semland/semantics.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"

namespace semland {

namespace {

constexpr const char* kPromptTemplate = R"PROMPT(You are a drone safety metadata extractor. Do NOT read any free text.
From the context, pull exactly two fields:
  • Classification: `yes' or `no'
  • Minimum Altitude: a float (strip `meters')

Context:
{context_str}

Examples:
Context: [Classification: no | Minimum Altitude: 0.0 meters | Text: brick building]
Q: a room with tree on the floor?
A: ```json
{"is_dynamic": "no", "z_min": 0.0}

Return only JSON:
```json
{
  "is_dynamic": "{Classification}",
  "z_min": {Minimum_Altitude}
}
```)PROMPT";

constexpr const char* kContextPrefix = "[Classification: ";

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// Strict decimal parse of the whole string.
std::optional<double> parse_double(const std::string& s) {
    const std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
    return v;
}

// Span of the first balanced {...} (string literals respected), or npos.
std::pair<std::size_t, std::size_t> first_object(const std::string& raw) {
    const std::size_t start = raw.find('{');
    if (start == std::string::npos) return {std::string::npos, 0};
    int depth = 0;
    bool in_string = false, escaped = false;
    for (std::size_t i = start; i < raw.size(); ++i) {
        const char c = raw[i];
        if (in_string) {
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}' && --depth == 0) return {start, i - start + 1};
    }
    return {std::string::npos, 0};
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) && c < 128) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

double dot(const SparseVec& a, const SparseVec& b) {
    double s = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i].first == b[j].first) s += a[i++].second * b[j++].second;
        else if (a[i].first < b[j].first) ++i;
        else ++j;
    }
    return s;
}

SparseVec vectorize(const KnowledgeBase& kb, const std::vector<std::string>& tokens) {
    std::map<int, double> tf;
    for (const auto& t : tokens) {
        const auto it = kb.vocabulary.find(t);
        if (it != kb.vocabulary.end()) tf[it->second] += 1.0;
    }
    SparseVec v;
    double norm = 0.0;
    for (const auto& [id, count] : tf) {
        const double w = count * kb.idf[id];
        v.emplace_back(id, w);
        norm += w * w;
    }
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (auto& e : v) e.second /= norm;
    }
    return v;
}

KnowledgeBase index(std::vector<KnowledgeEntry> entries) {
    if (entries.empty()) throw EmptyKnowledgeBase();
    KnowledgeBase kb;
    std::vector<std::pair<int, std::vector<std::string>>> docs;
    for (std::size_t e = 0; e < entries.size(); ++e) {
        const KnowledgeEntry& entry = entries[e];
        if (entry.keywords.empty()) throw std::invalid_argument("entry '" + entry.class_name + "' has no keywords");
        if (!(entry.min_safe_altitude >= 0.0) || !(entry.buffer_radius >= 0.0)) {
            throw std::invalid_argument("entry '" + entry.class_name + "' has a negative altitude or buffer");
        }
        std::vector<std::vector<std::string>> kw;
        for (const auto& k : entry.keywords) {
            auto toks = tokenize(k);
            if (toks.empty()) throw std::invalid_argument("keyword without alphanumeric characters");
            kw.push_back(std::move(toks));
        }
        kb.keyword_tokens.push_back(std::move(kw));

        std::string doc = entry.class_name;
        for (const auto& k : entry.keywords) doc += " " + k;
        doc += " " + entry.text;
        const auto tokens = tokenize(doc);
        for (std::size_t s = 0; s < tokens.size(); s += kChunkTokens) {
            const auto end = std::min(tokens.size(), s + kChunkTokens);
            docs.emplace_back(static_cast<int>(e), std::vector<std::string>(tokens.begin() + s, tokens.begin() + end));
        }
    }
    // vocabulary in lexicographic order keeps term ids stable
    std::set<std::string> terms;
    for (const auto& d : docs) terms.insert(d.second.begin(), d.second.end());
    for (const auto& t : terms) kb.vocabulary.emplace(t, static_cast<int>(kb.vocabulary.size()));

    std::vector<double> df(kb.vocabulary.size(), 0.0);
    for (const auto& d : docs) {
        std::set<int> seen;
        for (const auto& t : d.second) seen.insert(kb.vocabulary.at(t));
        for (int id : seen) {
            df[id] += 1.0;
            auto& ids = kb.inverted[id];
            if (ids.empty() || ids.back() != d.first) ids.push_back(d.first);
        }
    }
    const double n = static_cast<double>(docs.size());
    kb.idf.resize(df.size());
    for (std::size_t i = 0; i < df.size(); ++i) kb.idf[i] = std::log((1.0 + n) / (1.0 + df[i])) + 1.0;
    for (const auto& d : docs) kb.chunks.push_back({d.first, vectorize(kb, d.second)});
    kb.entries = std::move(entries);
    return kb;
}

std::vector<Retrieved> retrieve(const KnowledgeBase& kb, const std::string& caption, int k, double alpha) {
    if (kb.entries.empty()) throw EmptyKnowledgeBase();
    const auto tokens = tokenize(caption);
    const SparseVec q = vectorize(kb, tokens);
    const std::set<std::string> present(tokens.begin(), tokens.end());

    std::vector<Retrieved> scored(kb.entries.size());
    for (std::size_t e = 0; e < kb.entries.size(); ++e) scored[e].entry = static_cast<int>(e);
    for (const auto& chunk : kb.chunks) {
        scored[chunk.entry].cosine = std::max(scored[chunk.entry].cosine, dot(q, chunk.vec));
    }
    for (std::size_t e = 0; e < kb.entries.size(); ++e) {
        const auto& kws = kb.keyword_tokens[e];
        int hits = 0;
        for (const auto& kw : kws) {
            if (std::all_of(kw.begin(), kw.end(), [&](const std::string& t) { return present.count(t) > 0; })) ++hits;
        }
        scored[e].keyword = static_cast<double>(hits) / static_cast<double>(kws.size());
        scored[e].score = alpha * scored[e].cosine + (1.0 - alpha) * scored[e].keyword;
    }
    std::stable_sort(scored.begin(), scored.end(), [](const Retrieved& a, const Retrieved& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.entry < b.entry;
    });
    scored.resize(std::min<std::size_t>(std::max(k, 1), scored.size()));
    return scored;
}

std::string format_number(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    std::string s(buf, ec == std::errc() ? ptr : buf);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

std::string context_line(const KnowledgeEntry& entry) {
    return std::string(kContextPrefix) + (entry.is_dynamic ? "yes" : "no") + " | Minimum Altitude: " +
           format_number(entry.min_safe_altitude) + " meters | Text: " + entry.text + "]";
}

std::string build_prompt(const std::string& caption, const std::vector<const KnowledgeEntry*>& retrieved) {
    std::string context;
    for (std::size_t i = 0; i < retrieved.size(); ++i) {
        if (i > 0) context += "\n";
        context += context_line(*retrieved[i]);
    }
    std::string prompt = kPromptTemplate;
    const std::string slot = "{context_str}";
    prompt.replace(prompt.find(slot), slot.size(), context);
    prompt += "\n\nQ: " + caption + "\nA:";
    return prompt;
}

std::string build_prompt(const KnowledgeBase& kb, const std::string& caption, const std::vector<Retrieved>& retrieved) {
    std::vector<const KnowledgeEntry*> entries;
    for (const auto& r : retrieved) entries.push_back(&kb.entries.at(r.entry));
    return build_prompt(caption, entries);
}

const char* to_string(SpecSource source) { return source == SpecSource::Backend ? "backend" : "fallback"; }

SafetySpec parse_response(const std::string& raw, const ParseLimits& limits) {
    const auto [start, len] = first_object(raw);
    if (start == std::string::npos) throw MalformedOutput("no JSON object");
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(raw.substr(start, len));
    } catch (const nlohmann::json::exception& e) {
        throw MalformedOutput(std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object() || obj.size() != 2 || !obj.contains("is_dynamic") || !obj.contains("z_min")) {
        throw MalformedOutput("expected exactly the keys is_dynamic and z_min");
    }
    const auto& dyn = obj["is_dynamic"];
    if (!dyn.is_string()) throw MalformedOutput("is_dynamic is not a string");
    const std::string flag = lower(trim(dyn.get<std::string>()));
    if (flag != "yes" && flag != "no") throw MalformedOutput("is_dynamic must be yes or no");

    const auto& z = obj["z_min"];
    double z_min = 0.0;
    if (z.is_number()) {
        z_min = z.get<double>();
    } else if (z.is_string()) {
        const auto parsed = parse_double(z.get<std::string>());
        if (!parsed) throw MalformedOutput("z_min string is not numeric");
        z_min = *parsed;
    } else {
        throw MalformedOutput("z_min is not numeric");
    }
    if (!std::isfinite(z_min) || std::abs(z_min) > 2.0 * limits.z_max) throw MalformedOutput("z_min out of range");

    SafetySpec spec;
    spec.is_dynamic = flag == "yes";
    spec.z_min = std::clamp(z_min, 0.0, limits.z_max);
    spec.source = SpecSource::Backend;
    return spec;
}

std::string DeterministicBackend::infer(const std::string& prompt, double /*deadline_s*/) {
    std::istringstream in(prompt);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind(kContextPrefix, 0) != 0) continue;
        const std::string body = line.substr(std::char_traits<char>::length(kContextPrefix));
        const bool dynamic = body.rfind("yes", 0) == 0;
        const std::string alt_key = "Minimum Altitude: ";
        const auto a = body.find(alt_key);
        double z = 0.0;
        if (a != std::string::npos) {
            const auto b = body.find(" meters", a);
            if (const auto v = parse_double(body.substr(a + alt_key.size(), b - a - alt_key.size()))) z = *v;
        }
        return std::string("{\"is_dynamic\": \"") + (dynamic ? "yes" : "no") + "\", \"z_min\": " + format_number(z) + "}";
    }
    return "";
}

std::string MalformedBackend::infer(const std::string& /*prompt*/, double /*deadline_s*/) {
    return "The area looks safe to land.";
}

NoisyBackend::NoisyBackend(std::uint64_t seed, double p_noise, double z_max)
    : rng_(seed), p_noise_(p_noise), z_max_(z_max) {}

std::string NoisyBackend::infer(const std::string& prompt, double deadline_s) {
    if (uniform01(rng_) >= p_noise_) return DeterministicBackend().infer(prompt, deadline_s);
    if (uniform01(rng_) < 0.5) {
        static const char* kGarbage[] = {
            "The area looks safe to land.",
            "```json\n{\"is_dynamic\": \"ye",
            "{\"dynamic\": \"yes\", \"altitude\": 2}",
            "{\"is_dynamic\": \"maybe\", \"z_min\": 1.0}",
        };
        return kGarbage[rng_() % 4];
    }
    const bool dynamic = uniform01(rng_) < 0.5;
    const double z = std::round(uniform01(rng_) * z_max_ * 10.0) / 10.0;
    return std::string("{\"is_dynamic\": \"") + (dynamic ? "yes" : "no") + "\", \"z_min\": " + format_number(z) + "}";
}

std::optional<SafetySpec> infer_safety(const KnowledgeBase& kb, const std::string& caption, ReasonerBackend& backend,
                                       const InferOptions& options, double issued_at) {
    const auto top = retrieve(kb, caption, options.top_k, options.alpha);
    const KnowledgeEntry& best = kb.entries.at(top.front().entry);
    const std::string prompt = build_prompt(kb, caption, top);
    SafetySpec spec;
    try {
        spec = parse_response(backend.infer(prompt, options.deadline_s), options.limits);
    } catch (const std::exception&) {
        // MalformedOutput, Timeout, TransportError, or anything else the backend threw
        if (!options.fallback) return std::nullopt;
        spec.is_dynamic = best.is_dynamic;
        spec.z_min = std::clamp(best.min_safe_altitude, 0.0, options.limits.z_max);
        spec.source = SpecSource::Fallback;
    }
    spec.buffer_radius = std::clamp(best.buffer_radius, 0.0, 10.0);
    spec.matched_class = best.class_name;
    spec.issued_at = issued_at;
    return spec;
}

}  // namespace semland
