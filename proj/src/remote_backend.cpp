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

#include <cstdlib>
#include <utility>

#include "httplib.h"
#include "json.hpp"
#include "semland/semantics.hpp"

namespace semland {

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

// "http://host:port/path" -> {"http://host:port", "/path"}
std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme = url.find("://");
    const auto path = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path == std::string::npos) return {url, "/v1/chat/completions"};
    return {url.substr(0, path), url.substr(path)};
}

}  // namespace

RemoteConfig RemoteConfig::from_env() {
    RemoteConfig c;
    c.url = env_or("SEMLAND_LLM_URL", "");
    c.model = env_or("SEMLAND_LLM_MODEL", c.model);
    const std::string t = env_or("SEMLAND_LLM_TEMPERATURE", "");
    if (!t.empty()) c.temperature = std::stod(t);
    return c;
}

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
    if (config_.url.empty()) throw std::invalid_argument("remote backend needs an endpoint URL");
    if (config_.temperature < 0.0 || config_.temperature > 0.5) {
        throw std::invalid_argument("remote backend temperature must lie in [0, 0.5]");
    }
}

std::string RemoteBackend::request_body(const std::string& prompt) const {
    const auto nl = prompt.find('\n');
    const std::string system = prompt.substr(0, nl);
    const std::string user = nl == std::string::npos ? std::string() : prompt.substr(nl + 1);
    nlohmann::json body = {
        {"model", config_.model},
        {"messages", nlohmann::json::array({{{"role", "system"}, {"content", system}},
                                            {{"role", "user"}, {"content", user}}})},
        {"temperature", config_.temperature},
        {"max_tokens", config_.max_tokens},
        {"stream", false},
    };
    return body.dump();
}

std::string RemoteBackend::infer(const std::string& prompt, double deadline_s) {
    const auto [host, path] = split_url(config_.url);
    httplib::Client client(host);
    const auto sec = static_cast<time_t>(deadline_s);
    const auto usec = static_cast<time_t>((deadline_s - static_cast<double>(sec)) * 1e6);
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);
    const auto res = client.Post(path, request_body(prompt), "application/json");
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout || err == httplib::Error::Write) {
            throw Timeout();
        }
        throw TransportError("request failed: " + httplib::to_string(err));
    }
    if (res->status != 200) throw TransportError("HTTP status " + std::to_string(res->status));
    try {
        const auto reply = nlohmann::json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("unexpected reply: ") + e.what());
    }
}

}  // namespace semland
