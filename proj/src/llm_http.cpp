#include "tsc/llm.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cmath>

namespace tsc {

HttpChatBackend::HttpChatBackend(std::string base_url, std::string path, std::string auth_token)
    : base_url_(std::move(base_url)), path_(std::move(path)), auth_token_(std::move(auth_token)) {
    if (base_url_.empty()) {
        throw ConfigError("LLM endpoint URL is not set");
    }
    if (path_.empty() || path_.front() != '/') {
        path_.insert(path_.begin(), '/');
    }
}

std::string HttpChatBackend::request_body(const LLMRequest& request) {
    nlohmann::ordered_json body;
    body["model"] = request.model;
    body["messages"] = nlohmann::ordered_json::array();
    for (const auto& m : request.messages) {
        body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    }
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_tokens;
    return body.dump();
}

std::string HttpChatBackend::extract_content(const std::string& response_body) {
    try {
        const auto doc = nlohmann::json::parse(response_body);
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("malformed chat response: ") + e.what());
    }
}

std::string HttpChatBackend::complete(const LLMRequest& request) {
    httplib::Client client(base_url_);
    const auto secs = static_cast<time_t>(request.timeout_seconds);
    const auto usecs = static_cast<time_t>((request.timeout_seconds - std::floor(request.timeout_seconds)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (!auth_token_.empty()) {
        headers.emplace("Authorization", "Bearer " + auth_token_);
    }
    const auto res = client.Post(path_, headers, request_body(request), "application/json");
    if (!res) {
        const auto err = res.error();
        const auto msg = "LLM request failed: " + httplib::to_string(err);
        if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
            throw BackendTimeout(msg);
        }
        throw BackendError(msg);
    }
    if (res->status != 200) {
        throw BackendError("LLM endpoint returned HTTP " + std::to_string(res->status));
    }
    return extract_content(res->body);
}

std::unique_ptr<Backend> HttpChatBackend::clone_with_seed(std::uint64_t) const {
    return std::make_unique<HttpChatBackend>(base_url_, path_, auth_token_);
}

} // namespace tsc
