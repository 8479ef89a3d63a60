#include "hetgraph/prompting.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>

namespace hetgraph {

HttpChatClient::HttpChatClient(HttpClientConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw UsageError("HTTP client needs an endpoint");
    if (config_.model.empty()) throw UsageError("HTTP client needs a model tag");
    const char* token = std::getenv(config_.token_env.c_str());
    if (!token || !*token) throw UsageError("environment variable " + config_.token_env + " is not set");
    token_ = token;

    const auto scheme_end = config_.endpoint.find("://");
    if (scheme_end == std::string::npos) throw UsageError("endpoint must start with http:// or https://");
    const auto path_start = config_.endpoint.find('/', scheme_end + 3);
    scheme_host_ = config_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
}

std::string HttpChatClient::request_body(const std::string& prompt) const {
    nlohmann::json body = {{"model", config_.model},
                           {"temperature", config_.temperature},
                           {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
    return body.dump();
}

std::string HttpChatClient::parse_response(const std::string& body) {
    const auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) throw TransportError("response is not JSON");
    try {
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw TransportError("response has no choices[0].message.content");
    }
}

std::string HttpChatClient::complete(const std::string& prompt) {
    httplib::Client cli(scheme_host_);
    cli.set_connection_timeout(config_.timeout_seconds);
    cli.set_read_timeout(config_.timeout_seconds);
    cli.set_bearer_token_auth(token_);
    const auto res = cli.Post(path_, request_body(prompt), "application/json");
    if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw TransportError("HTTP status " + std::to_string(res->status));
    return parse_response(res->body);
}

}  // namespace hetgraph
