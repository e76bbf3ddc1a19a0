#pragma once

// Remote planner backend speaking the OpenAI-style chat-completions protocol.
// The request carries the fixed system preamble, the rendered prompt text,
// and one annotated observation image; the reply must contain exactly one
// directive/1 JSON object. Pulling this header in is the only way any part of
// the library touches the network.

#include <chrono>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "stgraph/config.hpp"
#include "stgraph/directive.hpp"
#include "stgraph/errors.hpp"
#include "stgraph/image.hpp"
#include "stgraph/planner.hpp"

namespace stg {

namespace remote_detail {

// "http://host:port/path" -> client base and request path.
struct EndpointParts {
    std::string base;
    std::string path;
};

inline EndpointParts split_endpoint(const std::string& url) {
    auto scheme = url.find("://");
    if (scheme == std::string::npos) {
        throw ConfigError("endpoint url needs a scheme: '" + url + "'");
    }
    auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

inline const char* error_name(httplib::Error e) {
    switch (e) {
        case httplib::Error::Connection: return "connection failed";
        case httplib::Error::BindIPAddress: return "bind failed";
        case httplib::Error::Read: return "read failed";
        case httplib::Error::Write: return "write failed";
        case httplib::Error::ExceedRedirectCount: return "too many redirects";
        case httplib::Error::Canceled: return "canceled";
        case httplib::Error::ConnectionTimeout: return "connection timeout";
        case httplib::Error::ProxyConnection: return "proxy connection failed";
        default: return "transport error";
    }
}

}  // namespace remote_detail

// Pulls the one JSON object out of the reply text. Fenced or prefixed prose is
// tolerated as long as exactly one balanced object parses; anything else is a
// malformed reply, with the message naming which way it went wrong.
inline nlohmann::json extract_reply_object(const std::string& text) {
    std::vector<nlohmann::json> parsed;
    std::string parse_failure;

    std::size_t i = 0;
    while ((i = text.find('{', i)) != std::string::npos) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        std::size_t end = std::string::npos;
        for (std::size_t k = i; k < text.size(); ++k) {
            char c = text[k];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                if (--depth == 0) {
                    end = k;
                    break;
                }
            }
        }
        if (end == std::string::npos) break;  // unbalanced to the end of text

        std::string candidate = text.substr(i, end - i + 1);
        nlohmann::json j = nlohmann::json::parse(candidate, nullptr, false);
        if (j.is_discarded()) {
            parse_failure = candidate.size() > 120 ? candidate.substr(0, 120) + "..."
                                                   : candidate;
        } else {
            parsed.push_back(std::move(j));
        }
        i = end + 1;
    }

    if (parsed.size() == 1) return parsed.front();
    if (parsed.size() > 1) {
        throw MalformedDirective("reply contains " + std::to_string(parsed.size()) +
                                 " JSON objects, expected exactly one");
    }
    if (!parse_failure.empty()) {
        throw MalformedDirective("reply JSON does not parse: " + parse_failure);
    }
    throw MalformedDirective("no JSON object in reply");
}

inline ActionDirective parse_reply_content(const std::string& content) {
    ActionDirective d = directive_from_json(extract_reply_object(content));
    validate_directive(d);
    return d;
}

// The chat-completions request body: system preamble, then one user message
// holding the scene text and the annotated observation.
inline nlohmann::json chat_request(const PromptContext& ctx, const Config& cfg) {
    std::string full = render_prompt_text(ctx, cfg);
    std::string preamble = prompt_preamble();
    std::string user_text =
        full.rfind(preamble, 0) == 0 ? full.substr(preamble.size()) : full;

    nlohmann::json req;
    req["model"] = cfg.model;
    req["messages"] = nlohmann::json::array(
        {{{"role", "system"}, {"content", preamble}},
         {{"role", "user"},
          {"content",
           nlohmann::json::array(
               {{{"type", "text"}, {"text", user_text}},
                {{"type", "image_url"},
                 {"image_url",
                  {{"url", to_data_uri(ctx.annotated_observation)}}}}})}}});
    return req;
}

// One planning query against the configured endpoint. Malformed replies are
// re-requested up to remote_retries times and then surfaced; transport
// problems are immediate. None of these are fatal to a harness episode; the
// episode just ends with its cause recorded.
inline ActionDirective remote_directive(const PromptContext& ctx, const Config& cfg) {
    if (cfg.endpoint_url.empty()) {
        throw ConfigError("remote backend selected but no endpoint url configured");
    }
    auto parts = remote_detail::split_endpoint(cfg.endpoint_url);

    httplib::Client client(parts.base);
    auto limit = std::chrono::milliseconds(cfg.remote_timeout_ms);
    client.set_connection_timeout(limit);
    client.set_read_timeout(limit);
    client.set_write_timeout(limit);

    httplib::Headers headers;
    if (!cfg.api_token.empty()) {
        headers.emplace("Authorization", "Bearer " + cfg.api_token);
    }
    std::string body = chat_request(ctx, cfg).dump();

    std::string last_malformed;
    for (int attempt = 0; attempt <= cfg.remote_retries; ++attempt) {
        auto res = client.Post(parts.path, headers, body, "application/json");
        if (!res) {
            httplib::Error e = res.error();
            // a served-but-silent endpoint shows up as a failed read
            if (e == httplib::Error::ConnectionTimeout || e == httplib::Error::Read) {
                throw TimeoutError("no reply from " + parts.base + " within " +
                                   std::to_string(cfg.remote_timeout_ms) + " ms (" +
                                   remote_detail::error_name(e) + ")");
            }
            throw TransportError(std::string(remote_detail::error_name(e)) +
                                 " talking to " + parts.base);
        }
        if (res->status != 200) {
            throw TransportError("endpoint returned status " +
                                 std::to_string(res->status));
        }

        nlohmann::json envelope = nlohmann::json::parse(res->body, nullptr, false);
        if (envelope.is_discarded()) {
            throw TransportError("endpoint reply body is not JSON");
        }
        if (!envelope.contains("choices") || !envelope["choices"].is_array() ||
            envelope["choices"].empty() ||
            !envelope["choices"][0].contains("message") ||
            !envelope["choices"][0]["message"].contains("content") ||
            !envelope["choices"][0]["message"]["content"].is_string()) {
            throw TransportError("endpoint reply missing choices[0].message.content");
        }

        std::string content = envelope["choices"][0]["message"]["content"];
        try {
            return parse_reply_content(content);
        } catch (const MalformedDirective& e) {
            last_malformed = e.what();
        }
    }
    throw MalformedDirective(last_malformed + " (after " +
                             std::to_string(cfg.remote_retries + 1) + " attempts)");
}

class RemoteBackend : public PlannerBackend {
  public:
    explicit RemoteBackend(const Config& cfg) : cfg_(&cfg) {}

    ActionDirective propose(const PromptContext& prompt) override {
        return remote_directive(prompt, *cfg_);
    }

    std::string name() const override { return "remote"; }

  private:
    const Config* cfg_;
};

}  // namespace stg
