#pragma once

// In-process chat-completions stub for exercising the remote backend without
// leaving the loopback interface. Replies are scripted per test; every request
// body and auth header is captured for inspection.

#include <chrono>
#include <cstddef>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

namespace stg_test {

struct StubEndpoint {
    StubEndpoint() {
        server.Post("/v1/chat/completions",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        handle(req, res);
                    });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~StubEndpoint() {
        server.stop();
        thread.join();
    }

    std::string url() const {
        return "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    }

    // Queue an assistant message; it is wrapped in the response envelope.
    void reply_with(const std::string& content) {
        std::lock_guard<std::mutex> lock(mutex);
        scripted.push_back(content);
    }

    std::size_t requests_seen() {
        std::lock_guard<std::mutex> lock(mutex);
        return requests.size();
    }

    nlohmann::json request_body(std::size_t i) {
        std::lock_guard<std::mutex> lock(mutex);
        return nlohmann::json::parse(requests.at(i));
    }

    std::string auth_header(std::size_t i) {
        std::lock_guard<std::mutex> lock(mutex);
        return auth_headers.at(i);
    }

    int force_status = 0;          // nonzero: reply with this status, no body
    bool raw_mode = false;         // scripted string becomes the whole body
    int delay_ms = 0;              // sleep before answering
    std::string default_reply;     // used whenever the scripted queue is empty

  private:
    void handle(const httplib::Request& req, httplib::Response& res) {
        std::string content;
        {
            std::lock_guard<std::mutex> lock(mutex);
            requests.push_back(req.body);
            auth_headers.push_back(req.get_header_value("Authorization"));
            if (!scripted.empty()) {
                content = scripted.front();
                scripted.erase(scripted.begin());
            } else {
                content = default_reply;
            }
        }
        if (delay_ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
        }
        if (force_status != 0) {
            res.status = force_status;
            return;
        }
        if (raw_mode) {
            res.set_content(content, "application/json");
            return;
        }
        nlohmann::json envelope = {
            {"choices",
             nlohmann::json::array(
                 {{{"message", {{"role", "assistant"}, {"content", content}}}}})}};
        res.set_content(envelope.dump(), "application/json");
    }

    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::mutex mutex;
    std::vector<std::string> scripted;
    std::vector<std::string> requests;
    std::vector<std::string> auth_headers;
};

}  // namespace stg_test
