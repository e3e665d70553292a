// Eigen must be seen before the OpenSSL headers pulled in by httplib.
#include "saft/description_bank.hpp"

#include <cctype>
#include <cstdlib>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>

namespace saft {

namespace {

struct Url {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

Url split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint '" + url + "' has no scheme");
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string strip_list_marker(std::string line) {
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    line = line.substr(first);
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) line = line.substr(i + 1);
    else if (!line.empty() && (line[0] == '-' || line[0] == '*')) line = line.substr(1);
    first = line.find_first_not_of(" \t");
    if (first == std::string::npos) return {};
    const auto last = line.find_last_not_of(" \t\r");
    return line.substr(first, last - first + 1);
}

}  // namespace

std::vector<std::string> request_external_descriptions(const GenerationConfig& cfg, const std::string& class_name) {
    const Url url = split_url(cfg.endpoint);
    httplib::Client client(url.origin);
    const auto timeout_us = static_cast<long>(cfg.timeout_seconds * 1e6);
    client.set_connection_timeout(timeout_us / 1000000, timeout_us % 1000000);
    client.set_read_timeout(timeout_us / 1000000, timeout_us % 1000000);

    httplib::Headers headers;
    if (const char* key = std::getenv("SAFT_LLM_API_KEY"); key != nullptr && *key != '\0') {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    std::vector<std::string> lines;
    std::string last_error = "no attempt made";
    int attempts = 0;
    int failures = 0;
    for (std::size_t round = 0; lines.size() < static_cast<std::size_t>(cfg.M); ++round) {
        if (failures > cfg.max_retries) {
            throw EndpointError("description generation for '" + class_name + "' failed: " + last_error, attempts);
        }
        const std::string prompt = fill_label(cfg.prompts[round % cfg.prompts.size()], class_name);
        nlohmann::json body{
            {"model", cfg.model},
            {"temperature", cfg.temperature},
            {"messages",
             {{{"role", "system"}, {"content", "You write short visual descriptions, one per line, no numbering."}},
              {{"role", "user"},
               {"content", prompt + "? Give " + std::to_string(cfg.M) + " different one-sentence descriptions."}}}},
        };
        ++attempts;
        auto res = client.Post(url.path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "request error: " + httplib::to_string(res.error());
            ++failures;
            continue;
        }
        if (res->status != 200) {
            last_error = "HTTP status " + std::to_string(res->status);
            ++failures;
            continue;
        }
        try {
            const auto reply = nlohmann::json::parse(res->body);
            const std::string content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
            std::size_t added = 0;
            std::size_t start = 0;
            while (start <= content.size() && lines.size() < static_cast<std::size_t>(cfg.M)) {
                auto end = content.find('\n', start);
                if (end == std::string::npos) end = content.size();
                auto line = strip_list_marker(content.substr(start, end - start));
                if (!line.empty()) {
                    lines.push_back(std::move(line));
                    ++added;
                }
                start = end + 1;
            }
            if (added == 0) {
                last_error = "empty completion";
                ++failures;
            }
        } catch (const nlohmann::json::exception& e) {
            last_error = std::string("malformed completion: ") + e.what();
            ++failures;
        }
    }
    return lines;
}

}  // namespace saft
