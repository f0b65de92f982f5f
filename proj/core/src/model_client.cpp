// SPDX-License-Identifier: Apache-2.0
#include "croprl/model_client.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <semaphore>
#include <sstream>

#include "http_util.hpp"
#include "httplib.h"
#include "json.hpp"

namespace croprl::modelclient {

namespace {

bool is_remote_uri(const std::string& uri) {
    return uri.rfind("data:", 0) == 0 || uri.rfind("http://", 0) == 0 ||
           uri.rfind("https://", 0) == 0;
}

std::string mime_for_path(const std::string& path) {
    auto dot = path.find_last_of('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == "jpg" || ext == "jpeg") return "image/jpeg";
    if (ext == "webp") return "image/webp";
    if (ext == "gif") return "image/gif";
    return "image/png";
}

std::string inline_image_uri(const std::string& uri) {
    if (is_remote_uri(uri)) return uri;
    std::ifstream in(uri, std::ios::binary);
    if (!in) throw ClientError("cannot read image file: " + uri);
    std::ostringstream buf;
    buf << in.rdbuf();
    return "data:" + mime_for_path(uri) + ";base64," + base64_encode(buf.str());
}

std::string format_temperature(double t) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", t);
    return buf;
}

}  // namespace

std::string_view image_detail_name(ImageDetail d) {
    return d == ImageDetail::low ? "low" : "full";
}

std::string request_preimage(const ChatRequest& req) {
    std::string out = "model=" + req.model + "\ntemperature=" +
                      format_temperature(req.temperature);
    for (const ChatMessage& m : req.messages) {
        for (const ContentPart& part : m.parts) {
            out += '\n';
            out += m.role;
            if (const auto* t = std::get_if<TextPart>(&part)) {
                out += ":text=" + t->text;
            } else {
                const auto& im = std::get<ImagePart>(part);
                out += ":image=" + im.uri + ";resolution=";
                out += image_detail_name(im.detail);
                out += ";crop=";
                out += im.crop ? geometry::crop_id_name(*im.crop) : "-";
            }
        }
    }
    return out;
}

std::string request_fingerprint(const ChatRequest& req) {
    std::string pre = request_preimage(req);
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : pre) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string base64_encode(std::string_view bytes) {
    static constexpr char kAlphabet[] =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                          (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                          static_cast<unsigned char>(bytes[i + 2]);
        out.push_back(kAlphabet[(v >> 18) & 63]);
        out.push_back(kAlphabet[(v >> 12) & 63]);
        out.push_back(kAlphabet[(v >> 6) & 63]);
        out.push_back(kAlphabet[v & 63]);
    }
    if (i + 1 == bytes.size()) {
        std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
        out.push_back(kAlphabet[(v >> 18) & 63]);
        out.push_back(kAlphabet[(v >> 12) & 63]);
        out += "==";
    } else if (i + 2 == bytes.size()) {
        std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                          (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out.push_back(kAlphabet[(v >> 18) & 63]);
        out.push_back(kAlphabet[(v >> 12) & 63]);
        out.push_back(kAlphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

struct HttpModelClient::Impl {
    httputil::ParsedUrl url;
    std::string api_key;
    mutable std::counting_semaphore<> slots;

    Impl(const std::string& endpoint, std::string key, int max_in_flight)
        : url(httputil::parse_http_url(endpoint)),
          api_key(std::move(key)),
          slots(std::max(1, max_in_flight)) {}
};

HttpModelClient::HttpModelClient(const std::string& endpoint, std::string api_key,
                                 int max_in_flight)
    : impl_(std::make_unique<Impl>(endpoint, std::move(api_key), max_in_flight)) {}

HttpModelClient::~HttpModelClient() = default;

std::string HttpModelClient::render_body(const ChatRequest& req) const {
    nlohmann::json messages = nlohmann::json::array();
    for (const ChatMessage& m : req.messages) {
        nlohmann::json content = nlohmann::json::array();
        for (const ContentPart& part : m.parts) {
            if (const auto* t = std::get_if<TextPart>(&part)) {
                content.push_back({{"type", "text"}, {"text", t->text}});
            } else {
                const auto& im = std::get<ImagePart>(part);
                nlohmann::json p{{"type", "image"},
                                 {"url", inline_image_uri(im.uri)},
                                 {"detail", std::string(image_detail_name(im.detail))}};
                if (im.crop) p["crop"] = std::string(geometry::crop_id_name(*im.crop));
                content.push_back(std::move(p));
            }
        }
        messages.push_back({{"role", m.role}, {"content", std::move(content)}});
    }
    nlohmann::json body{{"model", req.model},
                        {"messages", std::move(messages)},
                        {"temperature", req.temperature}};
    return body.dump();
}

std::string HttpModelClient::complete(const ChatRequest& req) const {
    std::string body = render_body(req);

    impl_->slots.acquire();
    struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
    } release{impl_->slots};

    httplib::Client cli(impl_->url.host, impl_->url.port);
    cli.set_connection_timeout(10);
    cli.set_read_timeout(60);
    httplib::Headers headers;
    if (!impl_->api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + impl_->api_key);
    }
    auto res = cli.Post(impl_->url.path, headers, body, "application/json");
    if (!res) {
        throw TransportError("model endpoint unreachable: " +
                             httplib::to_string(res.error()));
    }
    if (res->status == 429 || res->status >= 500) {
        throw TransportError("model endpoint returned status " +
                             std::to_string(res->status));
    }
    if (res->status != 200) {
        throw ClientError("model endpoint rejected the request with status " +
                          std::to_string(res->status));
    }
    try {
        auto j = nlohmann::json::parse(res->body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (content.is_string()) return content.get<std::string>();
        if (content.is_array()) {
            std::string text;
            for (const auto& piece : content) {
                if (piece.value("type", "") == "text") {
                    text += piece.at("text").get<std::string>();
                }
            }
            return text;
        }
        throw ReplyFormatError("model reply content has unsupported type");
    } catch (const nlohmann::json::exception& e) {
        throw ReplyFormatError(std::string("malformed model reply: ") + e.what());
    }
}

std::string MockFixture::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    j["replies"] = replies;
    nlohmann::json rule_rows = nlohmann::json::array();
    for (const MockRule& r : rules) {
        rule_rows.push_back({{"contains", r.contains}, {"reply", r.reply}});
    }
    j["rules"] = std::move(rule_rows);
    if (default_reply) j["default"] = *default_reply;
    return j.dump(2);
}

MockFixture MockFixture::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("mock fixture is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::runtime_error("mock fixture must be a JSON object");
    MockFixture fx;
    if (j.contains("replies")) {
        fx.replies = j["replies"].get<std::map<std::string, std::string>>();
    }
    if (j.contains("rules")) {
        for (const auto& row : j["rules"]) {
            fx.rules.push_back({row.at("contains").get<std::string>(),
                                row.at("reply").get<std::string>()});
        }
    }
    if (j.contains("default")) fx.default_reply = j["default"].get<std::string>();
    return fx;
}

MockModelClient MockModelClient::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read mock fixture file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return MockModelClient(MockFixture::from_json(buf.str()));
}

std::string MockModelClient::complete(const ChatRequest& req) const {
    std::string fp = request_fingerprint(req);
    if (auto it = fixture_.replies.find(fp); it != fixture_.replies.end()) {
        return it->second;
    }
    std::string pre = request_preimage(req);
    for (const MockRule& r : fixture_.rules) {
        if (!r.contains.empty() && pre.find(r.contains) != std::string::npos) {
            return r.reply;
        }
    }
    if (fixture_.default_reply) return *fixture_.default_reply;
    throw ReplyFormatError("mock fixture has no reply for request fingerprint " + fp);
}

}  // namespace croprl::modelclient
