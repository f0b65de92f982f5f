// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "croprl/geometry.hpp"

namespace croprl::modelclient {

/// Resolution at which an attached image should be presented.
enum class ImageDetail { low, full };

std::string_view image_detail_name(ImageDetail d);

struct TextPart {
    std::string text;
    bool operator==(const TextPart&) const = default;
};

struct ImagePart {
    std::string uri;  // local path, data: URI, or http(s) URL
    ImageDetail detail = ImageDetail::full;
    std::optional<geometry::CropId> crop;  // absent = whole frame
    bool operator==(const ImagePart&) const = default;
};

using ContentPart = std::variant<TextPart, ImagePart>;

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant" | "tool"
    std::vector<ContentPart> parts;
    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    bool operator==(const ChatRequest&) const = default;
};

/// Base class for everything a backend call can get wrong.
class ClientError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The call never produced a usable HTTP exchange (connection refused,
/// timeout, 429/5xx). Safe to retry.
class TransportError : public ClientError {
public:
    using ClientError::ClientError;
};

/// The backend answered but the reply does not fit the expected shape.
/// Retrying the identical request is pointless.
class ReplyFormatError : public ClientError {
public:
    using ClientError::ClientError;
};

/// Canonical single-string rendering of a request. Stable across runs and
/// platforms; the mock backend keys its scripted replies on this.
std::string request_preimage(const ChatRequest& req);

/// FNV-1a 64-bit hash of request_preimage, as 16 lowercase hex digits.
std::string request_fingerprint(const ChatRequest& req);

std::string base64_encode(std::string_view bytes);

class ModelClient {
public:
    virtual ~ModelClient() = default;
    /// Final assistant text for the request. Throws ClientError subtypes.
    virtual std::string complete(const ChatRequest& req) const = 0;
};

/// Chat-completions-style HTTP backend. Request body:
///   {"model", "temperature", "messages":[{"role","content":[
///       {"type":"text","text":...} |
///       {"type":"image","url":...,"detail":"low"|"full"(,"crop":...)}]}]}
/// Local image paths are inlined as base64 data: URIs; data:/http(s) URIs
/// pass through. Expects {"choices":[{"message":{"content": ...}}]} back,
/// where content is a string or an array of {"type":"text","text"} parts.
class HttpModelClient final : public ModelClient {
public:
    /// endpoint: http:// URL of the completions route. api_key adds a
    /// bearer Authorization header when non-empty.
    HttpModelClient(const std::string& endpoint, std::string api_key = "",
                    int max_in_flight = 4);
    ~HttpModelClient() override;

    std::string complete(const ChatRequest& req) const override;

    /// The JSON body complete() would post, after image inlining.
    std::string render_body(const ChatRequest& req) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct MockRule {
    std::string contains;  // substring of the request preimage
    std::string reply;
    bool operator==(const MockRule&) const = default;
};

/// Scripted backend behavior: exact fingerprint hits first, then the
/// first preimage-substring rule, then the default reply if present.
struct MockFixture {
    std::map<std::string, std::string> replies;  // fingerprint -> reply
    std::vector<MockRule> rules;
    std::optional<std::string> default_reply;

    std::string to_json() const;
    static MockFixture from_json(const std::string& text);
    bool operator==(const MockFixture&) const = default;
};

/// Deterministic offline stand-in for HttpModelClient. A request nothing
/// in the fixture matches throws ReplyFormatError naming the fingerprint,
/// so fixture gaps surface as loud per-sample failures.
class MockModelClient final : public ModelClient {
public:
    explicit MockModelClient(MockFixture fixture) : fixture_(std::move(fixture)) {}
    static MockModelClient from_file(const std::string& path);

    std::string complete(const ChatRequest& req) const override;
    const MockFixture& fixture() const { return fixture_; }

private:
    MockFixture fixture_;
};

}  // namespace croprl::modelclient
