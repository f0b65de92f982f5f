// SPDX-License-Identifier: Apache-2.0
#include "croprl/protocol.hpp"

#include <cctype>
#include <stdexcept>

#include "json.hpp"

namespace croprl::protocol {

namespace {

const std::string kSystemPrompt =
    "You are a vision-language model that analyzes images and answers questions "
    "about them. If the image resolution is too low for accurate analysis, "
    "respond with GET_CROPS: followed by a list of crop numbers in square "
    "brackets (e.g., GET_CROPS: ['3'] or GET_CROPS: ['0', '5']), where the "
    "available crop numbers and their corresponding areas are {'0': 'top-left', "
    "'1': 'top-right', '2': 'bottom-left', '3': 'bottom-right', '4': 'center', "
    "'5': 'top', '6': 'bottom', '7': 'left', '8': 'right', 'all': 'all'}, "
    "otherwise provide your answer.";

constexpr std::string_view kKeyword = "GET_CROPS";

void skip_ws(std::string_view s, std::size_t& pos) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
}

/// Strict grammar match; fills crops and returns true only when the whole
/// text (modulo surrounding whitespace) is one well-formed tool call with
/// at least one vocabulary id.
bool parse_strict(std::string_view s, geometry::CropSet& crops) {
    std::size_t pos = 0;
    skip_ws(s, pos);
    if (s.compare(pos, kKeyword.size(), kKeyword) != 0) return false;
    pos += kKeyword.size();
    if (pos >= s.size() || s[pos] != ':') return false;
    ++pos;
    skip_ws(s, pos);
    if (pos >= s.size() || s[pos] != '[') return false;
    ++pos;

    geometry::CropSet out;
    bool first = true;
    while (true) {
        skip_ws(s, pos);
        if (!first) {
            if (pos < s.size() && s[pos] == ']') break;
            if (pos >= s.size() || s[pos] != ',') return false;
            ++pos;
            skip_ws(s, pos);
        } else if (pos < s.size() && s[pos] == ']') {
            return false;  // empty list never carries a request
        }
        if (pos >= s.size() || s[pos] != '\'') return false;
        ++pos;
        std::size_t end = s.find('\'', pos);
        if (end == std::string_view::npos) return false;
        auto id = geometry::crop_id_from_name(s.substr(pos, end - pos));
        if (!id) return false;
        out.insert(*id);
        pos = end + 1;
        first = false;
    }
    ++pos;  // ']'
    skip_ws(s, pos);
    if (pos != s.size()) return false;
    crops = out;
    return true;
}

/// Salvage scan over the text after the keyword. Id candidates are quoted
/// tokens, bare digit runs and the bare word "all"; unquoted prose words
/// are ignored. Any candidate outside the vocabulary poisons the
/// extraction.
bool recover_ids(std::string_view payload, geometry::CropSet& crops) {
    std::size_t open = payload.find('[');
    if (open != std::string_view::npos) {
        std::size_t close = payload.find(']', open + 1);
        if (close != std::string_view::npos) {
            payload = payload.substr(open + 1, close - open - 1);
        }
    }

    geometry::CropSet out;
    bool unknown = false;
    std::size_t i = 0;
    auto classify = [&](std::string_view tok) {
        auto id = geometry::crop_id_from_name(tok);
        if (id) {
            out.insert(*id);
        } else {
            unknown = true;
        }
    };
    while (i < payload.size()) {
        char c = payload[i];
        if (c == '\'' || c == '"') {
            std::size_t end = payload.find(c, i + 1);
            if (end == std::string_view::npos) break;
            classify(payload.substr(i + 1, end - i - 1));
            i = end + 1;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t end = i;
            while (end < payload.size() &&
                   std::isdigit(static_cast<unsigned char>(payload[end]))) {
                ++end;
            }
            classify(payload.substr(i, end - i));
            i = end;
        } else if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t end = i;
            while (end < payload.size() &&
                   std::isalnum(static_cast<unsigned char>(payload[end]))) {
                ++end;
            }
            if (payload.substr(i, end - i) == "all") out.insert(geometry::CropId::all);
            i = end;
        } else {
            ++i;
        }
    }
    if (unknown || out.empty()) return false;
    crops = out;
    return true;
}

}  // namespace

geometry::CropSet requested_crops(const FirstTurnAction& a) {
    if (const auto* req = std::get_if<CropRequest>(&a)) return req->crops;
    return {};
}

std::string_view validity_name(Validity v) {
    switch (v) {
        case Validity::valid: return "valid";
        case Validity::corrupt_recoverable: return "corrupt-recoverable";
        case Validity::corrupt_incorrect: return "corrupt-incorrect";
    }
    return "";
}

const std::string& render_system_prompt() { return kSystemPrompt; }

std::string emit_tool_call(const geometry::CropSet& crops) {
    if (crops.empty()) {
        throw std::invalid_argument("cannot emit a tool call for an empty crop set");
    }
    std::string out = "GET_CROPS: [";
    bool first = true;
    for (geometry::CropId id : crops.ids()) {
        if (!first) out += ", ";
        out += '\'';
        out += crop_id_name(id);
        out += '\'';
        first = false;
    }
    out += ']';
    return out;
}

ParseOutcome parse_first_turn(std::string_view raw) {
    geometry::CropSet crops;
    if (parse_strict(raw, crops)) {
        return {CropRequest{crops}, Validity::valid};
    }
    std::size_t kw = raw.find(kKeyword);
    if (kw == std::string_view::npos) {
        return {DirectAnswer{std::string(raw)}, Validity::valid};
    }
    if (recover_ids(raw.substr(kw + kKeyword.size()), crops)) {
        return {CropRequest{crops}, Validity::corrupt_recoverable};
    }
    return {DirectAnswer{std::string(raw)}, Validity::corrupt_incorrect};
}

std::string_view role_name(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
        case Role::tool: return "tool";
    }
    return "";
}

Transcript build_transcript(const std::string& sample_id,
                            const std::string& question,
                            const std::string& image_uri, Label label,
                            const geometry::CropSet& target_crops,
                            const std::string& answer, double w_tool) {
    if (label == Label::HR && target_crops.empty()) {
        throw std::invalid_argument("HR transcript needs a non-empty target crop set");
    }
    if (w_tool <= 0.0) throw std::invalid_argument("w_tool must be positive");

    Transcript t;
    t.sample_id = sample_id;
    t.label = label;
    t.target_crops = label == Label::HR ? target_crops : geometry::CropSet{};

    t.turns.push_back({Role::system, render_system_prompt(), {}, 1.0});
    t.turns.push_back({Role::user, question, {{image_uri, std::nullopt}}, 1.0});
    if (label == Label::HR) {
        t.turns.push_back({Role::assistant, emit_tool_call(target_crops), {}, w_tool});
        Turn crops_turn{Role::tool, "", {}, 1.0};
        for (geometry::CropId id : target_crops.ids()) {
            crops_turn.images.push_back({image_uri, id});
        }
        t.turns.push_back(std::move(crops_turn));
    }
    t.turns.push_back({Role::assistant, answer, {}, 1.0});
    return t;
}

std::string transcript_to_jsonl_line(const Transcript& t) {
    nlohmann::json turns = nlohmann::json::array();
    for (const Turn& turn : t.turns) {
        nlohmann::json images = nlohmann::json::array();
        for (const ImageRef& ref : turn.images) {
            nlohmann::json img{{"uri", ref.uri}};
            img["crop"] = ref.crop ? nlohmann::json(std::string(crop_id_name(*ref.crop)))
                                   : nlohmann::json(nullptr);
            images.push_back(std::move(img));
        }
        turns.push_back({{"role", std::string(role_name(turn.role))},
                         {"text", turn.text},
                         {"images", std::move(images)},
                         {"loss_weight", turn.loss_weight}});
    }
    nlohmann::json j{{"sample_id", t.sample_id},
                     {"label", std::string(label_name(t.label))},
                     {"target_crops", t.target_crops.names()},
                     {"turns", std::move(turns)}};
    return j.dump();
}

}  // namespace croprl::protocol
