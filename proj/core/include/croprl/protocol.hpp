// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "croprl/geometry.hpp"
#include "croprl/label.hpp"

namespace croprl::protocol {

/// First assistant turn is either a direct answer or a crop request.
struct DirectAnswer {
    std::string text;
    bool operator==(const DirectAnswer&) const = default;
};

struct CropRequest {
    geometry::CropSet crops;  // never empty in a well-formed action
    bool operator==(const CropRequest&) const = default;
};

using FirstTurnAction = std::variant<DirectAnswer, CropRequest>;

inline bool is_crop_request(const FirstTurnAction& a) {
    return std::holds_alternative<CropRequest>(a);
}

/// Crops carried by the action; empty set for a direct answer.
geometry::CropSet requested_crops(const FirstTurnAction& a);

enum class Validity { valid, corrupt_recoverable, corrupt_incorrect };

std::string_view validity_name(Validity v);

struct ParseOutcome {
    FirstTurnAction action;
    Validity validity = Validity::valid;
};

/// The fixed tool-use system prompt. Byte-stable; tests pin it against a
/// checked-in fixture.
const std::string& render_system_prompt();

/// Canonical tool-call line for a non-empty crop set, e.g.
/// GET_CROPS: ['0', '5']. Canonical id order, single quotes, ", " joins.
std::string emit_tool_call(const geometry::CropSet& crops);

/// Classify and parse a raw first assistant turn.
///
/// Strict grammar (optional surrounding whitespace, literal "GET_CROPS:",
/// a bracketed list of single-quoted vocabulary ids) parses as a valid
/// CropRequest. Text without the "GET_CROPS" keyword is a valid
/// DirectAnswer. Anything else goes through recovery: vocabulary ids
/// found after the keyword (quoted or bare) yield a corrupt_recoverable
/// CropRequest; unknown ids or an empty extraction yield
/// corrupt_incorrect with the raw text kept as a DirectAnswer fallback.
ParseOutcome parse_first_turn(std::string_view raw);

enum class Role { system, user, assistant, tool };

std::string_view role_name(Role r);

/// Opaque image handle plus the crop it shows; no crop means the
/// downsampled full view.
struct ImageRef {
    std::string uri;
    std::optional<geometry::CropId> crop;
    bool operator==(const ImageRef&) const = default;
};

struct Turn {
    Role role = Role::user;
    std::string text;
    std::vector<ImageRef> images;
    double loss_weight = 1.0;
    bool operator==(const Turn&) const = default;
};

struct Transcript {
    std::string sample_id;
    Label label = Label::LR;
    geometry::CropSet target_crops;
    std::vector<Turn> turns;
    bool operator==(const Transcript&) const = default;
};

inline constexpr double kDefaultToolTurnWeight = 5.0;

/// Supervised two-path transcript.
///
/// LR: [system, user(question + low-res view), assistant(answer)].
/// HR: [system, user(question + low-res view), assistant(tool call,
/// upweighted), tool(requested crop views), assistant(answer)].
Transcript build_transcript(const std::string& sample_id,
                            const std::string& question,
                            const std::string& image_uri, Label label,
                            const geometry::CropSet& target_crops,
                            const std::string& answer,
                            double w_tool = kDefaultToolTurnWeight);

/// One JSON object per transcript, no trailing newline. Keys are sorted,
/// so identical inputs serialize to identical bytes.
std::string transcript_to_jsonl_line(const Transcript& t);

}  // namespace croprl::protocol
