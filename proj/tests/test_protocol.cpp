// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "croprl/geometry.hpp"
#include "croprl/protocol.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace croprl;
using geometry::CropId;
using geometry::CropSet;
using protocol::CropRequest;
using protocol::DirectAnswer;
using protocol::Validity;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(bool(in), "fixture missing: " << path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

CropSet crops_of(const protocol::ParseOutcome& o) {
    return protocol::requested_crops(o.action);
}

}  // namespace

TEST_CASE("system prompt matches the checked-in fixture byte for byte") {
    std::string expected = read_file(std::string(CROPRL_TEST_FIXTURES) + "/system_prompt.txt");
    const std::string& got = protocol::render_system_prompt();
    CHECK(got.size() == expected.size());
    CHECK(got == expected);
    // Single line, no trailing whitespace.
    CHECK(got.find('\n') == std::string::npos);
    CHECK(got.back() != ' ');
}

TEST_CASE("emit_tool_call canonical formatting") {
    CHECK(protocol::emit_tool_call(CropSet{CropId::bottom_right}) == "GET_CROPS: ['3']");
    CHECK(protocol::emit_tool_call(CropSet{CropId::top, CropId::top_left}) ==
          "GET_CROPS: ['0', '5']");
    CHECK(protocol::emit_tool_call(CropSet{CropId::all, CropId::top_left}) ==
          "GET_CROPS: ['0', 'all']");
    CHECK_THROWS_AS(protocol::emit_tool_call(CropSet{}), std::invalid_argument);
}

TEST_CASE("strict grammar parses as valid") {
    auto o = protocol::parse_first_turn("GET_CROPS: ['3']");
    CHECK(o.validity == Validity::valid);
    CHECK(crops_of(o) == CropSet{CropId::bottom_right});

    o = protocol::parse_first_turn("  GET_CROPS: ['0', 'all']  ");
    CHECK(o.validity == Validity::valid);
    CHECK(crops_of(o) == CropSet{CropId::top_left, CropId::all});

    // Duplicates collapse without downgrading validity.
    o = protocol::parse_first_turn("GET_CROPS: ['5', '5']");
    CHECK(o.validity == Validity::valid);
    CHECK(crops_of(o) == CropSet{CropId::top});

    // Flexible inner whitespace.
    o = protocol::parse_first_turn("GET_CROPS: ['1','2' , 'all']");
    CHECK(o.validity == Validity::valid);
    CHECK(crops_of(o) == CropSet{CropId::top_right, CropId::bottom_left, CropId::all});
}

TEST_CASE("text without the keyword is a valid direct answer") {
    auto o = protocol::parse_first_turn("The receipt total is $12.50.");
    CHECK(o.validity == Validity::valid);
    REQUIRE(std::holds_alternative<DirectAnswer>(o.action));
    CHECK(std::get<DirectAnswer>(o.action).text == "The receipt total is $12.50.");
    CHECK(crops_of(o).empty());
}

TEST_CASE("near-miss tool calls recover when ids are extractable") {
    // Missing brackets.
    auto o = protocol::parse_first_turn("GET_CROPS: '0' and '5'");
    CHECK(o.validity == Validity::corrupt_recoverable);
    CHECK(crops_of(o) == CropSet{CropId::top_left, CropId::top});

    // Bare digits inside brackets.
    o = protocol::parse_first_turn("Sure! GET_CROPS: [3]");
    CHECK(o.validity == Validity::corrupt_recoverable);
    CHECK(crops_of(o) == CropSet{CropId::bottom_right});

    // Bare "all".
    o = protocol::parse_first_turn("GET_CROPS: [all]");
    CHECK(o.validity == Validity::corrupt_recoverable);
    CHECK(crops_of(o) == CropSet{CropId::all});

    // Double quotes instead of single.
    o = protocol::parse_first_turn("GET_CROPS: [\"2\"]");
    CHECK(o.validity == Validity::corrupt_recoverable);
    CHECK(crops_of(o) == CropSet{CropId::bottom_left});

    // When brackets are present they bound the scan: trailing ids outside
    // the list are prose, not requests.
    o = protocol::parse_first_turn("GET_CROPS: ['0'] and maybe '3' later");
    CHECK(o.validity == Validity::corrupt_recoverable);
    CHECK(crops_of(o) == CropSet{CropId::top_left});

    // Prose words after the keyword are ignored while digits count.
    o = protocol::parse_first_turn("GET_CROPS: 7 please");
    CHECK(o.validity == Validity::corrupt_recoverable);
    CHECK(crops_of(o) == CropSet{CropId::left});
}

TEST_CASE("unrecoverable tool calls fall back to a direct-answer wrapper") {
    // Unknown id poisons the whole extraction.
    auto o = protocol::parse_first_turn("GET_CROPS: ['9']");
    CHECK(o.validity == Validity::corrupt_incorrect);
    REQUIRE(std::holds_alternative<DirectAnswer>(o.action));
    CHECK(std::get<DirectAnswer>(o.action).text == "GET_CROPS: ['9']");

    o = protocol::parse_first_turn("GET_CROPS: ['0', 'dog']");
    CHECK(o.validity == Validity::corrupt_incorrect);

    // Empty list: keyword present, nothing extractable.
    o = protocol::parse_first_turn("GET_CROPS: []");
    CHECK(o.validity == Validity::corrupt_incorrect);
    CHECK(crops_of(o).empty());

    o = protocol::parse_first_turn("GET_CROPS:");
    CHECK(o.validity == Validity::corrupt_incorrect);

    // Multi-digit run is not a vocabulary id.
    o = protocol::parse_first_turn("GET_CROPS: [35]");
    CHECK(o.validity == Validity::corrupt_incorrect);
}

TEST_CASE("emit and parse round-trip over every non-empty crop set") {
    for (std::uint16_t mask = 1; mask < 1024; ++mask) {
        CropSet s = CropSet::from_mask(mask);
        auto o = protocol::parse_first_turn(protocol::emit_tool_call(s));
        CHECK(o.validity == Validity::valid);
        CHECK(crops_of(o) == s);
    }
}

TEST_CASE("LR transcripts have three turns and unit weights") {
    auto t = protocol::build_transcript("s1", "What is the total?", "img://1",
                                        Label::LR, CropSet{}, "42");
    CHECK(t.sample_id == "s1");
    CHECK(t.label == Label::LR);
    REQUIRE(t.turns.size() == 3);
    CHECK(t.turns[0].role == protocol::Role::system);
    CHECK(t.turns[0].text == protocol::render_system_prompt());
    CHECK(t.turns[1].role == protocol::Role::user);
    REQUIRE(t.turns[1].images.size() == 1);
    CHECK(t.turns[1].images[0].uri == "img://1");
    CHECK_FALSE(t.turns[1].images[0].crop.has_value());
    CHECK(t.turns[2].role == protocol::Role::assistant);
    CHECK(t.turns[2].text == "42");
    for (const auto& turn : t.turns) CHECK(turn.loss_weight == 1.0);
}

TEST_CASE("HR transcripts add an upweighted tool call and a tool turn") {
    CropSet targets{CropId::top_left, CropId::center};
    auto t = protocol::build_transcript("s2", "Read the plate", "img://2",
                                        Label::HR, targets, "ABC-123");
    REQUIRE(t.turns.size() == 5);
    CHECK(t.turns[2].role == protocol::Role::assistant);
    CHECK(t.turns[2].text == "GET_CROPS: ['0', '4']");
    CHECK(t.turns[2].loss_weight == 5.0);  // upweighted imitation target
    CHECK(t.turns[3].role == protocol::Role::tool);
    REQUIRE(t.turns[3].images.size() == 2);
    CHECK(t.turns[3].images[0].crop == CropId::top_left);
    CHECK(t.turns[3].images[1].crop == CropId::center);
    CHECK(t.turns[4].role == protocol::Role::assistant);
    CHECK(t.turns[4].text == "ABC-123");
    CHECK(t.turns[4].loss_weight == 1.0);

    // Custom tool-turn weight flows through.
    auto t2 = protocol::build_transcript("s3", "q", "img://3", Label::HR,
                                         CropSet{CropId::all}, "a", 2.5);
    CHECK(t2.turns[2].loss_weight == 2.5);

    // HR without targets is a caller bug.
    CHECK_THROWS_AS(protocol::build_transcript("s4", "q", "img://4", Label::HR,
                                               CropSet{}, "a"),
                    std::invalid_argument);
}

TEST_CASE("transcript JSONL lines are deterministic and well-formed") {
    auto t = protocol::build_transcript("s5", "q?", "img://5", Label::HR,
                                        CropSet{CropId::right}, "ans");
    std::string line1 = protocol::transcript_to_jsonl_line(t);
    std::string line2 = protocol::transcript_to_jsonl_line(t);
    CHECK(line1 == line2);
    CHECK(line1.find('\n') == std::string::npos);

    auto j = nlohmann::json::parse(line1);
    CHECK(j["sample_id"] == "s5");
    CHECK(j["label"] == "HR");
    CHECK(j["target_crops"] == nlohmann::json::array({"8"}));
    REQUIRE(j["turns"].size() == 5);
    CHECK(j["turns"][0]["role"] == "system");
    CHECK(j["turns"][2]["loss_weight"] == 5.0);
    CHECK(j["turns"][3]["images"][0]["crop"] == "8");
    CHECK(j["turns"][1]["images"][0]["crop"].is_null());
}
