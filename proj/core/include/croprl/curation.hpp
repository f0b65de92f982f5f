// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "croprl/geometry.hpp"
#include "croprl/label.hpp"
#include "croprl/model_client.hpp"
#include "croprl/protocol.hpp"
#include "croprl/sim_env.hpp"

namespace croprl::curation {

/// One dataset row: an image/question/answer triple to be labeled.
struct Sample {
    std::string sample_id;
    std::string image;
    std::int64_t width = 0;   // 0 = unknown
    std::int64_t height = 0;  // 0 = unknown
    std::string question;
    std::string answer;
    bool operator==(const Sample&) const = default;
};

/// JSONL rows {sample_id, image, question, answer} with optional
/// width/height. Throws std::runtime_error naming the first bad line.
std::vector<Sample> read_dataset_jsonl(std::istream& in);
std::vector<Sample> read_dataset_file(const std::string& path);

/// A backend reply that cannot be interpreted; kind() is the stage-level
/// classification ("verdict-parse" or "grounding-parse").
class CurationParseError : public std::runtime_error {
public:
    CurationParseError(std::string kind, const std::string& what_arg)
        : std::runtime_error(kind + ": " + what_arg), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

/// Comparison-judge prompt with {prompt}/{gt}/{lr_resp}/{hr_resp}
/// placeholders. Byte-stable; tests pin it against a checked-in fixture.
const std::string& judge_prompt_template();
std::string fill_judge_prompt(const std::string& question, const std::string& gt,
                              const std::string& lr_resp, const std::string& hr_resp);

/// Localization prompt ending in "Question: ..."; filling replaces the
/// trailing ellipsis with the actual question. Byte-stable against a
/// checked-in fixture.
const std::string& oracle_prompt_template();
std::string fill_oracle_prompt(const std::string& question);

/// 0 (tie), 1 (first answer better) or 2 (second better). Strict parse:
/// the trimmed reply is exactly one of those characters; recovery takes
/// the first such digit anywhere in the text. Otherwise throws
/// CurationParseError("verdict-parse").
int parse_verdict(const std::string& reply);

struct GroundingResult {
    std::vector<geometry::Rect> question_boxes;
    std::vector<geometry::Rect> answer_boxes;
    std::string raw;
};

/// Parses the localization reply: a Python-style dict literal with
/// 'question' and 'answer' box lists on a 0-1000 grid. Boxes are scaled
/// by 1/1000, clamped to [0,1]; boxes degenerate after clamping are
/// dropped. No parsable dict or an empty answer list throws
/// CurationParseError("grounding-parse").
GroundingResult parse_grounding(const std::string& reply);

/// Bounding hull of the answer boxes, optionally unioned with the
/// question boxes. Throws std::invalid_argument when no boxes qualify.
geometry::Rect evidence_rect(const GroundingResult& g, bool include_question_boxes);

enum class Labeler { judge, anls };

std::optional<Labeler> labeler_from_name(std::string_view name);

struct CurationConfig {
    std::string vlm_model = "vlm";
    std::string judge_model = "judge";
    std::string oracle_model = "oracle";
    double temperature = 0.0;
    Labeler labeler = Labeler::judge;
    double anls_threshold = 0.5;
    bool include_question_boxes = false;
    geometry::MappingConfig mapping{};
    double w_tool = protocol::kDefaultToolTurnWeight;
    int max_in_flight = 4;    // worker concurrency == max concurrent calls
    int max_attempts = 3;     // per-call transport retries
    int backoff_initial_ms = 100;  // doubles per retry
};

void validate_curation_config(const CurationConfig& cfg);

// Request builders shared by the pipeline, fixture generation and tests:
// the same builder output is what a backend will be asked to complete.
modelclient::ChatRequest build_answer_request(const Sample& s,
                                              modelclient::ImageDetail detail,
                                              const CurationConfig& cfg);
modelclient::ChatRequest build_judge_request(const Sample& s, const std::string& lr_resp,
                                             const std::string& hr_resp,
                                             const CurationConfig& cfg);
modelclient::ChatRequest build_oracle_request(const Sample& s, const CurationConfig& cfg);

struct Clients {
    const modelclient::ModelClient* vlm = nullptr;
    const modelclient::ModelClient* judge = nullptr;
    const modelclient::ModelClient* oracle = nullptr;
};

struct Stage1Result {
    Label label = Label::LR;
    std::optional<int> verdict;  // absent for the anls labeler
    std::string lr_resp;
    std::string hr_resp;  // empty for the anls labeler
};

/// Dual-resolution inference plus comparison-judge labeling: verdict 2
/// (full-resolution answer better) labels HR, 0/1 label LR.
Stage1Result stage1_label(const Sample& s, const Clients& clients,
                          const CurationConfig& cfg);

/// Ablation labeler: LR iff the low-resolution answer scores at least
/// cfg.anls_threshold against the gold answer.
Stage1Result stage1_label_anls(const Sample& s, const modelclient::ModelClient& vlm,
                               const CurationConfig& cfg);

struct Stage2Result {
    GroundingResult grounding;
    geometry::Rect evidence;
};

/// Oracle localization for an HR-labeled sample.
Stage2Result stage2_ground(const Sample& s, const modelclient::ModelClient& oracle,
                           const CurationConfig& cfg);

struct CurationRecord {
    std::string sample_id;
    Label label = Label::LR;
    geometry::CropSet target_crops;
    protocol::Transcript transcript;
    // provenance
    std::optional<int> judge_verdict;
    std::optional<geometry::Rect> evidence;
    std::string vlm_model;
    std::string judge_model;
    std::string oracle_model;
};

/// Crop-target construction and transcript emission. HR requires the
/// evidence rect; LR must not carry one.
CurationRecord stage3_emit(const Sample& s, Label label,
                           const std::optional<geometry::Rect>& evidence,
                           const CurationConfig& cfg);

/// One sorted-key JSON object, no trailing newline.
std::string record_to_jsonl_line(const CurationRecord& rec);

struct FailureEntry {
    std::string sample_id;
    std::string kind;
    std::string error;
    bool operator==(const FailureEntry&) const = default;
};

struct PipelineSummary {
    int total = 0;
    int lr_count = 0;
    int hr_count = 0;
    int failed = 0;
    std::map<std::string, int> crop_distribution;  // crop name -> HR target count
    std::map<std::string, int> failure_kinds;
    std::vector<FailureEntry> failures;  // input order

    std::string to_json() const;
};

/// Runs every sample through stage 1 -> (HR only) stage 2 -> stage 3 with
/// at most cfg.max_in_flight samples in flight. Records stream to `out`
/// in input order, one JSON line each, independent of completion order.
/// Per-sample failures are counted and skipped; only stream-level I/O
/// failure throws.
PipelineSummary run_pipeline(const std::vector<Sample>& dataset, const Clients& clients,
                             const CurationConfig& cfg, std::ostream& out);

/// Scripted backend fixture consistent with the synthetic episode stream
/// (seed, count): full-detail answers are always right, low-detail
/// answers are right only on coarse episodes, the judge prefers the
/// full-detail answer exactly on fine-grained episodes, and the oracle
/// returns the evidence region's box. Works for both labelers.
modelclient::MockFixture make_synthetic_fixture(const simenv::EnvConfig& env_cfg,
                                                int count, std::uint64_t seed,
                                                const CurationConfig& cfg);

}  // namespace croprl::curation
