// SPDX-License-Identifier: Apache-2.0
#include "croprl/curation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "croprl/reward.hpp"
#include "croprl/rng.hpp"
#include "json.hpp"

namespace croprl::curation {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string replace_all(std::string text, std::string_view what, const std::string& with) {
    std::size_t pos = 0;
    while ((pos = text.find(what, pos)) != std::string::npos) {
        text.replace(pos, what.size(), with);
        pos += with.size();
    }
    return text;
}

std::string snippet(const std::string& s) {
    std::string t = trim(s);
    if (t.size() > 80) t = t.substr(0, 77) + "...";
    return t;
}

std::vector<geometry::Rect> parse_box_list(const nlohmann::json& j, const char* key) {
    std::vector<geometry::Rect> out;
    if (!j.contains(key)) return out;
    const auto& arr = j.at(key);
    if (!arr.is_array()) {
        throw CurationParseError("grounding-parse",
                                 std::string("'") + key + "' is not a box list");
    }
    for (const auto& box : arr) {
        if (!box.is_array() || box.size() != 4) {
            throw CurationParseError("grounding-parse",
                                     std::string("'") + key + "' box is not 4 numbers");
        }
        double v[4];
        for (int k = 0; k < 4; ++k) {
            if (!box[k].is_number()) {
                throw CurationParseError("grounding-parse",
                                         std::string("'") + key + "' box is not numeric");
            }
            v[k] = std::clamp(box[k].get<double>() / 1000.0, 0.0, 1.0);
        }
        geometry::Rect r{v[0], v[1], v[2], v[3]};
        if (r.x2 <= r.x1 || r.y2 <= r.y1) continue;  // degenerate after clamping
        out.push_back(r);
    }
    return out;
}

nlohmann::json rect_json(const geometry::Rect& r) {
    return nlohmann::json::array({r.x1, r.y1, r.x2, r.y2});
}

}  // namespace

std::vector<Sample> read_dataset_jsonl(std::istream& in) {
    std::vector<Sample> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            Sample s;
            s.sample_id = j.at("sample_id").get<std::string>();
            s.image = j.at("image").get<std::string>();
            s.question = j.at("question").get<std::string>();
            s.answer = j.at("answer").get<std::string>();
            if (j.contains("width")) s.width = j["width"].get<std::int64_t>();
            if (j.contains("height")) s.height = j["height"].get<std::int64_t>();
            if (s.question.empty() || s.answer.empty()) {
                throw std::runtime_error("question and answer must be non-empty");
            }
            out.push_back(std::move(s));
        } catch (const std::exception& e) {
            throw std::runtime_error("dataset line " + std::to_string(line_no) + ": " +
                                     e.what());
        }
    }
    return out;
}

std::vector<Sample> read_dataset_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read dataset file: " + path);
    return read_dataset_jsonl(in);
}

const std::string& judge_prompt_template() {
    static const std::string t =
        "You are tasked with evaluating which of two AI responses better answers the "
        "given question based on the provided ground truth.\n"
        "\n"
        "Original prompt: {prompt}\n"
        "\n"
        "Ground Truth Answer: {gt}\n"
        "\n"
        "Response 1:\n"
        "{lr_resp}\n"
        "\n"
        "Response 2:\n"
        "{hr_resp}\n"
        "\n"
        "Compare both responses against the ground truth answer and respond with just "
        "one number, DO NOT include any other text:\n"
        "0 - Both responses are equally good or equally bad, no significant difference\n"
        "1 - Response 1 is better\n"
        "2 - Response 2 is better";
    return t;
}

std::string fill_judge_prompt(const std::string& question, const std::string& gt,
                              const std::string& lr_resp, const std::string& hr_resp) {
    std::string t = judge_prompt_template();
    t = replace_all(std::move(t), "{prompt}", question);
    t = replace_all(std::move(t), "{gt}", gt);
    t = replace_all(std::move(t), "{lr_resp}", lr_resp);
    t = replace_all(std::move(t), "{hr_resp}", hr_resp);
    return t;
}

const std::string& oracle_prompt_template() {
    static const std::string t =
        "You are an expert visual assistant. Your task is to analyze an image and "
        "determine which regions are relevant for both understanding and answering a "
        "given question.\n"
        "\n"
        "Instructions:\n"
        "1. Analyze the question and identify what visual information is needed\n"
        "2. Localize TWO types of regions:\n"
        "  a) QUESTION region: The area containing visual elements mentioned in or "
        "relevant to the question\n"
        "  b) ANSWER region: The area containing the answer to the question\n"
        "3. For each region type, provide a bounding box in normalized coordinates "
        "[x_min, y_min, x_max, y_max]\n"
        "  - Coordinates should be between 0 and 1000 (normalized to image dimensions)\n"
        "  - x_min, y_min: top-left corner of the bounding box\n"
        "  - x_max, y_max: bottom-right corner of the bounding box\n"
        "4. Provide tight bounding boxes that closely encompass only the relevant "
        "text/visual elements\n"
        "5. Output ONLY a Python dictionary with two keys: 'question' and 'answer' - "
        "NOTHING ELSE!!\n"
        "\n"
        "CRITICAL: Your entire response must be ONLY a Python dictionary. Do not "
        "include any explanation, reasoning, or other text.\n"
        "\n"
        "Output format:\n"
        "{\n"
        "  'question': [[x_min, y_min, x_max, y_max]],\n"
        "  'answer': [[x_min, y_min, x_max, y_max]]\n"
        "}\n"
        "\n"
        "Notes:\n"
        "- If the question and answer regions overlap significantly or are the same, "
        "you may provide the same coordinates for both\n"
        "- If multiple regions are needed for either question or answer, include "
        "multiple bounding boxes in the list\n"
        "- Keep bounding boxes as tight as possible around the relevant text or visual "
        "elements\n"
        "\n"
        "Your response must be ONLY: {'question': [[x_min, y_min, x_max, y_max], ...], "
        "'answer': [[x_min, y_min, x_max, y_max], ...]}\n"
        "No other text, no explanation, just the dictionary.\n"
        "Question: ...";
    return t;
}

std::string fill_oracle_prompt(const std::string& question) {
    const std::string& t = oracle_prompt_template();
    const std::string suffix = "Question: ...";
    // The template ends with the placeholder line; splice the question in
    // place of the trailing ellipsis.
    std::string out = t.substr(0, t.size() - suffix.size());
    out += "Question: ";
    out += question;
    return out;
}

int parse_verdict(const std::string& reply) {
    std::string t = trim(reply);
    if (t.size() == 1 && t[0] >= '0' && t[0] <= '2') return t[0] - '0';
    for (char c : reply) {
        if (c >= '0' && c <= '2') return c - '0';
    }
    throw CurationParseError("verdict-parse",
                             "no verdict digit in judge reply: \"" + snippet(reply) + "\"");
}

GroundingResult parse_grounding(const std::string& reply) {
    std::size_t l = reply.find('{');
    std::size_t r = reply.rfind('}');
    if (l == std::string::npos || r == std::string::npos || r < l) {
        throw CurationParseError("grounding-parse",
                                 "no dict literal in oracle reply: \"" + snippet(reply) +
                                     "\"");
    }
    std::string body = reply.substr(l, r - l + 1);
    // Python dict literal -> JSON: the box payload is quotes-and-numbers
    // only, so swapping quote characters is lossless.
    for (char& c : body) {
        if (c == '\'') c = '"';
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw CurationParseError("grounding-parse",
                                 std::string("oracle reply is not a parsable dict: ") +
                                     e.what());
    }
    if (!j.is_object()) {
        throw CurationParseError("grounding-parse", "oracle reply is not a dict");
    }
    GroundingResult g;
    g.raw = reply;
    g.question_boxes = parse_box_list(j, "question");
    g.answer_boxes = parse_box_list(j, "answer");
    if (g.answer_boxes.empty()) {
        throw CurationParseError("grounding-parse", "empty answer box list");
    }
    return g;
}

geometry::Rect evidence_rect(const GroundingResult& g, bool include_question_boxes) {
    std::vector<geometry::Rect> boxes = g.answer_boxes;
    if (include_question_boxes) {
        boxes.insert(boxes.end(), g.question_boxes.begin(), g.question_boxes.end());
    }
    if (boxes.empty()) throw std::invalid_argument("no boxes to take a hull of");
    geometry::Rect hull = boxes.front();
    for (const geometry::Rect& b : boxes) {
        hull.x1 = std::min(hull.x1, b.x1);
        hull.y1 = std::min(hull.y1, b.y1);
        hull.x2 = std::max(hull.x2, b.x2);
        hull.y2 = std::max(hull.y2, b.y2);
    }
    return hull;
}

std::optional<Labeler> labeler_from_name(std::string_view name) {
    if (name == "judge") return Labeler::judge;
    if (name == "anls") return Labeler::anls;
    return std::nullopt;
}

void validate_curation_config(const CurationConfig& cfg) {
    if (!(cfg.anls_threshold >= 0.0 && cfg.anls_threshold <= 1.0)) {
        throw std::invalid_argument("anls_threshold must be in [0,1]");
    }
    if (cfg.w_tool < 0.0) throw std::invalid_argument("w_tool must be non-negative");
    if (cfg.max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >=1");
    if (cfg.max_attempts < 1) throw std::invalid_argument("max_attempts must be >=1");
    if (cfg.backoff_initial_ms < 0) {
        throw std::invalid_argument("backoff_initial_ms must be non-negative");
    }
    if (!(cfg.temperature >= 0.0)) throw std::invalid_argument("temperature must be >=0");
    if (!(cfg.mapping.tau > 0.0 && cfg.mapping.tau <= 1.0)) {
        throw std::invalid_argument("mapping tau must be in (0,1]");
    }
}

modelclient::ChatRequest build_answer_request(const Sample& s,
                                              modelclient::ImageDetail detail,
                                              const CurationConfig& cfg) {
    modelclient::ChatRequest req;
    req.model = cfg.vlm_model;
    req.temperature = cfg.temperature;
    modelclient::ChatMessage user;
    user.role = "user";
    user.parts.push_back(modelclient::TextPart{s.question});
    user.parts.push_back(modelclient::ImagePart{s.image, detail, std::nullopt});
    req.messages.push_back(std::move(user));
    return req;
}

modelclient::ChatRequest build_judge_request(const Sample& s, const std::string& lr_resp,
                                             const std::string& hr_resp,
                                             const CurationConfig& cfg) {
    modelclient::ChatRequest req;
    req.model = cfg.judge_model;
    req.temperature = cfg.temperature;
    modelclient::ChatMessage user;
    user.role = "user";
    user.parts.push_back(
        modelclient::TextPart{fill_judge_prompt(s.question, s.answer, lr_resp, hr_resp)});
    req.messages.push_back(std::move(user));
    return req;
}

modelclient::ChatRequest build_oracle_request(const Sample& s, const CurationConfig& cfg) {
    modelclient::ChatRequest req;
    req.model = cfg.oracle_model;
    req.temperature = cfg.temperature;
    modelclient::ChatMessage user;
    user.role = "user";
    user.parts.push_back(modelclient::TextPart{fill_oracle_prompt(s.question)});
    user.parts.push_back(
        modelclient::ImagePart{s.image, modelclient::ImageDetail::full, std::nullopt});
    req.messages.push_back(std::move(user));
    return req;
}

namespace {

template <typename F>
auto with_retry(const CurationConfig& cfg, F&& f) -> decltype(f()) {
    int attempt = 0;
    for (;;) {
        try {
            return f();
        } catch (const modelclient::TransportError&) {
            if (++attempt >= cfg.max_attempts) throw;
            long delay = static_cast<long>(cfg.backoff_initial_ms) << (attempt - 1);
            if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
    }
}

}  // namespace

Stage1Result stage1_label(const Sample& s, const Clients& clients,
                          const CurationConfig& cfg) {
    if (!clients.vlm || !clients.judge) {
        throw std::invalid_argument("judge labeling needs vlm and judge clients");
    }
    Stage1Result r;
    r.lr_resp = with_retry(cfg, [&] {
        return clients.vlm->complete(
            build_answer_request(s, modelclient::ImageDetail::low, cfg));
    });
    r.hr_resp = with_retry(cfg, [&] {
        return clients.vlm->complete(
            build_answer_request(s, modelclient::ImageDetail::full, cfg));
    });
    std::string verdict_reply = with_retry(cfg, [&] {
        return clients.judge->complete(build_judge_request(s, r.lr_resp, r.hr_resp, cfg));
    });
    r.verdict = parse_verdict(verdict_reply);
    r.label = *r.verdict == 2 ? Label::HR : Label::LR;
    return r;
}

Stage1Result stage1_label_anls(const Sample& s, const modelclient::ModelClient& vlm,
                               const CurationConfig& cfg) {
    Stage1Result r;
    r.lr_resp = with_retry(cfg, [&] {
        return vlm.complete(build_answer_request(s, modelclient::ImageDetail::low, cfg));
    });
    double score = reward::anls_score(r.lr_resp, s.answer);
    r.label = score >= cfg.anls_threshold ? Label::LR : Label::HR;
    return r;
}

Stage2Result stage2_ground(const Sample& s, const modelclient::ModelClient& oracle,
                           const CurationConfig& cfg) {
    std::string reply =
        with_retry(cfg, [&] { return oracle.complete(build_oracle_request(s, cfg)); });
    Stage2Result out;
    out.grounding = parse_grounding(reply);
    out.evidence = evidence_rect(out.grounding, cfg.include_question_boxes);
    return out;
}

CurationRecord stage3_emit(const Sample& s, Label label,
                           const std::optional<geometry::Rect>& evidence,
                           const CurationConfig& cfg) {
    if (label == Label::HR && !evidence) {
        throw std::invalid_argument("an HR record needs an evidence rect");
    }
    if (label == Label::LR && evidence) {
        throw std::invalid_argument("an LR record does not take an evidence rect");
    }
    CurationRecord rec;
    rec.sample_id = s.sample_id;
    rec.label = label;
    if (label == Label::HR) {
        rec.target_crops = geometry::map_bbox_to_crops(*evidence, cfg.mapping);
    }
    rec.transcript = protocol::build_transcript(s.sample_id, s.question, s.image, label,
                                                rec.target_crops, s.answer, cfg.w_tool);
    rec.evidence = evidence;
    rec.vlm_model = cfg.vlm_model;
    rec.judge_model = cfg.judge_model;
    rec.oracle_model = cfg.oracle_model;
    return rec;
}

std::string record_to_jsonl_line(const CurationRecord& rec) {
    nlohmann::json j;
    j["sample_id"] = rec.sample_id;
    j["label"] = std::string(label_name(rec.label));
    j["target_crops"] = rec.target_crops.names();
    j["transcript"] = nlohmann::json::parse(protocol::transcript_to_jsonl_line(rec.transcript));
    nlohmann::json prov;
    prov["judge_verdict"] =
        rec.judge_verdict ? nlohmann::json(*rec.judge_verdict) : nlohmann::json(nullptr);
    prov["evidence"] = rec.evidence ? rect_json(*rec.evidence) : nlohmann::json(nullptr);
    prov["models"] = nlohmann::json{{"vlm", rec.vlm_model},
                                    {"judge", rec.judge_model},
                                    {"oracle", rec.oracle_model}};
    j["provenance"] = std::move(prov);
    return j.dump();
}

std::string PipelineSummary::to_json() const {
    nlohmann::json j;
    j["total"] = total;
    j["lr"] = lr_count;
    j["hr"] = hr_count;
    j["failed"] = failed;
    j["crop_distribution"] = crop_distribution;
    j["failure_kinds"] = failure_kinds;
    nlohmann::json rows = nlohmann::json::array();
    for (const FailureEntry& f : failures) {
        rows.push_back({{"sample_id", f.sample_id}, {"kind", f.kind}, {"error", f.error}});
    }
    j["failures"] = std::move(rows);
    return j.dump(2);
}

PipelineSummary run_pipeline(const std::vector<Sample>& dataset, const Clients& clients,
                             const CurationConfig& cfg, std::ostream& out) {
    validate_curation_config(cfg);
    if (!clients.vlm) throw std::invalid_argument("pipeline needs a vlm client");
    if (cfg.labeler == Labeler::judge && !clients.judge) {
        throw std::invalid_argument("judge labeling needs a judge client");
    }
    if (!clients.oracle) throw std::invalid_argument("pipeline needs an oracle client");

    struct Slot {
        bool ok = false;
        std::string line;
        Label label = Label::LR;
        std::vector<std::string> crops;
        std::string kind;
        std::string error;
    };

    const std::size_t n = dataset.size();
    std::vector<Slot> slots(n);
    std::vector<char> done(n, 0);
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::size_t flushed = 0;

    PipelineSummary sum;
    sum.total = static_cast<int>(n);

    auto process = [&](std::size_t i, Slot& slot) {
        const Sample& s = dataset[i];
        try {
            Stage1Result s1 = cfg.labeler == Labeler::judge
                                  ? stage1_label(s, clients, cfg)
                                  : stage1_label_anls(s, *clients.vlm, cfg);
            std::optional<geometry::Rect> ev;
            if (s1.label == Label::HR) {
                ev = stage2_ground(s, *clients.oracle, cfg).evidence;
            }
            CurationRecord rec = stage3_emit(s, s1.label, ev, cfg);
            rec.judge_verdict = s1.verdict;
            slot.line = record_to_jsonl_line(rec);
            slot.label = rec.label;
            slot.crops = rec.target_crops.names();
            slot.ok = true;
        } catch (const CurationParseError& e) {
            slot.kind = e.kind();
            slot.error = e.what();
        } catch (const modelclient::TransportError& e) {
            slot.kind = "transport";
            slot.error = e.what();
        } catch (const modelclient::ClientError& e) {
            slot.kind = "client";
            slot.error = e.what();
        } catch (const std::exception& e) {
            slot.kind = "error";
            slot.error = e.what();
        }
    };

    // Single serialization point: whoever finishes a slot flushes the
    // ready prefix, so output order is input order under any schedule.
    auto flush_ready = [&] {
        while (flushed < n && done[flushed]) {
            Slot& sl = slots[flushed];
            if (sl.ok) {
                out << sl.line << '\n';
                if (sl.label == Label::HR) {
                    ++sum.hr_count;
                    for (const std::string& c : sl.crops) ++sum.crop_distribution[c];
                } else {
                    ++sum.lr_count;
                }
            } else {
                ++sum.failed;
                ++sum.failure_kinds[sl.kind];
                sum.failures.push_back({dataset[flushed].sample_id, sl.kind, sl.error});
            }
            ++flushed;
        }
    };

    auto work = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            Slot slot;
            process(i, slot);
            std::lock_guard<std::mutex> lk(mu);
            slots[i] = std::move(slot);
            done[i] = 1;
            flush_ready();
        }
    };

    int workers = std::clamp<int>(cfg.max_in_flight, 1, 64);
    workers = std::min<int>(workers, std::max<int>(1, static_cast<int>(n)));
    {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
    }
    {
        std::lock_guard<std::mutex> lk(mu);
        flush_ready();
    }
    out.flush();
    if (!out) throw std::runtime_error("failed writing curation output stream");
    return sum;
}

modelclient::MockFixture make_synthetic_fixture(const simenv::EnvConfig& env_cfg,
                                                int count, std::uint64_t seed,
                                                const CurationConfig& cfg) {
    if (count < 0) throw std::invalid_argument("episode count must be non-negative");
    simenv::SimEnv env(env_cfg);
    modelclient::MockFixture fx;
    const std::string blurry = "unreadable at this resolution";
    for (int i = 0; i < count; ++i) {
        simenv::Episode ep = env.episode_at(seed, static_cast<std::uint64_t>(i));
        simenv::DatasetRow row = simenv::dataset_row(ep, static_cast<std::uint64_t>(i));
        Sample s{row.sample_id, row.image, ep.dims.width, ep.dims.height,
                 row.question,  row.answer};
        bool fine = ep.fine_grained && ep.evidence.has_value();
        std::string lr_resp = fine ? blurry : ep.answer;

        fx.replies[modelclient::request_fingerprint(
            build_answer_request(s, modelclient::ImageDetail::low, cfg))] = lr_resp;
        fx.replies[modelclient::request_fingerprint(
            build_answer_request(s, modelclient::ImageDetail::full, cfg))] = ep.answer;
        fx.replies[modelclient::request_fingerprint(
            build_judge_request(s, lr_resp, ep.answer, cfg))] = fine ? "2" : "0";
        if (fine) {
            const geometry::Rect& r = geometry::crop_rect(*ep.evidence);
            char box[96];
            std::snprintf(box, sizeof(box), "[[%lld, %lld, %lld, %lld]]",
                          static_cast<long long>(std::llround(r.x1 * 1000)),
                          static_cast<long long>(std::llround(r.y1 * 1000)),
                          static_cast<long long>(std::llround(r.x2 * 1000)),
                          static_cast<long long>(std::llround(r.y2 * 1000)));
            fx.replies[modelclient::request_fingerprint(build_oracle_request(s, cfg))] =
                std::string("{'question': ") + box + ", 'answer': " + box + "}";
        }
    }
    return fx;
}

}  // namespace croprl::curation
