// SPDX-License-Identifier: Apache-2.0
#include "croprl/sim_env.hpp"

#include <stdexcept>

#include "croprl/rng.hpp"
#include "json.hpp"

namespace croprl::simenv {

namespace {

constexpr std::uint64_t kEpisodeStreamTag = 0x45505349;  // episode substream salt

void check_prob(double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument(std::string("env probability out of [0,1]: ") + name);
    }
}

std::pair<double, double> region_center(geometry::CropId id) {
    const geometry::Rect& r = geometry::crop_rect(id);
    return {(r.x1 + r.x2) / 2.0, (r.y1 + r.y2) / 2.0};
}

}  // namespace

void validate_env_config(const EnvConfig& cfg) {
    check_prob(cfg.p_easy, "p_easy");
    check_prob(cfg.p_lr_fine, "p_lr_fine");
    check_prob(cfg.p_hr, "p_hr");
    check_prob(cfg.hint_flip, "hint_flip");
    check_prob(cfg.fraction_fine, "fraction_fine");
    tokens::validate_dims(cfg.image_dims);
}

bool covers_evidence(const geometry::CropSet& crops, geometry::CropId evidence) {
    auto [cx, cy] = region_center(evidence);
    for (geometry::CropId id : crops.ids()) {
        if (geometry::crop_rect(id).contains_point_strict(cx, cy)) return true;
    }
    return false;
}

SimEnv::SimEnv(EnvConfig cfg) : cfg_(cfg) { validate_env_config(cfg_); }

Episode SimEnv::sample_episode(std::mt19937_64& g) const {
    Episode ep;
    ep.dims = cfg_.image_dims;
    ep.features.assign(kFeatureDim, 0.0);
    ep.features[kFeatureDim - 1] = 1.0;  // bias

    ep.fine_grained = rng::uniform01(g) < cfg_.fraction_fine;
    if (ep.fine_grained) {
        int region = rng::uniform_int(g, kHintSlots);
        ep.evidence = static_cast<geometry::CropId>(region);
        int hint = region;
        if (rng::uniform01(g) < cfg_.hint_flip) {
            int other = rng::uniform_int(g, kHintSlots - 1);
            hint = other >= region ? other + 1 : other;
        }
        ep.features[hint] = 1.0;
        ep.features[kHintSlots] = 1.0;
    }
    ep.answer = "ans_" + std::to_string(g() % 100000);
    return ep;
}

tokens::TokenAccount SimEnv::trajectory_account(const geometry::CropSet& crops) const {
    std::vector<tokens::ImageDims> views{tokens::low_res_dims(cfg_.image_dims)};
    for (geometry::CropId id : crops.ids()) {
        views.push_back(tokens::crop_pixel_dims(geometry::crop_rect(id), cfg_.image_dims));
    }
    return tokens::rtr_sample(views, cfg_.image_dims, cfg_.token_model);
}

RolloutOutcome SimEnv::rollout(const Episode& ep,
                               const protocol::FirstTurnAction& action,
                               std::mt19937_64& g) const {
    geometry::CropSet crops = protocol::requested_crops(action);

    double p_correct;
    if (!ep.fine_grained || !ep.evidence) {
        p_correct = cfg_.p_easy;
    } else if (!crops.empty() && covers_evidence(crops, *ep.evidence)) {
        p_correct = cfg_.p_hr;
    } else {
        p_correct = cfg_.p_lr_fine;
    }

    RolloutOutcome out;
    out.correct = rng::uniform01(g) < p_correct;
    out.answer_text = out.correct ? ep.answer : "wrong";
    out.account = trajectory_account(crops);
    return out;
}

Episode SimEnv::episode_at(std::uint64_t seed, std::uint64_t index) const {
    auto g = rng::substream(seed, kEpisodeStreamTag, index);
    return sample_episode(g);
}

PolicyValue optimal_policy_value(const EnvConfig& cfg,
                                 const reward::RewardConfig& rcfg) {
    validate_env_config(cfg);
    SimEnv env(cfg);

    PolicyValue v;
    double lr_rtr = env.trajectory_account({}).rtr;

    // Coarse episodes: direct answer.
    double p_coarse = 1.0 - cfg.fraction_fine;
    v.expected_reward += p_coarse * (rcfg.answer_weight * cfg.p_easy -
                                     rcfg.cost_weight * reward::tool_cost({}, Label::LR, rcfg));
    v.accuracy += p_coarse * cfg.p_easy;
    v.rtr += p_coarse * lr_rtr;

    // Fine episodes: request the hinted region; enumerate evidence x hint.
    double area_sum = 0.0;
    for (int e = 0; e < kHintSlots; ++e) {
        auto evidence = static_cast<geometry::CropId>(e);
        for (int h = 0; h < kHintSlots; ++h) {
            double p_hint = h == e ? 1.0 - cfg.hint_flip
                                   : cfg.hint_flip / (kHintSlots - 1);
            if (p_hint == 0.0) continue;
            double p = cfg.fraction_fine * (1.0 / kHintSlots) * p_hint;
            geometry::CropSet crops{static_cast<geometry::CropId>(h)};
            double p_correct = covers_evidence(crops, evidence) ? cfg.p_hr : cfg.p_lr_fine;
            double cost = reward::tool_cost(crops, Label::HR, rcfg);
            v.expected_reward += p * (rcfg.answer_weight * p_correct - rcfg.cost_weight * cost);
            v.accuracy += p * p_correct;
            v.rtr += p * env.trajectory_account(crops).rtr;
            area_sum += p * geometry::crop_set_area(crops);
        }
    }
    v.call_rate = cfg.fraction_fine;
    v.mean_called_area = cfg.fraction_fine > 0.0 ? area_sum / cfg.fraction_fine : 0.0;
    return v;
}

DatasetRow dataset_row(const Episode& ep, std::uint64_t index) {
    char id[32];
    std::snprintf(id, sizeof(id), "ep-%06llu", static_cast<unsigned long long>(index));
    DatasetRow row;
    row.sample_id = id;
    row.image = std::string("synthetic://") + id;
    row.question = std::string("What is the target token in episode ") + id + "?";
    row.answer = ep.answer;
    return row;
}

void write_dataset_jsonl(const EnvConfig& cfg, int count, std::uint64_t seed,
                         std::ostream& out) {
    if (count < 0) throw std::invalid_argument("episode count must be non-negative");
    SimEnv env(cfg);
    for (int i = 0; i < count; ++i) {
        Episode ep = env.episode_at(seed, static_cast<std::uint64_t>(i));
        DatasetRow row = dataset_row(ep, static_cast<std::uint64_t>(i));
        nlohmann::json j{{"sample_id", row.sample_id},
                         {"image", row.image},
                         {"width", ep.dims.width},
                         {"height", ep.dims.height},
                         {"question", row.question},
                         {"answer", row.answer}};
        out << j.dump() << '\n';
    }
}

}  // namespace croprl::simenv
