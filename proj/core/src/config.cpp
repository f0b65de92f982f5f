// SPDX-License-Identifier: Apache-2.0
#include "croprl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace croprl::config {

namespace {

/// Tracks which keys a section consumed so leftovers can be reported by
/// their full dotted path.
class Section {
public:
    Section(const nlohmann::json& j, std::string prefix)
        : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) throw ConfigError(prefix_.empty() ? "config must be a JSON object"
                                                               : prefix_ + " must be an object");
    }

    bool has(const char* key) const { return j_.contains(key) && !j_[key].is_null(); }

    template <typename T>
    void read(const char* key, T& out) {
        mark(key);
        if (!has(key)) return;
        try {
            out = j_[key].get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("config key has the wrong type: " + path(key));
        }
    }

    void read_optional_i64(const char* key, std::optional<std::int64_t>& out) {
        mark(key);
        if (!j_.contains(key)) return;
        if (j_[key].is_null()) {
            out.reset();
            return;
        }
        try {
            out = j_[key].get<std::int64_t>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("config key has the wrong type: " + path(key));
        }
    }

    const nlohmann::json* sub(const char* key) {
        mark(key);
        if (!has(key)) return nullptr;
        return &j_[key];
    }

    std::string path(const char* key) const {
        return prefix_.empty() ? key : prefix_ + "." + key;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) {
                throw ConfigError("unknown config key: " + path(it.key().c_str()));
            }
        }
    }

private:
    void mark(const char* key) { seen_.insert(key); }

    const nlohmann::json& j_;
    std::string prefix_;
    std::set<std::string> seen_;
};

void parse_reward(const nlohmann::json& j, reward::RewardConfig& out) {
    Section s(j, "reward");
    s.read("alpha_miss", out.alpha_miss);
    s.read("alpha_use", out.alpha_use);
    s.read("lambda_area", out.lambda_area);
    s.read("answer_weight", out.answer_weight);
    s.read("cost_weight", out.cost_weight);
    std::string scorer(reward::scorer_kind_name(out.scorer));
    s.read("scorer", scorer);
    if (scorer == "exact") {
        out.scorer = reward::ScorerKind::exact;
    } else if (scorer == "anls") {
        out.scorer = reward::ScorerKind::anls;
    } else if (scorer == "token_f1") {
        out.scorer = reward::ScorerKind::token_f1;
    } else if (scorer == "embedding") {
        out.scorer = reward::ScorerKind::external_embedding;
    } else if (scorer == "laaj") {
        throw ConfigError(
            "reward.scorer 'laaj' is declared but no judge-scoring backend ships in "
            "this build; use exact, anls, token_f1 or embedding");
    } else {
        throw ConfigError("reward.scorer must be one of exact|anls|token_f1|embedding, got '" +
                          scorer + "'");
    }
    s.read("embedding_endpoint", out.embedding_endpoint);
    s.read("embedding_model", out.embedding_model);
    s.read("max_in_flight", out.max_in_flight);
    s.finish();
    if (out.scorer == reward::ScorerKind::external_embedding &&
        out.embedding_endpoint.empty()) {
        throw ConfigError("missing config key: reward.embedding_endpoint "
                          "(required by the embedding scorer)");
    }
}

void parse_env(const nlohmann::json& j, simenv::EnvConfig& out) {
    Section s(j, "env");
    s.read("p_easy", out.p_easy);
    s.read("p_lr_fine", out.p_lr_fine);
    s.read("p_hr", out.p_hr);
    s.read("hint_flip", out.hint_flip);
    s.read("fraction_fine", out.fraction_fine);
    s.read("image_width", out.image_dims.width);
    s.read("image_height", out.image_dims.height);
    s.finish();
}

void parse_grpo(const nlohmann::json& j, grpo::GrpoConfig& out) {
    Section s(j, "grpo");
    s.read("group_size", out.group_size);
    s.read("eps_adv", out.eps_adv);
    s.read("eps_clip", out.eps_clip);
    s.read("beta", out.beta);
    s.read("learning_rate", out.learning_rate);
    s.read("steps", out.steps);
    s.finish();
}

void parse_cold_start(const nlohmann::json& j, grpo::ColdStartConfig& out) {
    Section s(j, "cold_start");
    s.read("size", out.size);
    s.read("overcall_rate", out.overcall_rate);
    s.read("w_tool", out.w_tool);
    s.finish();
}

void parse_sft(const nlohmann::json& j, SftConfig& out) {
    Section s(j, "sft");
    s.read("learning_rate", out.learning_rate);
    s.read("steps", out.steps);
    s.finish();
}

void parse_curation(const nlohmann::json& j, curation::CurationConfig& out) {
    Section s(j, "curation");
    s.read("vlm_model", out.vlm_model);
    s.read("judge_model", out.judge_model);
    s.read("oracle_model", out.oracle_model);
    s.read("temperature", out.temperature);
    std::string labeler = out.labeler == curation::Labeler::judge ? "judge" : "anls";
    s.read("labeler", labeler);
    if (auto l = curation::labeler_from_name(labeler)) {
        out.labeler = *l;
    } else {
        throw ConfigError("curation.labeler must be judge or anls, got '" + labeler + "'");
    }
    s.read("anls_threshold", out.anls_threshold);
    s.read("include_question_boxes", out.include_question_boxes);
    s.read("w_tool", out.w_tool);
    s.read("max_in_flight", out.max_in_flight);
    s.read("max_attempts", out.max_attempts);
    s.read("backoff_initial_ms", out.backoff_initial_ms);
    s.finish();
}

void parse_eval(const nlohmann::json& j, EvalConfig& out) {
    Section s(j, "eval");
    s.read("episodes", out.episodes);
    s.finish();
}

void parse_token_model(const nlohmann::json& j, tokens::TokenModel& out) {
    Section s(j, "token_model");
    s.read("stride", out.token_stride);
    s.read_optional_i64("min_tokens", out.min_tokens);
    s.read_optional_i64("max_tokens", out.max_tokens);
    s.finish();
}

void parse_mapping(const nlohmann::json& j, geometry::MappingConfig& out) {
    Section s(j, "mapping");
    s.read("tau", out.tau);
    s.finish();
}

}  // namespace

ArtifactConfig parse_config(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }

    ArtifactConfig cfg;
    Section root(j, "");
    if (const auto* sub = root.sub("token_model")) parse_token_model(*sub, cfg.token_model);
    if (const auto* sub = root.sub("mapping")) parse_mapping(*sub, cfg.mapping);
    if (const auto* sub = root.sub("reward")) parse_reward(*sub, cfg.reward);
    if (const auto* sub = root.sub("env")) parse_env(*sub, cfg.env);
    if (const auto* sub = root.sub("grpo")) parse_grpo(*sub, cfg.grpo);
    if (const auto* sub = root.sub("cold_start")) parse_cold_start(*sub, cfg.cold_start);
    if (const auto* sub = root.sub("sft")) parse_sft(*sub, cfg.sft);
    if (const auto* sub = root.sub("curation")) parse_curation(*sub, cfg.curation);
    if (const auto* sub = root.sub("eval")) parse_eval(*sub, cfg.eval);
    root.read("seed", cfg.seed);
    root.finish();

    // Cross-wiring: one mapping threshold and one token model everywhere.
    cfg.curation.mapping = cfg.mapping;
    cfg.env.token_model = cfg.token_model;

    // Fail now, not mid-run.
    try {
        simenv::validate_env_config(cfg.env);
        curation::validate_curation_config(cfg.curation);
        if (cfg.reward.alpha_miss < 0 || cfg.reward.alpha_use < 0 ||
            cfg.reward.lambda_area < 0) {
            throw std::invalid_argument("reward cost constants must be non-negative");
        }
        if (cfg.grpo.group_size < 2) throw std::invalid_argument("grpo.group_size must be >=2");
        if (cfg.grpo.steps < 0) throw std::invalid_argument("grpo.steps must be >=0");
        if (!(cfg.grpo.learning_rate > 0)) {
            throw std::invalid_argument("grpo.learning_rate must be positive");
        }
        if (cfg.sft.steps < 1) throw std::invalid_argument("sft.steps must be >=1");
        if (!(cfg.sft.learning_rate > 0)) {
            throw std::invalid_argument("sft.learning_rate must be positive");
        }
        if (cfg.cold_start.size < 1) throw std::invalid_argument("cold_start.size must be >=1");
        if (cfg.eval.episodes < 1) throw std::invalid_argument("eval.episodes must be >=1");
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid config value: ") + e.what());
    }
    return cfg;
}

ArtifactConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string config_to_json(const ArtifactConfig& cfg) {
    nlohmann::json j;
    j["token_model"] = {{"stride", cfg.token_model.token_stride},
                        {"min_tokens", cfg.token_model.min_tokens
                                           ? nlohmann::json(*cfg.token_model.min_tokens)
                                           : nlohmann::json(nullptr)},
                        {"max_tokens", cfg.token_model.max_tokens
                                           ? nlohmann::json(*cfg.token_model.max_tokens)
                                           : nlohmann::json(nullptr)}};
    j["mapping"] = {{"tau", cfg.mapping.tau}};
    j["reward"] = {{"alpha_miss", cfg.reward.alpha_miss},
                   {"alpha_use", cfg.reward.alpha_use},
                   {"lambda_area", cfg.reward.lambda_area},
                   {"scorer", std::string(reward::scorer_kind_name(cfg.reward.scorer))},
                   {"answer_weight", cfg.reward.answer_weight},
                   {"cost_weight", cfg.reward.cost_weight},
                   {"embedding_endpoint", cfg.reward.embedding_endpoint},
                   {"embedding_model", cfg.reward.embedding_model},
                   {"max_in_flight", cfg.reward.max_in_flight}};
    j["env"] = {{"p_easy", cfg.env.p_easy},
                {"p_lr_fine", cfg.env.p_lr_fine},
                {"p_hr", cfg.env.p_hr},
                {"hint_flip", cfg.env.hint_flip},
                {"fraction_fine", cfg.env.fraction_fine},
                {"image_width", cfg.env.image_dims.width},
                {"image_height", cfg.env.image_dims.height}};
    j["grpo"] = {{"group_size", cfg.grpo.group_size},
                 {"eps_adv", cfg.grpo.eps_adv},
                 {"eps_clip", cfg.grpo.eps_clip},
                 {"beta", cfg.grpo.beta},
                 {"learning_rate", cfg.grpo.learning_rate},
                 {"steps", cfg.grpo.steps}};
    j["cold_start"] = {{"size", cfg.cold_start.size},
                       {"overcall_rate", cfg.cold_start.overcall_rate},
                       {"w_tool", cfg.cold_start.w_tool}};
    j["sft"] = {{"learning_rate", cfg.sft.learning_rate}, {"steps", cfg.sft.steps}};
    j["curation"] = {{"vlm_model", cfg.curation.vlm_model},
                     {"judge_model", cfg.curation.judge_model},
                     {"oracle_model", cfg.curation.oracle_model},
                     {"temperature", cfg.curation.temperature},
                     {"labeler", cfg.curation.labeler == curation::Labeler::judge
                                     ? "judge"
                                     : "anls"},
                     {"anls_threshold", cfg.curation.anls_threshold},
                     {"include_question_boxes", cfg.curation.include_question_boxes},
                     {"w_tool", cfg.curation.w_tool},
                     {"max_in_flight", cfg.curation.max_in_flight},
                     {"max_attempts", cfg.curation.max_attempts},
                     {"backoff_initial_ms", cfg.curation.backoff_initial_ms}};
    j["eval"] = {{"episodes", cfg.eval.episodes}};
    j["seed"] = cfg.seed;
    return j.dump(2);
}

}  // namespace croprl::config
