// SPDX-License-Identifier: Apache-2.0
#include "croprl/reward.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <semaphore>
#include <vector>

#include "http_util.hpp"
#include "httplib.h"
#include "json.hpp"

namespace croprl::reward {

namespace {

std::string normalize(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    std::string out;
    out.reserve(e - b);
    for (std::size_t i = b; i < e; ++i) {
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[i]))));
    }
    return out;
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1);
    std::vector<std::size_t> cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::vector<std::string> whitespace_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t start = i;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i > start) out.push_back(s.substr(start, i - start));
    }
    return out;
}

class ExactScorer final : public AnswerScorer {
public:
    double score(std::string_view p, std::string_view g) const override {
        return exact_score(p, g);
    }
};

class AnlsScorer final : public AnswerScorer {
public:
    double score(std::string_view p, std::string_view g) const override {
        return anls_score(p, g);
    }
};

class TokenF1Scorer final : public AnswerScorer {
public:
    double score(std::string_view p, std::string_view g) const override {
        return token_f1_score(p, g);
    }
};

/// Embeddings-endpoint scorer: one POST per score call carrying both
/// texts, cosine similarity of the two returned vectors clamped to
/// [0, 1]. In-flight requests are bounded so worker pools cannot stampede
/// the backend.
class EmbeddingScorer final : public AnswerScorer {
public:
    EmbeddingScorer(std::string endpoint, std::string model, int max_in_flight)
        : url_(httputil::parse_http_url(endpoint)),
          model_(std::move(model)),
          slots_(std::max(1, max_in_flight)) {}

    double score(std::string_view pred, std::string_view gold) const override {
        slots_.acquire();
        struct Release {
            std::counting_semaphore<>& s;
            ~Release() { s.release(); }
        } release{slots_};

        nlohmann::json body{{"input", {std::string(pred), std::string(gold)}}};
        if (!model_.empty()) body["model"] = model_;

        httplib::Client cli(url_.host, url_.port);
        cli.set_connection_timeout(10);
        cli.set_read_timeout(30);
        auto res = cli.Post(url_.path, body.dump(), "application/json");
        if (!res) {
            throw ScoringBackendError("embedding endpoint unreachable: " +
                                      httplib::to_string(res.error()));
        }
        if (res->status != 200) {
            throw ScoringBackendError("embedding endpoint returned status " +
                                      std::to_string(res->status));
        }
        try {
            auto j = nlohmann::json::parse(res->body);
            const auto& data = j.at("data");
            auto a = data.at(0).at("embedding").get<std::vector<double>>();
            auto b = data.at(1).at("embedding").get<std::vector<double>>();
            if (a.size() != b.size() || a.empty()) {
                throw ScoringBackendError("embedding response vectors mismatched");
            }
            double dot = 0.0;
            double na = 0.0;
            double nb = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                dot += a[i] * b[i];
                na += a[i] * a[i];
                nb += b[i] * b[i];
            }
            if (na == 0.0 || nb == 0.0) {
                throw ScoringBackendError("embedding response contains a zero vector");
            }
            double cos = dot / (std::sqrt(na) * std::sqrt(nb));
            return std::clamp(cos, 0.0, 1.0);
        } catch (const nlohmann::json::exception& e) {
            throw ScoringBackendError(std::string("malformed embedding response: ") +
                                      e.what());
        }
    }

private:
    httputil::ParsedUrl url_;
    std::string model_;
    mutable std::counting_semaphore<> slots_;
};

void validate_reward_config(const RewardConfig& cfg) {
    if (cfg.alpha_miss < 0.0 || cfg.alpha_use < 0.0 || cfg.lambda_area < 0.0) {
        throw std::invalid_argument("reward cost constants must be non-negative");
    }
    if (cfg.answer_weight < 0.0 || cfg.cost_weight < 0.0) {
        throw std::invalid_argument("reward term weights must be non-negative");
    }
}

}  // namespace

std::string_view scorer_kind_name(ScorerKind k) {
    switch (k) {
        case ScorerKind::exact: return "exact";
        case ScorerKind::anls: return "anls";
        case ScorerKind::token_f1: return "token_f1";
        case ScorerKind::external_embedding: return "embedding";
    }
    return "";
}

double anls_score(std::string_view pred, std::string_view gold) {
    std::string p = normalize(pred);
    std::string g = normalize(gold);
    if (p.empty() && g.empty()) return 1.0;
    std::size_t max_len = std::max(p.size(), g.size());
    double s = 1.0 - static_cast<double>(levenshtein(p, g)) / static_cast<double>(max_len);
    return s >= 0.5 ? s : 0.0;
}

double exact_score(std::string_view pred, std::string_view gold) {
    return normalize(pred) == normalize(gold) ? 1.0 : 0.0;
}

double token_f1_score(std::string_view pred, std::string_view gold) {
    auto p = whitespace_tokens(normalize(pred));
    auto g = whitespace_tokens(normalize(gold));
    if (p.empty() && g.empty()) return 1.0;
    if (p.empty() || g.empty()) return 0.0;
    std::sort(p.begin(), p.end());
    std::sort(g.begin(), g.end());
    std::vector<std::string> common;
    std::set_intersection(p.begin(), p.end(), g.begin(), g.end(),
                          std::back_inserter(common));
    if (common.empty()) return 0.0;
    double precision = static_cast<double>(common.size()) / static_cast<double>(p.size());
    double recall = static_cast<double>(common.size()) / static_cast<double>(g.size());
    return 2.0 * precision * recall / (precision + recall);
}

std::unique_ptr<AnswerScorer> make_scorer(const RewardConfig& cfg) {
    switch (cfg.scorer) {
        case ScorerKind::exact: return std::make_unique<ExactScorer>();
        case ScorerKind::anls: return std::make_unique<AnlsScorer>();
        case ScorerKind::token_f1: return std::make_unique<TokenF1Scorer>();
        case ScorerKind::external_embedding:
            if (cfg.embedding_endpoint.empty()) {
                throw std::invalid_argument(
                    "embedding scorer needs reward.embedding_endpoint");
            }
            return std::make_unique<EmbeddingScorer>(cfg.embedding_endpoint,
                                                     cfg.embedding_model,
                                                     cfg.max_in_flight);
    }
    throw std::invalid_argument("unknown scorer kind");
}

double tool_cost(const geometry::CropSet& crops, Label y, const RewardConfig& cfg) {
    validate_reward_config(cfg);
    if (!crops.empty()) {
        return cfg.alpha_use + cfg.lambda_area * geometry::crop_set_area(crops);
    }
    return y == Label::HR ? cfg.alpha_miss : 0.0;
}

RewardBreakdown trajectory_reward(std::string_view pred, std::string_view gold,
                                  const geometry::CropSet& crops, Label y,
                                  const RewardConfig& cfg,
                                  const AnswerScorer& scorer) {
    RewardBreakdown out;
    out.r_ans = scorer.score(pred, gold);
    out.area = geometry::crop_set_area(crops);
    out.c_tool = tool_cost(crops, y, cfg);
    out.total = cfg.answer_weight * out.r_ans - cfg.cost_weight * out.c_tool;
    return out;
}

RewardBreakdown trajectory_reward(std::string_view pred, std::string_view gold,
                                  const geometry::CropSet& crops, Label y,
                                  const RewardConfig& cfg) {
    if (cfg.scorer == ScorerKind::external_embedding) {
        throw std::invalid_argument(
            "external embedding scorer requires the explicit-scorer overload");
    }
    auto scorer = make_scorer(cfg);
    return trajectory_reward(pred, gold, crops, y, cfg, *scorer);
}

}  // namespace croprl::reward
