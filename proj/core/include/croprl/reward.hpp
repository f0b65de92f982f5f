// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include "croprl/geometry.hpp"
#include "croprl/label.hpp"

namespace croprl::reward {

enum class ScorerKind { exact, anls, token_f1, external_embedding };

std::string_view scorer_kind_name(ScorerKind k);

struct RewardConfig {
    double alpha_miss = 2.0;    // flat penalty: labeled HR but no call
    double alpha_use = 0.25;    // flat per-call cost
    double lambda_area = 0.01;  // marginal cost per unit of requested area
    ScorerKind scorer = ScorerKind::anls;
    // Optional multiplicative weights on the two reward terms; the default
    // 1.0/1.0 keeps total = r_ans - c_tool exactly.
    double answer_weight = 1.0;
    double cost_weight = 1.0;
    // external_embedding only
    std::string embedding_endpoint;
    std::string embedding_model;
    int max_in_flight = 4;
};

struct RewardBreakdown {
    double r_ans = 0.0;
    double c_tool = 0.0;
    double area = 0.0;
    double total = 0.0;
};

/// Remote scorer failed; the trajectory stays unscored rather than
/// silently collapsing to 0.
class ScoringBackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class AnswerScorer {
public:
    virtual ~AnswerScorer() = default;
    /// Score in [0, 1]; may throw ScoringBackendError.
    virtual double score(std::string_view pred, std::string_view gold) const = 0;
};

/// Thresholded normalized Levenshtein similarity over lowercased, trimmed
/// strings: s = 1 - dist/max_len, returned when s >= 0.5, else 0. Two
/// empty strings score 1.
double anls_score(std::string_view pred, std::string_view gold);

/// 1.0 on normalized string equality, else 0.0.
double exact_score(std::string_view pred, std::string_view gold);

/// Whitespace-token multiset F1 over normalized strings.
double token_f1_score(std::string_view pred, std::string_view gold);

/// Builds the scorer named by cfg.scorer. external_embedding produces an
/// HTTP client (cosine similarity of a two-text embedding call, clamped
/// to [0, 1]); the others are pure local functions.
std::unique_ptr<AnswerScorer> make_scorer(const RewardConfig& cfg);

/// Tool cost term: alpha_miss when labeled HR with no call,
/// alpha_use + lambda * union_area(C) for any call, 0 for a clean LR
/// direct answer.
double tool_cost(const geometry::CropSet& crops, Label y, const RewardConfig& cfg);

/// Composite trajectory reward using an explicit scorer.
RewardBreakdown trajectory_reward(std::string_view pred, std::string_view gold,
                                  const geometry::CropSet& crops, Label y,
                                  const RewardConfig& cfg,
                                  const AnswerScorer& scorer);

/// Convenience overload constructing the built-in scorer from cfg; the
/// external_embedding kind requires the explicit-scorer overload.
RewardBreakdown trajectory_reward(std::string_view pred, std::string_view gold,
                                  const geometry::CropSet& crops, Label y,
                                  const RewardConfig& cfg);

}  // namespace croprl::reward
