// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "croprl/geometry.hpp"
#include "croprl/protocol.hpp"
#include "croprl/reward.hpp"
#include "croprl/sim_env.hpp"

namespace croprl::grpo {

struct GrpoConfig {
    int group_size = 8;
    double eps_adv = 1e-4;
    double eps_clip = 0.2;
    double beta = 0.05;
    // Step size and budget for the linear toy policy; production-scale
    // fine-tuning uses values orders of magnitude smaller.
    double learning_rate = 0.08;
    int steps = 4000;
};

/// Linear-softmax policy over a fixed discrete action vocabulary.
class Policy {
public:
    Policy(int feature_dim, int action_count);
    Policy(int feature_dim, std::vector<std::string> action_names);

    int feature_dim() const { return feature_dim_; }
    int action_count() const { return static_cast<int>(action_names_.size()); }
    const std::vector<std::string>& action_names() const { return action_names_; }

    double weight(int action, int feature) const;
    double& weight(int action, int feature);
    std::span<const double> weights() const { return w_; }
    std::span<double> weights() { return w_; }

    std::vector<double> logits(std::span<const double> f) const;
    std::vector<double> probs(std::span<const double> f) const;
    int sample(std::span<const double> f, std::mt19937_64& rng) const;

    /// Versioned JSON round-trip; from_json throws std::runtime_error on
    /// any schema mismatch.
    std::string to_json() const;
    static Policy from_json(const std::string& text);

private:
    int feature_dim_;
    std::vector<std::string> action_names_;
    std::vector<double> w_;  // action-major
};

// Coupled-decision action space: index 0 answers directly, the rest
// request one crop each ("0".."8", then "all").
inline constexpr int kNoCallAction = 0;
inline constexpr int kActionCount = 1 + geometry::kCropCount;

int action_from_crop(geometry::CropId id);
geometry::CropSet action_crop_set(int action);
protocol::FirstTurnAction action_to_first_turn(int action);
std::vector<std::string> cdp_action_names();

/// Fresh zero-weight policy over the coupled-decision action space.
Policy make_cdp_policy();

/// Group-normalized advantages: (r_i - mean) / (stddev + eps_adv) with the
/// population stddev; a zero-variance group yields all zeros. Needs at
/// least two rewards.
std::vector<double> group_advantages(std::span<const double> rewards, double eps_adv);

/// KL(p || q) for categorical distributions on the same support; terms
/// with p_i = 0 contribute nothing, q must be positive wherever p is.
double kl_categorical(std::span<const double> p, std::span<const double> q);

/// min(ratio * adv, clip(ratio, 1 - eps, 1 + eps) * adv).
double clipped_term(double ratio, double advantage, double eps_clip);

/// One sampled group over a single context.
struct GroupBatch {
    std::vector<double> features;
    std::vector<int> actions;
    std::vector<double> rewards;
    double mu = 0.0;
    double sigma = 0.0;
    std::vector<double> advantages;
    std::vector<double> old_probs;  // probability of each taken action under pi_old
    std::vector<double> ref_probs;  // full pi_ref distribution at this context
};

GroupBatch make_group_batch(std::vector<double> features, std::vector<int> actions,
                            std::vector<double> rewards,
                            std::vector<double> old_probs,
                            std::vector<double> ref_probs, double eps_adv);

struct LossGrad {
    double loss = 0.0;  // negative objective
    double kl = 0.0;    // KL(pi_theta || pi_ref) at the batch context
    std::vector<double> grad;  // same layout as Policy weights
};

/// Loss and analytic gradient of the group objective
///   mean_i min(r_i A_i, clip(r_i) A_i) - beta * KL(pi_theta || pi_ref)
/// at the batch context, with r_i = pi_theta(a_i|x) / pi_old(a_i|x).
LossGrad grpo_loss(const GroupBatch& batch, const Policy& policy, const GrpoConfig& cfg);

struct SftExample {
    std::vector<double> features;
    int action = 0;
    double weight = 1.0;
};

/// Weighted-cross-entropy behavior cloning by full-batch gradient descent.
Policy sft_init_policy(std::span<const SftExample> dataset, int feature_dim,
                       int action_count, double lr, int steps);

struct ColdStartConfig {
    int size = 20000;
    double overcall_rate = 0.3;  // coarse episodes mislabeled as tool calls
    double w_tool = 5.0;
};

/// Synthetic cold-start dataset over env episodes: fine episodes clone the
/// evidence-region call, a slice of coarse episodes carries a spurious
/// random call (imitation-source labeling noise), tool examples are
/// upweighted by w_tool.
std::vector<SftExample> make_cold_start_dataset(const simenv::RolloutEnv& env,
                                                const ColdStartConfig& cfg,
                                                std::uint64_t seed);

struct TrainStepStats {
    int step = 0;
    double mean_reward = 0.0;
    double call_rate = 0.0;
    double mean_area = 0.0;  // over called rollouts in the step, 0 when none
    double rtr = 0.0;
    double kl = 0.0;
};

std::string history_to_jsonl_line(const TrainStepStats& s);

struct TrainResult {
    Policy policy;
    std::vector<TrainStepStats> history;
};

/// Group-relative policy optimization against the rollout env. policy_init
/// is both the starting point and the frozen KL reference. One context per
/// step, cfg.group_size rollouts on deterministically split rng streams,
/// one gradient step per group. Throws on non-finite loss; scorer backend
/// errors propagate.
TrainResult train_grpo(const simenv::RolloutEnv& env, const Policy& policy_init,
                       const GrpoConfig& cfg, const reward::RewardConfig& rcfg,
                       std::uint64_t seed);

}  // namespace croprl::grpo
