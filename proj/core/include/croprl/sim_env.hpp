// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "croprl/geometry.hpp"
#include "croprl/label.hpp"
#include "croprl/protocol.hpp"
#include "croprl/reward.hpp"
#include "croprl/tokens.hpp"

namespace croprl::simenv {

struct EnvConfig {
    double p_easy = 0.95;        // answer correctness on coarse episodes
    double p_lr_fine = 0.2;      // fine-grained episode answered without coverage
    double p_hr = 0.95;          // fine-grained episode answered with coverage
    double hint_flip = 0.1;      // probability the hint points at a wrong region
    double fraction_fine = 0.2;  // share of episodes that need a crop
    tokens::ImageDims image_dims{1120, 1120};
    tokens::TokenModel token_model{};
};

void validate_env_config(const EnvConfig& cfg);

// Feature layout: 9 hint slots (one-hot over the non-"all" regions, all
// zero on coarse episodes), the fine-grained flag, then a bias term.
inline constexpr int kHintSlots = 9;
inline constexpr int kFeatureDim = kHintSlots + 2;

struct Episode {
    std::optional<geometry::CropId> evidence;  // absent on coarse episodes
    bool fine_grained = false;
    std::vector<double> features;
    std::string answer;
    tokens::ImageDims dims;

    Label label() const { return fine_grained ? Label::HR : Label::LR; }
};

struct RolloutOutcome {
    std::string answer_text;  // episode answer when correct, "wrong" otherwise
    bool correct = false;
    tokens::TokenAccount account;
};

/// Rollout contract the trainer binds against: sample a context, then play
/// one first-turn action through to a final answer. Both calls must be
/// pure in the rng argument so rollouts can run on split streams in any
/// order.
class RolloutEnv {
public:
    virtual ~RolloutEnv() = default;
    virtual Episode sample_episode(std::mt19937_64& rng) const = 0;
    virtual RolloutOutcome rollout(const Episode& ep,
                                   const protocol::FirstTurnAction& action,
                                   std::mt19937_64& rng) const = 0;
    virtual int feature_dim() const = 0;
};

/// A requested crop covers the evidence when its rect strictly contains
/// the evidence region's center point, so enclosing halves count as
/// costlier hits while edge-adjacent neighbours do not.
bool covers_evidence(const geometry::CropSet& crops, geometry::CropId evidence);

class SimEnv final : public RolloutEnv {
public:
    explicit SimEnv(EnvConfig cfg);

    Episode sample_episode(std::mt19937_64& rng) const override;
    RolloutOutcome rollout(const Episode& ep, const protocol::FirstTurnAction& action,
                           std::mt19937_64& rng) const override;
    int feature_dim() const override { return kFeatureDim; }

    /// Episode by index under a seed, independent of call order.
    Episode episode_at(std::uint64_t seed, std::uint64_t index) const;

    /// Token account for a trajectory that viewed the low-res frame plus
    /// the requested crops rendered at native density.
    tokens::TokenAccount trajectory_account(const geometry::CropSet& crops) const;

    const EnvConfig& config() const { return cfg_; }

private:
    EnvConfig cfg_;
};

struct PolicyValue {
    double expected_reward = 0.0;
    double accuracy = 0.0;
    double rtr = 0.0;
    double call_rate = 0.0;
    double mean_called_area = 0.0;
};

/// Exact enumeration of the hint-following policy "request the hinted
/// crop iff the episode is fine-grained": expectation over the
/// coarse/fine split, the evidence region and the hint flip.
PolicyValue optimal_policy_value(const EnvConfig& cfg, const reward::RewardConfig& rcfg);

/// Episode stream in the curation dataset schema, one JSON object per
/// line: sample_id, image, width, height, question, answer.
void write_dataset_jsonl(const EnvConfig& cfg, int count, std::uint64_t seed,
                         std::ostream& out);

/// Maps episode index to the dataset row written by write_dataset_jsonl.
struct DatasetRow {
    std::string sample_id;
    std::string image;
    std::string question;
    std::string answer;
};
DatasetRow dataset_row(const Episode& ep, std::uint64_t index);

}  // namespace croprl::simenv
