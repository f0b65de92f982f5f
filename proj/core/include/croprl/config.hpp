// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "croprl/curation.hpp"
#include "croprl/geometry.hpp"
#include "croprl/grpo.hpp"
#include "croprl/reward.hpp"
#include "croprl/sim_env.hpp"
#include "croprl/tokens.hpp"

namespace croprl::config {

/// A config file problem the operator must fix; the message names the
/// offending key.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SftConfig {
    double learning_rate = 0.5;
    int steps = 400;
};

struct EvalConfig {
    int episodes = 10000;
};

/// Everything a run needs, with working defaults for every field. The
/// JSON file may set any subset; unknown keys are rejected so typos
/// surface instead of silently reverting to defaults.
struct ArtifactConfig {
    tokens::TokenModel token_model{};
    geometry::MappingConfig mapping{};
    reward::RewardConfig reward{};
    simenv::EnvConfig env{};
    grpo::GrpoConfig grpo{};
    grpo::ColdStartConfig cold_start{};
    SftConfig sft{};
    curation::CurationConfig curation{};
    EvalConfig eval{};
    std::uint64_t seed = 1;
};

/// Parses and cross-checks a config JSON document. Throws ConfigError
/// naming the first bad, unknown, or missing-but-required key (e.g. the
/// embedding scorer without reward.embedding_endpoint).
ArtifactConfig parse_config(const std::string& json_text);

/// parse_config over a file. Unreadable file throws ConfigError.
ArtifactConfig load_config_file(const std::string& path);

/// Full round-trippable dump of a config, defaults included.
std::string config_to_json(const ArtifactConfig& cfg);

}  // namespace croprl::config
