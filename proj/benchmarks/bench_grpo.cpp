// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <vector>

#include "croprl/grpo.hpp"
#include "croprl/rng.hpp"
#include "croprl/sim_env.hpp"

namespace {

using namespace croprl;

grpo::Policy random_policy(std::mt19937_64& g) {
    grpo::Policy p = grpo::make_cdp_policy();
    for (double& w : p.weights()) w = 2.0 * rng::uniform01(g) - 1.0;
    return p;
}

grpo::GroupBatch make_batch(const grpo::Policy& old_policy,
                            const grpo::Policy& ref_policy, std::mt19937_64& g) {
    std::vector<double> features(simenv::kFeatureDim, 0.0);
    features[rng::uniform_int(g, simenv::kHintSlots)] = 1.0;
    features.back() = 1.0;
    std::vector<double> old_dist = old_policy.probs(features);
    std::vector<int> actions;
    std::vector<double> rewards;
    std::vector<double> old_probs;
    for (int i = 0; i < 8; ++i) {
        int a = rng::uniform_int(g, grpo::kActionCount);
        actions.push_back(a);
        rewards.push_back(2.0 * rng::uniform01(g) - 1.0);
        old_probs.push_back(old_dist[a]);
    }
    std::vector<double> ref_probs = ref_policy.probs(features);
    return grpo::make_group_batch(std::move(features), std::move(actions),
                                  std::move(rewards), std::move(old_probs),
                                  std::move(ref_probs), 1e-4);
}

void BM_GrpoLossGrad(benchmark::State& state) {
    auto g = rng::substream(3, 0xBE9C, 2);
    grpo::Policy policy = random_policy(g);
    grpo::Policy old_policy = random_policy(g);
    grpo::Policy ref_policy = random_policy(g);
    grpo::GroupBatch batch = make_batch(old_policy, ref_policy, g);
    grpo::GrpoConfig cfg;
    for (auto _ : state) {
        benchmark::DoNotOptimize(grpo::grpo_loss(batch, policy, cfg));
    }
}
BENCHMARK(BM_GrpoLossGrad);

void BM_PolicySample(benchmark::State& state) {
    auto g = rng::substream(3, 0xBE9C, 3);
    grpo::Policy policy = random_policy(g);
    std::vector<double> features(simenv::kFeatureDim, 0.0);
    features[2] = 1.0;
    features.back() = 1.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(policy.sample(features, g));
    }
}
BENCHMARK(BM_PolicySample);

void BM_TrainStep(benchmark::State& state) {
    // One full optimization step: sample a context, roll the group, price
    // rewards, and apply the gradient. Mirrors the train loop body.
    simenv::SimEnv env{simenv::EnvConfig{}};
    auto g = rng::substream(3, 0xBE9C, 4);
    grpo::Policy policy = random_policy(g);
    grpo::GrpoConfig cfg;
    cfg.steps = 1;
    reward::RewardConfig rcfg;
    std::uint64_t seed = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(grpo::train_grpo(env, policy, cfg, rcfg, seed++));
    }
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
