// SPDX-License-Identifier: Apache-2.0
#include "croprl/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "croprl/rng.hpp"
#include "json.hpp"

namespace croprl::grpo {

namespace {

// Above 2^32 so it can never collide with a per-step training stream tag.
constexpr std::uint64_t kColdStartTag = 0xC01D0000C01DULL;

void check_features(const Policy& pol, std::span<const double> f) {
    if (static_cast<int>(f.size()) != pol.feature_dim()) {
        throw std::invalid_argument("feature vector size does not match policy");
    }
}

}  // namespace

Policy::Policy(int feature_dim, int action_count) : feature_dim_(feature_dim) {
    if (feature_dim < 1 || action_count < 2) {
        throw std::invalid_argument("policy needs >=1 feature and >=2 actions");
    }
    action_names_.reserve(static_cast<std::size_t>(action_count));
    for (int a = 0; a < action_count; ++a) {
        action_names_.push_back("action_" + std::to_string(a));
    }
    w_.assign(static_cast<std::size_t>(feature_dim) * action_count, 0.0);
}

Policy::Policy(int feature_dim, std::vector<std::string> action_names)
    : feature_dim_(feature_dim), action_names_(std::move(action_names)) {
    if (feature_dim < 1 || action_names_.size() < 2) {
        throw std::invalid_argument("policy needs >=1 feature and >=2 actions");
    }
    w_.assign(static_cast<std::size_t>(feature_dim) * action_names_.size(), 0.0);
}

double Policy::weight(int action, int feature) const {
    return w_[static_cast<std::size_t>(action) * feature_dim_ + feature];
}

double& Policy::weight(int action, int feature) {
    return w_[static_cast<std::size_t>(action) * feature_dim_ + feature];
}

std::vector<double> Policy::logits(std::span<const double> f) const {
    check_features(*this, f);
    std::vector<double> z(action_names_.size(), 0.0);
    for (std::size_t a = 0; a < z.size(); ++a) {
        const double* row = w_.data() + a * feature_dim_;
        double s = 0.0;
        for (int j = 0; j < feature_dim_; ++j) s += row[j] * f[j];
        z[a] = s;
    }
    return z;
}

std::vector<double> Policy::probs(std::span<const double> f) const {
    std::vector<double> z = logits(f);
    double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - zmax);
        sum += v;
    }
    for (double& v : z) v /= sum;
    return z;
}

int Policy::sample(std::span<const double> f, std::mt19937_64& g) const {
    std::vector<double> p = probs(f);
    double u = rng::uniform01(g);
    double acc = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) {
        acc += p[a];
        if (u < acc) return static_cast<int>(a);
    }
    return static_cast<int>(p.size()) - 1;
}

std::string Policy::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (int a = 0; a < action_count(); ++a) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < feature_dim_; ++j) row.push_back(weight(a, j));
        rows.push_back(std::move(row));
    }
    nlohmann::json j{{"format_version", 1},
                     {"feature_dim", feature_dim_},
                     {"actions", action_names_},
                     {"weights", std::move(rows)}};
    return j.dump(2);
}

Policy Policy::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("policy file is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("format_version") ||
        !j["format_version"].is_number_integer() || j["format_version"] != 1) {
        throw std::runtime_error("policy file schema mismatch: expected format_version 1");
    }
    if (!j.contains("feature_dim") || !j.contains("actions") || !j.contains("weights")) {
        throw std::runtime_error(
            "policy file schema mismatch: feature_dim/actions/weights required");
    }
    int fd = j["feature_dim"].get<int>();
    auto names = j["actions"].get<std::vector<std::string>>();
    const auto& rows = j["weights"];
    if (!rows.is_array() || rows.size() != names.size()) {
        throw std::runtime_error("policy file schema mismatch: weight rows vs actions");
    }
    Policy pol(fd, names);
    for (std::size_t a = 0; a < names.size(); ++a) {
        if (!rows[a].is_array() || static_cast<int>(rows[a].size()) != fd) {
            throw std::runtime_error("policy file schema mismatch: weight row size");
        }
        for (int jcol = 0; jcol < fd; ++jcol) {
            pol.weight(static_cast<int>(a), jcol) = rows[a][jcol].get<double>();
        }
    }
    return pol;
}

int action_from_crop(geometry::CropId id) { return 1 + static_cast<int>(id); }

geometry::CropSet action_crop_set(int action) {
    if (action < 0 || action >= kActionCount) {
        throw std::invalid_argument("action index out of range");
    }
    if (action == kNoCallAction) return {};
    return geometry::CropSet{static_cast<geometry::CropId>(action - 1)};
}

protocol::FirstTurnAction action_to_first_turn(int action) {
    geometry::CropSet crops = action_crop_set(action);
    if (crops.empty()) return protocol::DirectAnswer{""};
    return protocol::CropRequest{crops};
}

std::vector<std::string> cdp_action_names() {
    std::vector<std::string> names{"no_call"};
    for (int i = 0; i < geometry::kCropCount; ++i) {
        names.emplace_back(geometry::crop_id_name(static_cast<geometry::CropId>(i)));
    }
    return names;
}

Policy make_cdp_policy() { return Policy(simenv::kFeatureDim, cdp_action_names()); }

std::vector<double> group_advantages(std::span<const double> rewards, double eps_adv) {
    if (rewards.size() < 2) {
        throw std::invalid_argument("advantage normalization needs a group of >=2");
    }
    if (eps_adv <= 0.0) throw std::invalid_argument("eps_adv must be positive");
    double mu = 0.0;
    for (double r : rewards) mu += r;
    mu /= static_cast<double>(rewards.size());
    double var = 0.0;
    for (double r : rewards) var += (r - mu) * (r - mu);
    var /= static_cast<double>(rewards.size());
    double sigma = std::sqrt(var);
    std::vector<double> adv(rewards.size());
    if (sigma == 0.0) return adv;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        adv[i] = (rewards[i] - mu) / (sigma + eps_adv);
    }
    return adv;
}

double kl_categorical(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size() || p.empty()) {
        throw std::invalid_argument("kl_categorical support mismatch");
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0) {
            throw std::invalid_argument("kl_categorical needs non-negative entries");
        }
        if (p[i] == 0.0) continue;
        if (q[i] == 0.0) {
            throw std::invalid_argument("kl_categorical support mismatch: q=0 where p>0");
        }
        kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

double clipped_term(double ratio, double advantage, double eps_clip) {
    double clipped = std::clamp(ratio, 1.0 - eps_clip, 1.0 + eps_clip);
    return std::min(ratio * advantage, clipped * advantage);
}

GroupBatch make_group_batch(std::vector<double> features, std::vector<int> actions,
                            std::vector<double> rewards,
                            std::vector<double> old_probs,
                            std::vector<double> ref_probs, double eps_adv) {
    if (actions.size() != rewards.size() || actions.size() != old_probs.size()) {
        throw std::invalid_argument("group batch arrays must have equal length");
    }
    GroupBatch b;
    b.features = std::move(features);
    b.actions = std::move(actions);
    b.rewards = std::move(rewards);
    b.old_probs = std::move(old_probs);
    b.ref_probs = std::move(ref_probs);
    double mu = 0.0;
    for (double r : b.rewards) mu += r;
    b.mu = mu / static_cast<double>(b.rewards.size());
    double var = 0.0;
    for (double r : b.rewards) var += (r - b.mu) * (r - b.mu);
    b.sigma = std::sqrt(var / static_cast<double>(b.rewards.size()));
    b.advantages = group_advantages(b.rewards, eps_adv);
    return b;
}

LossGrad grpo_loss(const GroupBatch& batch, const Policy& policy, const GrpoConfig& cfg) {
    const int A = policy.action_count();
    const int F = policy.feature_dim();
    if (static_cast<int>(batch.features.size()) != F) {
        throw std::invalid_argument("batch features do not match policy");
    }
    if (static_cast<int>(batch.ref_probs.size()) != A) {
        throw std::invalid_argument("batch ref_probs do not match policy actions");
    }
    const std::size_t G = batch.actions.size();
    if (G < 2 || batch.advantages.size() != G || batch.old_probs.size() != G) {
        throw std::invalid_argument("malformed group batch");
    }

    std::vector<double> p = policy.probs(batch.features);

    // d(objective)/d(logits), assembled per action slot.
    std::vector<double> gz(static_cast<std::size_t>(A), 0.0);
    double objective = 0.0;
    for (std::size_t i = 0; i < G; ++i) {
        int a = batch.actions[i];
        if (a < 0 || a >= A) throw std::invalid_argument("batch action out of range");
        if (!(batch.old_probs[i] > 0.0)) {
            throw std::invalid_argument("zero old probability for a taken action");
        }
        double ratio = p[a] / batch.old_probs[i];
        double adv = batch.advantages[i];
        objective += clipped_term(ratio, adv, cfg.eps_clip) / static_cast<double>(G);

        // The min kills the gradient once the ratio leaves the trust band
        // on the advantage's improving side.
        bool active = !((adv > 0.0 && ratio > 1.0 + cfg.eps_clip) ||
                        (adv < 0.0 && ratio < 1.0 - cfg.eps_clip));
        if (active && adv != 0.0) {
            double coef = adv * ratio / static_cast<double>(G);
            for (int k = 0; k < A; ++k) gz[k] -= coef * p[k];
            gz[a] += coef;
        }
    }

    double kl = kl_categorical(p, batch.ref_probs);
    objective -= cfg.beta * kl;
    for (int k = 0; k < A; ++k) {
        if (p[k] > 0.0) {
            double s = std::log(p[k] / batch.ref_probs[k]);
            gz[k] -= cfg.beta * p[k] * (s - kl);
        }
    }

    LossGrad out;
    out.loss = -objective;
    out.kl = kl;
    out.grad.assign(static_cast<std::size_t>(A) * F, 0.0);
    for (int k = 0; k < A; ++k) {
        double g = -gz[k];  // gradient of the loss
        if (g == 0.0) continue;
        for (int j = 0; j < F; ++j) {
            out.grad[static_cast<std::size_t>(k) * F + j] = g * batch.features[j];
        }
    }
    return out;
}

Policy sft_init_policy(std::span<const SftExample> dataset, int feature_dim,
                       int action_count, double lr, int steps) {
    if (dataset.empty()) throw std::invalid_argument("empty behavior-cloning dataset");
    if (lr <= 0.0 || steps < 1) throw std::invalid_argument("bad sft schedule");
    double total_weight = 0.0;
    for (const SftExample& ex : dataset) {
        if (static_cast<int>(ex.features.size()) != feature_dim) {
            throw std::invalid_argument("sft example feature size mismatch");
        }
        if (ex.action < 0 || ex.action >= action_count) {
            throw std::invalid_argument("sft example action out of range");
        }
        if (!(ex.weight > 0.0)) throw std::invalid_argument("sft example weight must be positive");
        total_weight += ex.weight;
    }

    Policy pol(feature_dim, action_count);
    std::vector<double> grad(static_cast<std::size_t>(action_count) * feature_dim);
    for (int step = 0; step < steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const SftExample& ex : dataset) {
            std::vector<double> p = pol.probs(ex.features);
            double scale = ex.weight / total_weight;
            for (int k = 0; k < action_count; ++k) {
                double gz = scale * (p[k] - (k == ex.action ? 1.0 : 0.0));
                if (gz == 0.0) continue;
                for (int j = 0; j < feature_dim; ++j) {
                    grad[static_cast<std::size_t>(k) * feature_dim + j] +=
                        gz * ex.features[j];
                }
            }
        }
        for (std::size_t i = 0; i < grad.size(); ++i) pol.weights()[i] -= lr * grad[i];
    }
    return pol;
}

std::vector<SftExample> make_cold_start_dataset(const simenv::RolloutEnv& env,
                                                const ColdStartConfig& cfg,
                                                std::uint64_t seed) {
    if (cfg.size < 1) throw std::invalid_argument("cold-start dataset must be non-empty");
    if (!(cfg.overcall_rate >= 0.0 && cfg.overcall_rate <= 1.0)) {
        throw std::invalid_argument("overcall_rate out of [0,1]");
    }
    std::vector<SftExample> out;
    out.reserve(static_cast<std::size_t>(cfg.size));
    for (int i = 0; i < cfg.size; ++i) {
        auto g = rng::substream(seed, kColdStartTag, static_cast<std::uint64_t>(i));
        simenv::Episode ep = env.sample_episode(g);
        SftExample ex;
        ex.features = ep.features;
        if (ep.fine_grained && ep.evidence) {
            ex.action = action_from_crop(*ep.evidence);
            ex.weight = cfg.w_tool;
        } else if (rng::uniform01(g) < cfg.overcall_rate) {
            auto spurious = static_cast<geometry::CropId>(rng::uniform_int(g, simenv::kHintSlots));
            ex.action = action_from_crop(spurious);
            ex.weight = cfg.w_tool;
        } else {
            ex.action = kNoCallAction;
            ex.weight = 1.0;
        }
        out.push_back(std::move(ex));
    }
    return out;
}

std::string history_to_jsonl_line(const TrainStepStats& s) {
    nlohmann::json j{{"step", s.step},         {"mean_reward", s.mean_reward},
                     {"call_rate", s.call_rate}, {"mean_area", s.mean_area},
                     {"rtr", s.rtr},           {"kl", s.kl}};
    return j.dump();
}

TrainResult train_grpo(const simenv::RolloutEnv& env, const Policy& policy_init,
                       const GrpoConfig& cfg, const reward::RewardConfig& rcfg,
                       std::uint64_t seed) {
    if (cfg.group_size < 2) throw std::invalid_argument("group_size must be >=2");
    if (cfg.steps < 0) throw std::invalid_argument("steps must be non-negative");
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (policy_init.feature_dim() != env.feature_dim()) {
        throw std::invalid_argument("policy feature dim does not match env");
    }
    if (policy_init.action_count() != kActionCount) {
        throw std::invalid_argument("trainer expects the coupled-decision action space");
    }

    const Policy ref = policy_init;
    Policy pol = policy_init;
    auto scorer = reward::make_scorer(rcfg);

    TrainResult result{pol, {}};
    result.history.reserve(static_cast<std::size_t>(cfg.steps));

    for (int step = 0; step < cfg.steps; ++step) {
        auto g_ep = rng::substream(seed, static_cast<std::uint64_t>(step), 0);
        simenv::Episode ep = env.sample_episode(g_ep);

        std::vector<double> p_old = pol.probs(ep.features);
        std::vector<int> actions;
        std::vector<double> rewards;
        std::vector<double> old_probs;
        actions.reserve(cfg.group_size);

        TrainStepStats st;
        st.step = step;
        int called = 0;
        double area_sum = 0.0;
        double rtr_sum = 0.0;
        for (int i = 0; i < cfg.group_size; ++i) {
            auto g_i = rng::substream(seed, static_cast<std::uint64_t>(step),
                                      static_cast<std::uint64_t>(i) + 1);
            int a = pol.sample(ep.features, g_i);
            geometry::CropSet crops = action_crop_set(a);
            auto outcome = env.rollout(ep, action_to_first_turn(a), g_i);
            auto rb = reward::trajectory_reward(outcome.answer_text, ep.answer, crops,
                                                ep.label(), rcfg, *scorer);
            actions.push_back(a);
            rewards.push_back(rb.total);
            old_probs.push_back(p_old[a]);
            st.mean_reward += rb.total;
            rtr_sum += outcome.account.rtr;
            if (!crops.empty()) {
                ++called;
                area_sum += rb.area;
            }
        }
        st.mean_reward /= cfg.group_size;
        st.call_rate = static_cast<double>(called) / cfg.group_size;
        st.mean_area = called > 0 ? area_sum / called : 0.0;
        st.rtr = rtr_sum / cfg.group_size;

        GroupBatch batch = make_group_batch(ep.features, std::move(actions),
                                            std::move(rewards), std::move(old_probs),
                                            ref.probs(ep.features), cfg.eps_adv);
        LossGrad lg = grpo_loss(batch, pol, cfg);
        if (!std::isfinite(lg.loss)) {
            throw std::runtime_error("non-finite grpo loss at step " + std::to_string(step));
        }
        for (std::size_t i = 0; i < lg.grad.size(); ++i) {
            pol.weights()[i] -= cfg.learning_rate * lg.grad[i];
        }
        st.kl = lg.kl;
        result.history.push_back(st);
    }
    result.policy = std::move(pol);
    return result;
}

}  // namespace croprl::grpo
