// SPDX-License-Identifier: Apache-2.0
//
// croprl command line: synth, curate, train, eval, report.
// Exit codes: 0 success, 1 internal error, 2 usage/config error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "croprl/config.hpp"
#include "croprl/curation.hpp"
#include "croprl/grpo.hpp"
#include "croprl/metrics.hpp"
#include "croprl/model_client.hpp"
#include "croprl/protocol.hpp"
#include "croprl/rng.hpp"
#include "croprl/sim_env.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace croprl;

namespace {

constexpr std::uint64_t kEvalStreamTag = 0x4556414C;  // held-out episode salt

/// Operator-fixable problem: bad flag combination, unreadable input file,
/// malformed policy file. Reported with exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
};

config::ArtifactConfig load_config(const CommonOpts& opts) {
    config::ArtifactConfig cfg = opts.config_path.empty()
                                     ? config::ArtifactConfig{}
                                     : config::load_config_file(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    return cfg;
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw UsageError("cannot create output directory " + dir + ": " + ec.message());
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open output file: " + p.string());
    return out;
}

std::string read_text_file(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError(std::string("cannot read ") + what + ": " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

grpo::Policy load_policy_file(const std::string& path) {
    std::string text = read_text_file(path, "policy file");
    try {
        return grpo::Policy::from_json(text);
    } catch (const std::exception& e) {
        throw UsageError("policy file " + path + ": " + e.what());
    }
}

// ---------------------------------------------------------------- synth

int cmd_synth(const CommonOpts& opts, int count) {
    config::ArtifactConfig cfg = load_config(opts);
    ensure_out_dir(opts.out_dir);

    fs::path dataset_path = fs::path(opts.out_dir) / "dataset.jsonl";
    {
        std::ofstream out = open_out(dataset_path);
        simenv::write_dataset_jsonl(cfg.env, count, cfg.seed, out);
    }
    fs::path fixture_path = fs::path(opts.out_dir) / "fixtures.json";
    {
        modelclient::MockFixture fx =
            curation::make_synthetic_fixture(cfg.env, count, cfg.seed, cfg.curation);
        std::ofstream out = open_out(fixture_path);
        out << fx.to_json() << '\n';
    }
    std::cout << "wrote " << dataset_path.string() << " (" << count << " samples) and "
              << fixture_path.string() << "\n";
    return 0;
}

// --------------------------------------------------------------- curate

int cmd_curate(const CommonOpts& opts, const std::string& dataset_path,
               const std::string& labeler, const std::string& mock_fixtures,
               const std::string& endpoint) {
    config::ArtifactConfig cfg = load_config(opts);
    if (!labeler.empty()) {
        auto l = curation::labeler_from_name(labeler);
        if (!l) throw UsageError("--labeler must be judge or anls, got '" + labeler + "'");
        cfg.curation.labeler = *l;
    }

    std::vector<curation::Sample> dataset;
    try {
        dataset = curation::read_dataset_file(dataset_path);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }

    std::unique_ptr<modelclient::ModelClient> client;
    if (!mock_fixtures.empty()) {
        try {
            client = std::make_unique<modelclient::MockModelClient>(
                modelclient::MockFixture::from_json(
                    read_text_file(mock_fixtures, "mock fixture file")));
        } catch (const std::exception& e) {
            throw UsageError(e.what());
        }
    } else if (!endpoint.empty()) {
        const char* key = std::getenv("CROPRL_API_KEY");
        client = std::make_unique<modelclient::HttpModelClient>(
            endpoint, key ? key : "", cfg.curation.max_in_flight);
    } else {
        throw UsageError("curate needs --mock-fixtures or --endpoint");
    }
    curation::Clients clients{client.get(), client.get(), client.get()};

    ensure_out_dir(opts.out_dir);
    fs::path records_path = fs::path(opts.out_dir) / "records.jsonl";
    fs::path summary_path = fs::path(opts.out_dir) / "summary.json";
    curation::PipelineSummary summary;
    {
        std::ofstream out = open_out(records_path);
        summary = curation::run_pipeline(dataset, clients, cfg.curation, out);
    }
    {
        std::ofstream out = open_out(summary_path);
        out << summary.to_json() << '\n';
    }
    std::cout << summary.to_json() << "\n";
    std::cout << "wrote " << records_path.string() << " and " << summary_path.string()
              << "\n";
    return 0;
}

// ---------------------------------------------------------------- train

std::vector<grpo::SftExample> sft_dataset_from_records(
    const std::string& records_path, const simenv::SimEnv& env,
    std::uint64_t dataset_seed, double w_tool) {
    std::string text = read_text_file(records_path, "curated records file");
    std::istringstream in(text);
    std::vector<grpo::SftExample> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            std::string sample_id = j.at("sample_id").get<std::string>();
            // Synthetic sample ids are "ep-NNNNNN"; the index regenerates
            // the episode (and its features) under the dataset seed.
            if (sample_id.rfind("ep-", 0) != 0) {
                throw std::runtime_error("sample_id is not a synthetic episode id: " +
                                         sample_id);
            }
            std::uint64_t index = std::stoull(sample_id.substr(3));
            simenv::Episode ep = env.episode_at(dataset_seed, index);
            grpo::SftExample ex;
            ex.features = ep.features;
            std::string label = j.at("label").get<std::string>();
            auto crops = j.at("target_crops").get<std::vector<std::string>>();
            if (label == "HR") {
                if (crops.empty()) throw std::runtime_error("HR record without crops");
                auto id = geometry::crop_id_from_name(crops.front());
                if (!id) throw std::runtime_error("unknown crop id: " + crops.front());
                ex.action = grpo::action_from_crop(*id);
                ex.weight = w_tool;
            } else {
                ex.action = grpo::kNoCallAction;
                ex.weight = 1.0;
            }
            out.push_back(std::move(ex));
        } catch (const std::exception& e) {
            throw UsageError("curated records line " + std::to_string(line_no) + ": " +
                             e.what());
        }
    }
    if (out.empty()) throw UsageError("curated records file is empty: " + records_path);
    return out;
}

int cmd_train(const CommonOpts& opts, const std::string& stage,
              const std::string& curated_path, std::uint64_t dataset_seed,
              const std::string& init_policy_path) {
    config::ArtifactConfig cfg = load_config(opts);
    simenv::SimEnv env(cfg.env);
    ensure_out_dir(opts.out_dir);
    fs::path ref_path = fs::path(opts.out_dir) / "policy_ref.json";
    fs::path policy_path = fs::path(opts.out_dir) / "policy.json";
    fs::path history_path = fs::path(opts.out_dir) / "history.jsonl";

    grpo::Policy init = grpo::make_cdp_policy();
    if (stage == "grpo-only") {
        if (init_policy_path.empty()) {
            throw UsageError("--stage grpo-only needs --init-policy PATH");
        }
        init = load_policy_file(init_policy_path);
    } else {
        std::vector<grpo::SftExample> sft_data =
            curated_path.empty()
                ? grpo::make_cold_start_dataset(env, cfg.cold_start, cfg.seed)
                : sft_dataset_from_records(curated_path, env, dataset_seed,
                                           cfg.curation.w_tool);
        init = grpo::sft_init_policy(sft_data, simenv::kFeatureDim, grpo::kActionCount,
                                     cfg.sft.learning_rate, cfg.sft.steps);
        std::ofstream out = open_out(ref_path);
        out << init.to_json() << '\n';
        std::cout << "wrote " << ref_path.string() << "\n";
        if (stage == "sft-only") return 0;
    }

    grpo::TrainResult result = grpo::train_grpo(env, init, cfg.grpo, cfg.reward, cfg.seed);
    {
        std::ofstream out = open_out(policy_path);
        out << result.policy.to_json() << '\n';
    }
    {
        std::ofstream out = open_out(history_path);
        for (const grpo::TrainStepStats& s : result.history) {
            out << grpo::history_to_jsonl_line(s) << '\n';
        }
    }
    std::cout << "wrote " << policy_path.string() << " and " << history_path.string()
              << "\n";
    if (!result.history.empty()) {
        const auto& last = result.history.back();
        std::cout << "final step: " << grpo::history_to_jsonl_line(last) << "\n";
    }
    return 0;
}

// ----------------------------------------------------------------- eval

int oracle_action(const simenv::Episode& ep) {
    if (!ep.fine_grained) return grpo::kNoCallAction;
    for (int h = 0; h < simenv::kHintSlots; ++h) {
        if (ep.features[h] > 0.5) {
            return grpo::action_from_crop(static_cast<geometry::CropId>(h));
        }
    }
    return grpo::kNoCallAction;
}

std::vector<metrics::EvalRecord> roll_eval_records(
    const simenv::SimEnv& env, const std::function<int(const simenv::Episode&,
                                                       std::mt19937_64&)>& act,
    int episodes, std::uint64_t seed) {
    std::vector<metrics::EvalRecord> records;
    records.reserve(static_cast<std::size_t>(episodes));
    for (int i = 0; i < episodes; ++i) {
        auto g = rng::substream(seed, kEvalStreamTag, static_cast<std::uint64_t>(i));
        simenv::Episode ep = env.sample_episode(g);
        int a = act(ep, g);
        geometry::CropSet crops = grpo::action_crop_set(a);
        simenv::RolloutOutcome outcome = env.rollout(ep, grpo::action_to_first_turn(a), g);
        metrics::EvalRecord rec;
        rec.sample_id = "eval-" + std::to_string(i);
        rec.label = ep.label();
        rec.predicted_crops = crops;
        if (ep.evidence) rec.target_crops = geometry::CropSet{*ep.evidence};
        rec.correct = outcome.correct;
        rec.account = outcome.account;
        records.push_back(std::move(rec));
    }
    return records;
}

int cmd_eval(const CommonOpts& opts, const std::string& policy_path, bool use_oracle,
             bool never_call, const std::string& report_format) {
    config::ArtifactConfig cfg = load_config(opts);
    simenv::SimEnv env(cfg.env);

    int selected = (policy_path.empty() ? 0 : 1) + (use_oracle ? 1 : 0) +
                   (never_call ? 1 : 0);
    if (selected != 1) {
        throw UsageError("eval needs exactly one of --policy PATH, --oracle, --never-call");
    }

    std::function<int(const simenv::Episode&, std::mt19937_64&)> act;
    std::optional<grpo::Policy> policy;
    if (!policy_path.empty()) {
        policy = load_policy_file(policy_path);
        if (policy->feature_dim() != env.feature_dim() ||
            policy->action_count() != grpo::kActionCount) {
            throw UsageError("policy file " + policy_path +
                             ": feature/action shape does not fit this environment");
        }
        act = [&policy](const simenv::Episode& ep, std::mt19937_64& g) {
            return policy->sample(ep.features, g);
        };
    } else if (use_oracle) {
        act = [](const simenv::Episode& ep, std::mt19937_64&) { return oracle_action(ep); };
    } else {
        act = [](const simenv::Episode&, std::mt19937_64&) { return grpo::kNoCallAction; };
    }

    std::vector<metrics::EvalRecord> records =
        roll_eval_records(env, act, cfg.eval.episodes, cfg.seed);
    metrics::CdpReport report = metrics::eval_report(records);

    ensure_out_dir(opts.out_dir);
    fs::path report_path = fs::path(opts.out_dir) / "report.json";
    {
        std::ofstream out = open_out(report_path);
        out << metrics::report_to_json(report) << '\n';
    }
    if (report_format == "table") {
        std::cout << metrics::report_to_table(report);
    } else {
        std::cout << metrics::report_to_json(report) << "\n";
    }
    std::cout << "wrote " << report_path.string() << "\n";
    return 0;
}

// --------------------------------------------------------------- report

int cmd_report(const std::string& history_path, const std::string& csv_out) {
    std::string text = read_text_file(history_path, "history file");
    std::istringstream in(text);
    std::ostringstream csv;
    csv << "step,mean_reward,call_rate,mean_area,rtr,kl\n";
    std::string line;
    int line_no = 0;
    int rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            csv << j.at("step").get<long long>() << ','
                << j.at("mean_reward").get<double>() << ','
                << j.at("call_rate").get<double>() << ','
                << j.at("mean_area").get<double>() << ',' << j.at("rtr").get<double>()
                << ',' << j.at("kl").get<double>() << '\n';
            ++rows;
        } catch (const std::exception& e) {
            throw UsageError("history line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (csv_out.empty()) {
        std::cout << csv.str();
    } else {
        std::ofstream out = open_out(csv_out);
        out << csv.str();
        std::cout << "wrote " << csv_out << " (" << rows << " rows)\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale crop-retrieval training and curation toolkit"};
    app.require_subcommand(1);

    CommonOpts common;
    int synth_count = 200;
    std::string dataset_path;
    std::string labeler;
    std::string mock_fixtures;
    std::string endpoint;
    std::string stage = "full";
    std::string curated_path;
    std::uint64_t dataset_seed = 1;
    std::string init_policy_path;
    std::string policy_path;
    bool use_oracle = false;
    bool never_call = false;
    std::string report_format = "json";
    std::string history_path;
    std::string csv_out;

    auto add_common = [&](CLI::App* sub, bool with_out = true) {
        sub->add_option("--config", common.config_path, "config JSON file");
        sub->add_option("--seed", common.seed, "seed override");
        if (with_out) sub->add_option("--out", common.out_dir, "output directory");
    };

    CLI::App* synth = app.add_subcommand(
        "synth", "export a synthetic episode dataset plus a matching mock fixture");
    add_common(synth);
    synth->add_option("--count", synth_count, "number of samples")
        ->check(CLI::PositiveNumber);

    CLI::App* curate = app.add_subcommand(
        "curate", "label a dataset and emit supervision transcripts");
    add_common(curate);
    curate->add_option("--dataset", dataset_path, "input JSONL dataset")->required();
    curate->add_option("--labeler", labeler, "judge | anls");
    curate->add_option("--mock-fixtures", mock_fixtures, "scripted backend fixture file");
    curate->add_option("--endpoint", endpoint,
                       "chat-completions endpoint URL (API key via CROPRL_API_KEY)");

    CLI::App* train = app.add_subcommand(
        "train", "behavior-clone a start policy, then optimize it on the simulator");
    add_common(train);
    train->add_option("--stage", stage, "sft-only | grpo-only | full")
        ->check(CLI::IsMember({"sft-only", "grpo-only", "full"}));
    train->add_option("--curated", curated_path,
                      "clone from curated records instead of the synthetic cold start");
    train->add_option("--dataset-seed", dataset_seed,
                      "seed the curated dataset was exported with");
    train->add_option("--init-policy", init_policy_path,
                      "start/reference policy for --stage grpo-only");

    CLI::App* eval_cmd = app.add_subcommand("eval", "roll a policy and report metrics");
    add_common(eval_cmd);
    eval_cmd->add_option("--policy", policy_path, "policy JSON file");
    eval_cmd->add_flag("--oracle", use_oracle, "evaluate the hint-following policy");
    eval_cmd->add_flag("--never-call", never_call, "evaluate the direct-answer policy");
    eval_cmd->add_option("--report", report_format, "json | table")
        ->check(CLI::IsMember({"json", "table"}));

    CLI::App* report = app.add_subcommand("report", "render a training history as CSV");
    report->add_option("--history", history_path, "history JSONL file")->required();
    report->add_option("--out", csv_out, "CSV output path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(common, synth_count);
        if (curate->parsed()) {
            return cmd_curate(common, dataset_path, labeler, mock_fixtures, endpoint);
        }
        if (train->parsed()) {
            return cmd_train(common, stage, curated_path, dataset_seed, init_policy_path);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(common, policy_path, use_oracle, never_call, report_format);
        }
        if (report->parsed()) return cmd_report(history_path, csv_out);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
