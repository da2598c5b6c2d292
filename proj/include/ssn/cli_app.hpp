// CLI wiring for the five subcommands: gen-data, train, eval, gradcheck,
// report. Exit codes: 0 success, 1 config/data error, 2 usage error, 3 check
// failure. Timestamps go only to the run.log sidecar so every other output is
// byte-identical across reruns.
#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssn/closed_loop.hpp"
#include "ssn/experiment_config.hpp"
#include "ssn/gradcheck_suite.hpp"
#include "ssn/model_zoo.hpp"
#include "ssn/trainer.hpp"
#include "ssn/world.hpp"

namespace ssn::cli {

namespace fs = std::filesystem;

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    int jobs = 1;
};

inline ExperimentConfig resolve_config(const CommonOptions& opts) {
    nlohmann::json raw = nlohmann::json::object();
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path);
        if (!in) throw ParseError("cannot open config file '" + opts.config_path + "'");
        try {
            raw = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("config file '" + opts.config_path + "' is not valid JSON: " +
                             e.what());
        }
    }
    for (const std::string& assignment : opts.overrides) apply_override(raw, assignment);
    ExperimentConfig cfg = ExperimentConfig::from_json(raw);
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    return cfg;
}

inline void write_resolved_config(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    std::ofstream out(fs::path(cfg.out_dir) / "resolved_config.json", std::ios::binary);
    out << cfg.to_json().dump(2) << '\n';
}

inline void append_run_log(const std::string& out_dir, const std::string& line) {
    fs::create_directories(out_dir);
    std::ofstream log(fs::path(out_dir) / "run.log", std::ios::app);
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%S", std::gmtime(&t));
    log << stamp << "Z " << line << '\n';
}

inline int cmd_gen_data(const CommonOptions& opts, const std::string& split) {
    ExperimentConfig cfg = resolve_config(opts);
    write_resolved_config(cfg);
    const std::uint64_t seed = split == "eval" ? cfg.seed + cfg.eval_seed_offset : cfg.seed;
    ScenarioParams params;
    params.frame_count = cfg.scenario_frames;
    std::vector<Scene> scenes = generate_mix(cfg.scenario_mix(), seed, params);
    const fs::path path = fs::path(cfg.out_dir) / ("dataset-" + split + ".jsonl");
    save_dataset(scenes, path.string());
    append_run_log(cfg.out_dir, "gen-data split=" + split + " scenes=" +
                                     std::to_string(scenes.size()) + " -> " + path.string());
    std::cout << "wrote " << scenes.size() << " scenes to " << path.string() << "\n";
    return 0;
}

inline int cmd_train(const CommonOptions& opts, const std::string& data_path) {
    ExperimentConfig cfg = resolve_config(opts);
    write_resolved_config(cfg);
    const fs::path data = data_path.empty()
                              ? fs::path(cfg.out_dir) / "dataset-train.jsonl"
                              : fs::path(data_path);
    std::vector<Scene> scenes = load_dataset(data.string());
    auto model = build_model(cfg.resolved_model(), cfg.seed);
    TrainResult result = train(*model, scenes, cfg.raster, cfg.training);

    const fs::path ckpt = fs::path(cfg.out_dir) / "checkpoint.bin";
    save_checkpoint(*model, ckpt.string());
    const fs::path curve = fs::path(cfg.out_dir) / "loss_curve.csv";
    {
        std::ofstream out(curve, std::ios::binary);
        out << "step,loss\n";
        char buf[48];
        for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i + 1, result.loss_curve[i]);
            out << buf;
        }
    }
    append_run_log(cfg.out_dir, "train steps=" + std::to_string(result.steps) +
                                    " skipped_scenes=" + std::to_string(result.skipped_scenes) +
                                    " -> " + ckpt.string());
    if (result.skipped_scenes > 0)
        std::cerr << "warning: " << result.skipped_scenes
                  << " scene(s) shorter than history + horizon were skipped\n";
    std::cout << "trained " << model->kind() << " for " << result.steps << " steps, final loss "
              << (result.loss_curve.empty() ? 0.0 : result.loss_curve.back()) << "\n";
    return 0;
}

inline int cmd_eval(const CommonOptions& opts, const std::string& data_path,
                    const std::string& checkpoint, const std::string& policy_name,
                    std::string method) {
    ExperimentConfig cfg = resolve_config(opts);
    write_resolved_config(cfg);
    const fs::path data = data_path.empty() ? fs::path(cfg.out_dir) / "dataset-eval.jsonl"
                                            : fs::path(data_path);
    std::vector<Scene> scenes = load_dataset(data.string());
    if (scenes.empty()) throw ParseError("eval dataset '" + data.string() + "' has no scenes");

    std::unique_ptr<Model> model;
    std::function<std::unique_ptr<Policy>()> make_policy;
    if (policy_name == "model") {
        const fs::path ckpt = checkpoint.empty() ? fs::path(cfg.out_dir) / "checkpoint.bin"
                                                 : fs::path(checkpoint);
        model = build_model_from_checkpoint(ckpt.string());
        if (method.empty()) method = model->kind();
        make_policy = [&] { return std::make_unique<ModelPolicy>(*model, cfg.raster); };
    } else if (policy_name == "replay") {
        if (method.empty()) method = "replay";
        make_policy = [] { return std::make_unique<ReplayPolicy>(); };
    } else if (policy_name == "constant-velocity") {
        if (method.empty()) method = "constant-velocity";
        make_policy = [] { return std::make_unique<ConstantVelocityPolicy>(); };
    } else if (policy_name == "stationary") {
        if (method.empty()) method = "stationary";
        make_policy = [] { return std::make_unique<StationaryPolicy>(); };
    } else {
        throw ParseError("unknown policy '" + policy_name + "'");
    }

    RolloutResult rollout = rollout_scenes(make_policy, scenes, cfg.raster, opts.jobs);
    MetricsReport report = aggregate_metrics(rollout.events, rollout.frames_simulated);
    const fs::path csv = fs::path(cfg.out_dir) / ("metrics-" + method + ".csv");
    write_metrics_csv(csv.string(), {{method, report}});
    append_run_log(cfg.out_dir, "eval method=" + method + " scenes=" +
                                    std::to_string(scenes.size()) + " events=" +
                                    std::to_string(rollout.events.size()) + " -> " + csv.string());
    std::cout << kMetricsCsvHeader << "\n" << metrics_csv_row(method, report) << "\n";
    return 0;
}

inline int cmd_gradcheck(bool quick) {
    const bool ok = run_gradcheck_suite(std::cout, quick);
    std::cout << (ok ? "gradcheck: all checks passed\n" : "gradcheck: FAILURES\n");
    return ok ? 0 : 3;
}

inline int cmd_report(const CommonOptions& opts, const std::vector<std::string>& inputs) {
    ExperimentConfig cfg = resolve_config(opts);
    fs::create_directories(cfg.out_dir);
    std::vector<std::string> rows;
    for (const std::string& input : inputs) {
        std::ifstream in(input);
        if (!in) throw ParseError("cannot open metrics file '" + input + "'");
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            if (line_no == 1) {
                if (line != kMetricsCsvHeader)
                    throw ParseError("metrics file '" + input + "' has header '" + line +
                                     "', expected '" + kMetricsCsvHeader + "'");
                continue;
            }
            rows.push_back(line);
        }
    }
    const fs::path out_path = fs::path(cfg.out_dir) / "report.csv";
    {
        std::ofstream out(out_path, std::ios::binary);
        out << kMetricsCsvHeader << '\n';
        for (const std::string& row : rows) out << row << '\n';
    }
    append_run_log(cfg.out_dir, "report rows=" + std::to_string(rows.size()) + " -> " +
                                    out_path.string());
    std::cout << "merged " << rows.size() << " rows into " << out_path.string() << "\n";
    return 0;
}

inline int run(std::vector<std::string> args) {
    CLI::App app{"SSN trajectory-prediction experiments"};
    app.require_subcommand(1);

    CommonOptions opts;
    std::string split = "train";
    std::string data_path, checkpoint, policy = "model", method;
    std::vector<std::string> report_inputs;
    bool quick = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "experiment config JSON");
        cmd->add_option("--set", opts.overrides, "override key.path=value")->take_all();
        cmd->add_option("--out", opts.out_dir, "output directory");
        cmd->add_option("--jobs", opts.jobs, "parallel scene rollouts")->check(CLI::Range(1, 64));
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic scene dataset");
    add_common(gen);
    gen->add_option("--split", split, "train or eval")
        ->check(CLI::IsMember({"train", "eval"}));

    CLI::App* train_cmd = app.add_subcommand("train", "train a policy by imitation");
    add_common(train_cmd);
    train_cmd->add_option("--data", data_path, "dataset JSONL path");

    CLI::App* eval_cmd = app.add_subcommand("eval", "closed-loop collision evaluation");
    add_common(eval_cmd);
    eval_cmd->add_option("--data", data_path, "dataset JSONL path");
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint path");
    eval_cmd->add_option("--policy", policy, "model|replay|constant-velocity|stationary")
        ->check(CLI::IsMember({"model", "replay", "constant-velocity", "stationary"}));
    eval_cmd->add_option("--method", method, "method name for the CSV row");

    CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    grad->add_flag("--quick", quick, "skip desk-scale whole-model checks");

    CLI::App* report = app.add_subcommand("report", "merge metrics CSVs into one table");
    add_common(report);
    report->add_option("--inputs", report_inputs, "metrics CSV files")->required()->take_all();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(opts, split);
        if (train_cmd->parsed()) return cmd_train(opts, data_path);
        if (eval_cmd->parsed()) return cmd_eval(opts, data_path, checkpoint, policy, method);
        if (grad->parsed()) return cmd_gradcheck(quick);
        if (report->parsed()) return cmd_report(opts, report_inputs);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace ssn::cli
