// Experiment configuration: one JSON file drives generation, training and
// evaluation; every run writes its resolved config next to its outputs.
#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssn/common.hpp"
#include "ssn/trainer.hpp"
#include "ssn/world.hpp"

namespace ssn {

struct ExperimentConfig {
    std::uint64_t seed = 7;
    std::string out_dir = "out";
    RasterConfig raster;
    nlohmann::json model = {{"kind", "ssn"}};
    TrainConfig training;
    std::vector<std::pair<std::string, int>> scenarios = {
        {"straight", 2}, {"lead-brake", 2}, {"cut-in", 2}, {"crossing", 2}, {"free", 2}};
    int scenario_frames = 250;
    std::uint64_t eval_seed_offset = 1000003;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["seed"] = seed;
        j["out_dir"] = out_dir;
        j["raster"] = {{"height", raster.height},
                       {"width", raster.width},
                       {"resolution", raster.resolution},
                       {"history_steps", raster.history_steps}};
        j["model"] = model;
        j["training"] = {{"epochs", training.epochs},
                         {"batch_size", training.batch_size},
                         {"optimizer", std::string(to_string(training.optimizer.kind))},
                         {"learning_rate", training.optimizer.learning_rate},
                         {"momentum", training.optimizer.momentum},
                         {"position_weight", training.loss.position_weight},
                         {"yaw_weight", training.loss.yaw_weight},
                         {"max_steps", training.max_steps},
                         {"target_loss_ratio", training.target_loss_ratio}};
        nlohmann::json mix = nlohmann::json::object();
        for (const auto& [kind, count] : scenarios) mix[kind] = count;
        j["scenarios"] = mix;
        j["scenario_frames"] = scenario_frames;
        j["eval_seed_offset"] = eval_seed_offset;
        return j;
    }

    static ExperimentConfig from_json(const nlohmann::json& j) {
        ExperimentConfig cfg;
        try {
            cfg.seed = j.value("seed", cfg.seed);
            cfg.out_dir = j.value("out_dir", cfg.out_dir);
            if (j.contains("raster")) {
                const auto& r = j["raster"];
                cfg.raster.height = r.value("height", cfg.raster.height);
                cfg.raster.width = r.value("width", cfg.raster.width);
                cfg.raster.resolution = r.value("resolution", cfg.raster.resolution);
                cfg.raster.history_steps = r.value("history_steps", cfg.raster.history_steps);
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("config key 'raster': ") + e.what());
        }
        if (j.contains("model")) {
            if (!j["model"].is_object()) throw ParseError("config key 'model': must be an object");
            cfg.model = j["model"];
        }
        try {
            if (j.contains("training")) {
                const auto& t = j["training"];
                cfg.training.epochs = t.value("epochs", cfg.training.epochs);
                cfg.training.batch_size = t.value("batch_size", cfg.training.batch_size);
                cfg.training.optimizer.kind = optimizer_kind_from_string(
                    t.value("optimizer", std::string(to_string(cfg.training.optimizer.kind))));
                cfg.training.optimizer.learning_rate =
                    t.value("learning_rate", cfg.training.optimizer.learning_rate);
                cfg.training.optimizer.momentum =
                    t.value("momentum", cfg.training.optimizer.momentum);
                cfg.training.loss.position_weight =
                    t.value("position_weight", cfg.training.loss.position_weight);
                cfg.training.loss.yaw_weight = t.value("yaw_weight", cfg.training.loss.yaw_weight);
                cfg.training.max_steps = t.value("max_steps", cfg.training.max_steps);
                cfg.training.target_loss_ratio =
                    t.value("target_loss_ratio", cfg.training.target_loss_ratio);
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("config key 'training': ") + e.what());
        }
        try {
            if (j.contains("scenarios")) {
                cfg.scenarios.clear();
                for (const auto& [kind, count] : j["scenarios"].items()) {
                    scenario_kind_from_string(kind);  // validates the name
                    cfg.scenarios.emplace_back(kind, count.get<int>());
                }
            }
            cfg.scenario_frames = j.value("scenario_frames", cfg.scenario_frames);
            cfg.eval_seed_offset = j.value("eval_seed_offset", cfg.eval_seed_offset);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("config key 'scenarios': ") + e.what());
        }
        cfg.training.seed = cfg.seed;
        return cfg;
    }

    /// Scenario mix resolved to kinds; training seed follows the global seed.
    std::vector<std::pair<ScenarioKind, int>> scenario_mix() const {
        std::vector<std::pair<ScenarioKind, int>> mix;
        for (const auto& [kind, count] : scenarios)
            mix.emplace_back(scenario_kind_from_string(kind), count);
        return mix;
    }

    /// Model config completed with the raster geometry (single source of truth).
    nlohmann::json resolved_model() const {
        nlohmann::json m = model;
        m["raster_channels"] = 5;
        m["raster_h"] = raster.height;
        m["raster_w"] = raster.width;
        return m;
    }
};

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config file '") + path + "' is not valid JSON: " +
                         e.what());
    }
    return ExperimentConfig::from_json(j);
}

/// Apply a `--set key.path=value` override onto raw JSON. Values parse as JSON
/// when possible and fall back to strings.
inline void apply_override(nlohmann::json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ParseError("override '" + assignment + "' is not of the form key.path=value");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw;  // plain string
    }
    nlohmann::json* node = &config;
    std::size_t start = 0;
    for (;;) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (key.empty()) throw ParseError("override '" + assignment + "' has an empty key");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

}  // namespace ssn
