// Model registry keyed by config "kind".
#pragma once

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "ssn/baselines.hpp"
#include "ssn/model.hpp"
#include "ssn/ssn_model.hpp"
#include "ssn/trainer.hpp"

namespace ssn {

inline std::unique_ptr<Model> build_model(const nlohmann::json& cfg, std::uint64_t seed) {
    const std::string kind = cfg.value("kind", std::string("ssn"));
    if (kind == "ssn") return std::make_unique<SSNModel>(SSNModelConfig::from_json(cfg), seed);
    if (kind == "tiny-residual")
        return std::make_unique<TinyResidualModel>(TinyResidualConfig::from_json(cfg), seed);
    if (kind == "tiny-vit")
        return std::make_unique<TinyViTModel>(TinyViTConfig::from_json(cfg), seed);
    throw ParseError("unknown model kind '" + kind + "'");
}

inline std::unique_ptr<Model> build_model_from_checkpoint(const std::string& path,
                                                          std::uint64_t seed = 0) {
    CheckpointContents contents = read_checkpoint(path);
    auto model = build_model(contents.config, seed);
    load_checkpoint(*model, path);
    return model;
}

}  // namespace ssn
