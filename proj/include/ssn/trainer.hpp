// Behavior-cloning trainer: wrapped-angle imitation loss on logged ego
// futures, SGD-momentum and adaptive-moments optimizers, the seeded training
// loop, and binary checkpoints with a config echo.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssn/common.hpp"
#include "ssn/model.hpp"
#include "ssn/tensor.hpp"
#include "ssn/world.hpp"

namespace ssn {

struct LossConfig {
    double position_weight = 1.0;
    double yaw_weight = 1.0;
};

/// Mean squared (x, y) error plus the weighted mean squared wrapped yaw
/// difference; wrap(d) = atan2(sin d, cos d) keeps the seam finite.
inline Tensor compute_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg) {
    if (pred.shape() != target.shape() || pred.dim() != 2 || pred.extent(1) != 3)
        throw ShapeError("compute_loss: expected matching [T x 3], got " +
                         shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    if (cfg.position_weight < 0.0 || cfg.yaw_weight < 0.0 ||
        (cfg.position_weight == 0.0 && cfg.yaw_weight == 0.0))
        throw std::invalid_argument("compute_loss: weights must be >= 0 and not both zero");
    Tensor pos_diff = sub(slice_cols(pred, 0, 2), slice_cols(target, 0, 2));
    Tensor pos_mse = mean(mul(pos_diff, pos_diff));
    Tensor yaw_diff = wrap_angle(sub(slice_cols(pred, 2, 3), slice_cols(target, 2, 3)));
    Tensor yaw_mse = mean(mul(yaw_diff, yaw_diff));
    return add(scale(pos_mse, cfg.position_weight), scale(yaw_mse, cfg.yaw_weight));
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

enum class OptimizerKind { sgd_momentum, adaptive_moments };

inline const char* to_string(OptimizerKind k) {
    return k == OptimizerKind::sgd_momentum ? "sgd-momentum" : "adaptive-moments";
}

inline OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "sgd-momentum") return OptimizerKind::sgd_momentum;
    if (s == "adaptive-moments") return OptimizerKind::adaptive_moments;
    throw ParseError("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adaptive_moments;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Optimizer {
public:
    Optimizer(ParamMap params, OptimizerConfig cfg)
        : params_(std::move(params)), cfg_(cfg) {
        first_.resize(params_.size());
        second_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const std::size_t n = static_cast<std::size_t>(params_[i].second->numel());
            first_[i].assign(n, 0.0);
            if (cfg_.kind == OptimizerKind::adaptive_moments) second_[i].assign(n, 0.0);
        }
    }

    void step() {
        ++step_count_;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor& p = *params_[i].second;
            if (!p.requires_grad() || !p.has_grad())
                throw std::logic_error("Optimizer::step: parameter '" + params_[i].first +
                                       "' has no gradient");
            double* w = p.data();
            const double* g = p.grad_data();
            const std::size_t n = static_cast<std::size_t>(p.numel());
            if (cfg_.kind == OptimizerKind::sgd_momentum) {
                double* v = first_[i].data();
                for (std::size_t j = 0; j < n; ++j) {
                    v[j] = cfg_.momentum * v[j] + g[j];
                    w[j] -= cfg_.learning_rate * v[j];
                }
            } else {
                double* m = first_[i].data();
                double* v = second_[i].data();
                const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
                const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
                for (std::size_t j = 0; j < n; ++j) {
                    m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
                    v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
                    const double m_hat = m[j] / bc1;
                    const double v_hat = v[j] / bc2;
                    w[j] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
                }
            }
        }
    }

    void zero_grad() {
        for (auto& [name, p] : params_) p->zero_grad();
    }

    std::int64_t step_count() const { return step_count_; }

private:
    ParamMap params_;
    OptimizerConfig cfg_;
    std::vector<std::vector<double>> first_, second_;
    std::int64_t step_count_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
    int epochs = 4;
    int batch_size = 4;
    std::uint64_t seed = 7;
    OptimizerConfig optimizer;
    LossConfig loss;
    int max_steps = 0;               // 0 = bounded by epochs only
    double target_loss_ratio = 0.0;  // stop once loss < initial / ratio (0 = off)
};

struct TrainResult {
    std::vector<double> loss_curve;  // one entry per optimizer step
    int steps = 0;
    int skipped_scenes = 0;  // too short for history + horizon
};

/// Logged ego future of `horizon` steps expressed in the ego frame at `t`.
inline Tensor imitation_target(const Scene& scene, int t, int horizon) {
    const AgentState& ego = scene.frames[static_cast<std::size_t>(t)].ego;
    const double c = std::cos(ego.yaw), s = std::sin(ego.yaw);
    Tensor target(Shape{horizon, 3});
    for (int k = 0; k < horizon; ++k) {
        const AgentState& future = scene.frames[static_cast<std::size_t>(t + 1 + k)].ego;
        const Vec2 d = future.centroid - ego.centroid;
        target.data()[k * 3 + 0] = c * d.x + s * d.y;
        target.data()[k * 3 + 1] = -s * d.x + c * d.y;
        target.data()[k * 3 + 2] = wrap_angle(future.yaw - ego.yaw);
    }
    return target;
}

inline TrainResult train(Model& model, const std::vector<Scene>& dataset,
                         const RasterConfig& raster_cfg, const TrainConfig& cfg) {
    if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
    const int horizon = model.horizon();

    struct Sample {
        int scene;
        int t;
    };
    std::vector<Sample> samples;
    TrainResult result;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const int frames = static_cast<int>(dataset[i].frames.size());
        const int last_t = frames - 1 - horizon;
        if (last_t < raster_cfg.history_steps) {
            ++result.skipped_scenes;
            continue;
        }
        for (int t = raster_cfg.history_steps; t <= last_t; ++t)
            samples.push_back({static_cast<int>(i), t});
    }
    if (samples.empty())
        throw std::invalid_argument("train: no usable samples (scenes shorter than history + "
                                    "horizon)");

    Optimizer optimizer(model.parameters(), cfg.optimizer);
    Rng rng = Rng(cfg.seed).fork(0x7121);
    double initial_loss = -1.0;
    bool done = false;
    for (int epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
        rng.shuffle(samples);
        for (std::size_t offset = 0; offset < samples.size() && !done;
             offset += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(samples.size(), offset + static_cast<std::size_t>(cfg.batch_size));
            optimizer.zero_grad();
            Tensor batch_loss;
            for (std::size_t s = offset; s < end; ++s) {
                const Scene& scene = dataset[static_cast<std::size_t>(samples[s].scene)];
                Tensor raster = rasterize(scene, samples[s].t, raster_cfg);
                Tensor pred = model.forward(raster);
                Tensor loss = compute_loss(pred, imitation_target(scene, samples[s].t, horizon),
                                           cfg.loss);
                batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
            }
            batch_loss = scale(batch_loss, 1.0 / static_cast<double>(end - offset));
            backward(batch_loss);
            DiffGraph::active().clear();
            optimizer.step();
            const double loss_value = batch_loss.item();
            result.loss_curve.push_back(loss_value);
            ++result.steps;
            if (initial_loss < 0.0) initial_loss = loss_value;
            if (cfg.target_loss_ratio > 0.0 && loss_value < initial_loss / cfg.target_loss_ratio)
                done = true;
            if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) done = true;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: "SSN1" magic, u32 version, config JSON echo, named tensors of
// little-endian 64-bit floats.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
    return v;
}

}  // namespace detail

inline void save_checkpoint(Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("save_checkpoint: cannot open '" + path + "'");
    out.write("SSN1", 4);
    detail::write_pod(out, kCheckpointVersion);
    const std::string config = model.config_json().dump();
    detail::write_pod(out, static_cast<std::uint64_t>(config.size()));
    out.write(config.data(), static_cast<std::streamsize>(config.size()));
    for (auto& [name, tensor] : model.parameters()) {
        detail::write_pod(out, static_cast<std::uint64_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_pod(out, static_cast<std::uint32_t>(tensor->dim()));
        for (int i = 0; i < tensor->dim(); ++i)
            detail::write_pod(out, static_cast<std::uint64_t>(tensor->extent(i)));
        out.write(reinterpret_cast<const char*>(tensor->data()),
                  static_cast<std::streamsize>(tensor->numel() * sizeof(double)));
    }
    if (!out) throw CheckpointError("save_checkpoint: write to '" + path + "' failed");
}

struct CheckpointContents {
    nlohmann::json config;
    std::map<std::string, Tensor> tensors;
};

inline CheckpointContents read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("read_checkpoint: cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SSN1", 4) != 0)
        throw CheckpointError("read_checkpoint: bad magic, expected \"SSN1\" (format version " +
                              std::to_string(kCheckpointVersion) + ")");
    const auto version = detail::read_pod<std::uint32_t>(in, "version");
    if (version != kCheckpointVersion)
        throw CheckpointError("read_checkpoint: version " + std::to_string(version) +
                              " unsupported, expected " + std::to_string(kCheckpointVersion));
    const auto config_len = detail::read_pod<std::uint64_t>(in, "config length");
    std::string config(config_len, '\0');
    in.read(config.data(), static_cast<std::streamsize>(config_len));
    if (!in) throw CheckpointError("read_checkpoint: truncated config");
    CheckpointContents contents;
    try {
        contents.config = nlohmann::json::parse(config);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("read_checkpoint: config echo is not JSON: ") +
                              e.what());
    }
    // tensors follow until end of file
    while (in.peek() != std::ifstream::traits_type::eof()) {
        const auto name_len = detail::read_pod<std::uint64_t>(in, "name length");
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        const auto rank = detail::read_pod<std::uint32_t>(in, "rank");
        Shape shape;
        for (std::uint32_t d = 0; d < rank; ++d)
            shape.push_back(static_cast<int>(detail::read_pod<std::uint64_t>(in, "extent")));
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!in) throw CheckpointError("read_checkpoint: truncated tensor '" + name + "'");
        contents.tensors.emplace(std::move(name), std::move(t));
    }
    return contents;
}

/// Load a checkpoint into an existing model; the config echo must match the
/// model's own config exactly.
inline void load_checkpoint(Model& model, const std::string& path) {
    CheckpointContents contents = read_checkpoint(path);
    if (contents.config != model.config_json())
        throw CheckpointError("load_checkpoint: config echo " + contents.config.dump() +
                              " does not match model config " + model.config_json().dump());
    for (auto& [name, tensor] : model.parameters()) {
        auto it = contents.tensors.find(name);
        if (it == contents.tensors.end())
            throw CheckpointError("load_checkpoint: missing tensor '" + name + "'");
        if (it->second.shape() != tensor->shape())
            throw CheckpointError("load_checkpoint: tensor '" + name + "' has shape " +
                                  shape_str(it->second.shape()) + ", model expects " +
                                  shape_str(tensor->shape()));
        std::copy(it->second.data(), it->second.data() + it->second.numel(), tensor->data());
    }
}

}  // namespace ssn
