// The full finite-difference suite behind the `gradcheck` CLI command: every
// op, every layer, and the complete models at their desk configurations.
#pragma once

#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "ssn/baselines.hpp"
#include "ssn/gradcheck.hpp"
#include "ssn/layers.hpp"
#include "ssn/ssn_model.hpp"
#include "ssn/trainer.hpp"

namespace ssn {

struct GradCheckEntry {
    std::string name;
    double tolerance;
    GradCheckReport report;
};

namespace detail {

inline Tensor weighted(const Tensor& t, std::uint64_t seed) {
    Rng rng(seed);
    Tensor w = Tensor::uniform(rng, t.shape(), -1.0, 1.0);
    return sum(mul(t, w));
}

template <class Fn>
void run_check(std::vector<GradCheckEntry>& entries, const std::string& name, double tol,
               std::vector<Tensor> inputs, Fn&& fn, int max_coords = 0,
               std::uint64_t seed = 1234, double denom_floor = 1e-6) {
    GradCheckEntry entry{name, tol, {}};
    entry.report = grad_check(fn, inputs, tol, 1e-5, max_coords, seed, denom_floor);
    entries.push_back(std::move(entry));
}

inline std::vector<Tensor> with_params(Model& model, const Tensor& raster) {
    std::vector<Tensor> inputs = {raster};
    for (auto& [name, t] : model.parameters()) inputs.push_back(*t);
    return inputs;
}

}  // namespace detail

/// Runs the suite and streams one line per check. `quick` skips the
/// desk-scale whole-model passes (the unit suites cover reduced configs).
inline bool run_gradcheck_suite(std::ostream& out, bool quick = false) {
    std::vector<GradCheckEntry> entries;
    Rng rng(20240601);

    detail::run_check(entries, "matmul", 1e-6,
                      {Tensor::uniform(rng, {4, 5}, -1, 1), Tensor::uniform(rng, {5, 3}, -1, 1)},
                      [](const std::vector<Tensor>& in) {
                          return detail::weighted(matmul(in[0], in[1]), 11);
                      });
    detail::run_check(entries, "conv2d", 1e-4,
                      {Tensor::uniform(rng, {2, 5, 5}, -1, 1),
                       Tensor::uniform(rng, {3, 2, 3, 3}, -1, 1), Tensor::uniform(rng, {3}, -1, 1)},
                      [](const std::vector<Tensor>& in) {
                          return detail::weighted(conv2d(in[0], in[1], in[2], 1, 1), 12);
                      });
    detail::run_check(entries, "conv2d_strided", 1e-4,
                      {Tensor::uniform(rng, {2, 7, 7}, -1, 1),
                       Tensor::uniform(rng, {4, 2, 3, 3}, -1, 1), Tensor::uniform(rng, {4}, -1, 1)},
                      [](const std::vector<Tensor>& in) {
                          return detail::weighted(conv2d(in[0], in[1], in[2], 2, 0), 13);
                      });
    detail::run_check(entries, "gelu", 1e-6, {Tensor::uniform(rng, {16}, -2, 2)},
                      [](const std::vector<Tensor>& in) {
                          return detail::weighted(gelu(in[0]), 14);
                      });
    detail::run_check(entries, "softmax", 1e-6, {Tensor::uniform(rng, {4, 6}, -2, 2)},
                      [](const std::vector<Tensor>& in) {
                          return detail::weighted(softmax(in[0], 1), 15);
                      });
    detail::run_check(entries, "avg_pool_global", 1e-6, {Tensor::uniform(rng, {3, 4, 5}, -1, 1)},
                      [](const std::vector<Tensor>& in) {
                          return detail::weighted(avg_pool_global(in[0]), 16);
                      });
    detail::run_check(entries, "downsample_half", 1e-6, {Tensor::uniform(rng, {3, 6, 4}, -1, 1)},
                      [](const std::vector<Tensor>& in) {
                          return detail::weighted(downsample_half(in[0]), 17);
                      });
    detail::run_check(entries, "linear_layer", 1e-6,
                      {Tensor::uniform(rng, {5, 4}, -1, 1), Tensor::uniform(rng, {3, 4}, -1, 1),
                       Tensor::uniform(rng, {3}, -1, 1)},
                      [](const std::vector<Tensor>& in) {
                          return detail::weighted(linear(in[0], in[1], in[2]), 18);
                      });
    detail::run_check(entries, "layer_norm", 1e-5,
                      {Tensor::uniform(rng, {4, 6}, -1, 1), Tensor::uniform(rng, {6}, 0.5, 1.5),
                       Tensor::uniform(rng, {6}, -0.5, 0.5)},
                      [](const std::vector<Tensor>& in) {
                          return detail::weighted(layer_norm(in[0], in[1], in[2]), 19);
                      });
    detail::run_check(entries, "wrapped_loss", 1e-6,
                      {Tensor::uniform(rng, {6, 3}, -1, 1), Tensor::uniform(rng, {6, 3}, -1, 1)},
                      [](const std::vector<Tensor>& in) {
                          return compute_loss(in[0], in[1], LossConfig{1.0, 0.8});
                      });

    {
        Rng lrng(31);
        auto mhsa = MultiHeadSelfAttention::create(6, 2, lrng);
        std::vector<Tensor> inputs = {Tensor::uniform(lrng, {5, 6}, -1, 1)};
        for (auto& [name, t] : [&] {
                 ParamMap pm;
                 mhsa.params(pm, "mhsa");
                 return pm;
             }())
            inputs.push_back(*t);
        detail::run_check(entries, "mhsa", 1e-4, inputs, [&](const std::vector<Tensor>& in) {
            return detail::weighted(mhsa.forward(in[0]), 20);
        });
    }
    {
        SSNBlockConfig bc;
        bc.channels = 4;
        bc.heads = 2;
        Rng brng(32);
        SSNBlock block = SSNBlock::create(bc, brng);
        std::vector<Tensor> inputs = {Tensor::uniform(brng, {4, 4, 4}, -1, 1)};
        ParamMap pm;
        block.params(pm, "block");
        for (auto& [name, t] : pm) inputs.push_back(*t);
        detail::run_check(
            entries, "ssn_block", 1e-4, inputs,
            [&](const std::vector<Tensor>& in) {
                return detail::weighted(block.forward(in[0]), 21);
            },
            8, 1234, 1e-4);
    }
    {
        SSNModelConfig cfg;
        cfg.stem.channels = {4, 4, 8, 8, 8};
        cfg.stages = {{1, 8, 2}, {1, 16, 2}};
        cfg.horizon = 3;
        cfg.raster_h = cfg.raster_w = 16;
        SSNModel model(cfg, 7);
        Rng mrng(33);
        Tensor raster = Tensor::uniform(mrng, {5, 16, 16}, -1, 1);
        detail::run_check(
            entries, "ssn_model_reduced", 1e-4, detail::with_params(model, raster),
            [&](const std::vector<Tensor>& in) {
                return detail::weighted(model.forward(in[0]), 22);
            },
            3, 1234, 1e-3);
    }
    if (!quick) {
        {
            SSNModelConfig cfg;  // desk defaults: 5x64x64, 3 stages
            SSNModel model(cfg, 7);
            Rng mrng(34);
            Tensor raster = Tensor::uniform(mrng, {5, 64, 64}, -1, 1);
            detail::run_check(
                entries, "ssn_model_desk", 1e-4, detail::with_params(model, raster),
                [&](const std::vector<Tensor>& in) {
                    return detail::weighted(model.forward(in[0]), 23);
                },
                1, 1234, 1e-3);
        }
        {
            TinyResidualConfig cfg;
            TinyResidualModel model(cfg, 7);
            Rng mrng(35);
            Tensor raster = Tensor::uniform(mrng, {5, 64, 64}, -1, 1);
            detail::run_check(
                entries, "tiny_residual_desk", 1e-4, detail::with_params(model, raster),
                [&](const std::vector<Tensor>& in) {
                    return detail::weighted(model.forward(in[0]), 24);
                },
                2, 1234, 1e-3);
        }
        {
            TinyViTConfig cfg;
            TinyViTModel model(cfg, 7);
            Rng mrng(36);
            Tensor raster = Tensor::uniform(mrng, {5, 64, 64}, -1, 1);
            detail::run_check(
                entries, "tiny_vit_desk", 1e-4, detail::with_params(model, raster),
                [&](const std::vector<Tensor>& in) {
                    return detail::weighted(model.forward(in[0]), 25);
                },
                2, 1234, 1e-3);
        }
    } else {
        {
            TinyResidualConfig cfg;
            cfg.channels = {4, 8};
            cfg.blocks_per_stage = 1;
            cfg.horizon = 2;
            cfg.raster_h = cfg.raster_w = 16;
            TinyResidualModel model(cfg, 7);
            Rng mrng(35);
            Tensor raster = Tensor::uniform(mrng, {5, 16, 16}, -1, 1);
            detail::run_check(
                entries, "tiny_residual_reduced", 1e-4, detail::with_params(model, raster),
                [&](const std::vector<Tensor>& in) {
                    return detail::weighted(model.forward(in[0]), 24);
                },
                3, 1234, 1e-3);
        }
        {
            TinyViTConfig cfg;
            cfg.dim = 8;
            cfg.depth = 1;
            cfg.heads = 2;
            cfg.raster_h = cfg.raster_w = 16;
            cfg.horizon = 2;
            TinyViTModel model(cfg, 7);
            Rng mrng(36);
            Tensor raster = Tensor::uniform(mrng, {5, 16, 16}, -1, 1);
            detail::run_check(
                entries, "tiny_vit_reduced", 1e-4, detail::with_params(model, raster),
                [&](const std::vector<Tensor>& in) {
                    return detail::weighted(model.forward(in[0]), 25);
                },
                3, 1234, 1e-3);
        }
    }

    bool all_pass = true;
    for (const GradCheckEntry& e : entries) {
        all_pass = all_pass && e.report.pass;
        out << (e.report.pass ? "[pass] " : "[FAIL] ") << e.name << ": max_rel_err="
            << std::scientific << std::setprecision(3) << e.report.max_rel_err
            << " (tol=" << e.tolerance << ", coords=" << e.report.coords_checked << ")";
        if (!e.report.pass) out << "  worst: " << e.report.worst;
        out << '\n';
    }
    return all_pass;
}

}  // namespace ssn
