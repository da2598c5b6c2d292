// Central-finite-difference gradient checking for anything expressible as a
// scalar function of leaf tensors. Failures are reported, not thrown.
#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "ssn/tensor.hpp"

namespace ssn {

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
    std::int64_t coords_checked = 0;
    std::string worst;  // "input 2 @ 17: analytic=..., numeric=..."
};

/// Builds a scalar loss from the given inputs. Called repeatedly with the same
/// tensors (finite differences perturb their storage in place).
using GradFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compare reverse-mode gradients of `fn` against central differences.
/// All inputs are treated as differentiable leaves. `max_coords_per_input`
/// caps the number of coordinates perturbed per input (0 = all), sampled
/// reproducibly from `seed`. The active tape is cleared on entry and exit.
/// `denom_floor` bounds the relative-error denominator from below, so
/// coordinates with gradients below it are held to the absolute bound
/// tol * denom_floor; deep compositions need a floor above the central
/// difference noise (~1e-8 absolute for desk-scale losses at h = 1e-5).
inline GradCheckReport grad_check(const GradFn& fn, std::vector<Tensor>& inputs, double tol,
                                  double h = 1e-5, int max_coords_per_input = 0,
                                  std::uint64_t seed = 0, double denom_floor = 1e-6) {
    DiffGraph::active().clear();
    for (Tensor& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    Tensor loss = fn(inputs);
    ssn::backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (const Tensor& t : inputs)
        analytic.emplace_back(t.grad_data(), t.grad_data() + t.numel());
    DiffGraph::active().clear();

    GradCheckReport report;
    Rng rng(seed ^ 0x5eedc0deULL);
    NoGradGuard no_grad;
    for (std::size_t which = 0; which < inputs.size(); ++which) {
        Tensor& t = inputs[which];
        const std::int64_t n = t.numel();
        std::vector<std::int64_t> coords;
        if (max_coords_per_input <= 0 || n <= max_coords_per_input) {
            coords.resize(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
        } else {
            for (int i = 0; i < max_coords_per_input; ++i)
                coords.push_back(rng.uniform_int(static_cast<int>(n)));
        }
        for (std::int64_t c : coords) {
            double* slot = t.data() + c;
            const double saved = *slot;
            *slot = saved + h;
            const double f_plus = fn(inputs).item();
            *slot = saved - h;
            const double f_minus = fn(inputs).item();
            *slot = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * h);
            const double a = analytic[which][static_cast<std::size_t>(c)];
            const double denom = std::max({std::abs(a), std::abs(numeric), denom_floor});
            const double rel = std::abs(a - numeric) / denom;
            ++report.coords_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                char buf[128];
                std::snprintf(buf, sizeof(buf), "input %zu @ %lld: analytic=%.6e, numeric=%.6e",
                              which, static_cast<long long>(c), a, numeric);
                report.worst = buf;
            }
        }
    }
    report.pass = report.max_rel_err < tol;
    return report;
}

/// Convenience: uniform random inputs in [-1, 1] drawn from `seed`.
inline GradCheckReport grad_check_shapes(const GradFn& fn, const std::vector<Shape>& shapes,
                                         double tol, std::uint64_t seed,
                                         int max_coords_per_input = 0, double h = 1e-5) {
    Rng rng(seed);
    std::vector<Tensor> inputs;
    inputs.reserve(shapes.size());
    for (const Shape& s : shapes) inputs.push_back(Tensor::uniform(rng, s, -1.0, 1.0));
    return grad_check(fn, inputs, tol, h, max_coords_per_input, seed);
}

}  // namespace ssn
