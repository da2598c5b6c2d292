// Parameterized layers: convolution, linear, layer norm, multi-head
// self-attention. Parameters are leaf tensors with grad buffers; layers are
// immutable during inference and collect themselves into a named ParamMap for
// the optimizer and checkpoints.
#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ssn/common.hpp"
#include "ssn/tensor.hpp"

namespace ssn {

using ParamMap = std::vector<std::pair<std::string, Tensor*>>;

/// Glorot-uniform weights: U(-s, s) with s = sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(Rng& rng, Shape shape, int fan_in, int fan_out) {
    if (fan_in <= 0 || fan_out <= 0)
        throw std::invalid_argument("glorot_uniform: fans must be positive");
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::uniform(rng, std::move(shape), -s, s);
    t.set_requires_grad();
    return t;
}

inline Tensor zero_param(Shape shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    t.set_requires_grad();
    return t;
}

struct Conv2DLayer {
    Tensor weight;  // C_out x C_in x k x k
    Tensor bias;    // C_out
    int stride = 1;
    int pad = 0;

    static Conv2DLayer create(int c_in, int c_out, int k, int stride, int pad, Rng& rng) {
        Conv2DLayer layer;
        layer.weight = glorot_uniform(rng, {c_out, c_in, k, k}, c_in * k * k, c_out * k * k);
        layer.bias = zero_param({c_out});
        layer.stride = stride;
        layer.pad = pad;
        return layer;
    }

    /// Resolution-preserving config: odd k, stride 1, pad = k/2.
    static Conv2DLayer create_same(int c_in, int c_out, int k, Rng& rng) {
        if (k % 2 == 0)
            throw std::invalid_argument("Conv2DLayer: resolution-preserving kernels must be odd");
        return create(c_in, c_out, k, 1, k / 2, rng);
    }

    Tensor forward(const Tensor& x) const { return conv2d(x, weight, bias, stride, pad); }

    int kernel() const { return weight.extent(2); }

    void params(ParamMap& out, const std::string& prefix) {
        out.emplace_back(prefix + ".weight", &weight);
        out.emplace_back(prefix + ".bias", &bias);
    }

    /// Zero everything, then set the center tap of each matching in/out channel
    /// pair to 1, so the layer computes the identity on channel-preserving
    /// configs (test hook and ablation baseline).
    void set_identity() {
        const int cout = weight.extent(0), cin = weight.extent(1), k = weight.extent(2);
        std::fill(weight.data(), weight.data() + weight.numel(), 0.0);
        std::fill(bias.data(), bias.data() + bias.numel(), 0.0);
        const int c = std::min(cin, cout);
        for (int i = 0; i < c; ++i)
            weight.data()[((static_cast<std::int64_t>(i) * cin + i) * k + k / 2) * k + k / 2] =
                1.0;
    }

    void set_zero() {
        std::fill(weight.data(), weight.data() + weight.numel(), 0.0);
        std::fill(bias.data(), bias.data() + bias.numel(), 0.0);
    }
};

struct LinearLayer {
    Tensor weight;  // out x in
    Tensor bias;    // out

    static LinearLayer create(int in, int out, Rng& rng) {
        LinearLayer layer;
        layer.weight = glorot_uniform(rng, {out, in}, in, out);
        layer.bias = zero_param({out});
        return layer;
    }

    Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }

    void params(ParamMap& out, const std::string& prefix) {
        out.emplace_back(prefix + ".weight", &weight);
        out.emplace_back(prefix + ".bias", &bias);
    }

    void set_identity() {
        const int out = weight.extent(0), in = weight.extent(1);
        std::fill(weight.data(), weight.data() + weight.numel(), 0.0);
        std::fill(bias.data(), bias.data() + bias.numel(), 0.0);
        for (int i = 0; i < std::min(in, out); ++i) weight.data()[i * in + i] = 1.0;
    }

    void set_zero() {
        std::fill(weight.data(), weight.data() + weight.numel(), 0.0);
        std::fill(bias.data(), bias.data() + bias.numel(), 0.0);
    }
};

struct LayerNormUnit {
    Tensor gain;  // d
    Tensor bias;  // d
    double epsilon = 1e-5;

    static LayerNormUnit create(int d) {
        LayerNormUnit unit;
        unit.gain = Tensor::ones({d});
        unit.gain.set_requires_grad();
        unit.bias = zero_param({d});
        return unit;
    }

    Tensor forward(const Tensor& tokens) const {
        return layer_norm(tokens, gain, bias, epsilon);
    }

    void params(ParamMap& out, const std::string& prefix) {
        out.emplace_back(prefix + ".gain", &gain);
        out.emplace_back(prefix + ".bias", &bias);
    }
};

/// Scaled dot-product attention over token rows. No positional encoding is
/// added anywhere; the surrounding convolutions carry position.
struct MultiHeadSelfAttention {
    int num_heads = 1;
    int head_dim = 1;
    LinearLayer proj_q, proj_k, proj_v, proj_o;

    static MultiHeadSelfAttention create(int model_dim, int num_heads, Rng& rng) {
        if (num_heads <= 0 || model_dim % num_heads != 0)
            throw std::invalid_argument("MultiHeadSelfAttention: num_heads (" +
                                        std::to_string(num_heads) + ") must divide model_dim (" +
                                        std::to_string(model_dim) + ")");
        MultiHeadSelfAttention mhsa;
        mhsa.num_heads = num_heads;
        mhsa.head_dim = model_dim / num_heads;
        mhsa.proj_q = LinearLayer::create(model_dim, model_dim, rng);
        mhsa.proj_k = LinearLayer::create(model_dim, model_dim, rng);
        mhsa.proj_v = LinearLayer::create(model_dim, model_dim, rng);
        mhsa.proj_o = LinearLayer::create(model_dim, model_dim, rng);
        return mhsa;
    }

    int model_dim() const { return num_heads * head_dim; }

    /// Queries from `q_tokens` [n x d], keys/values from `kv_tokens` [m x d].
    Tensor cross(const Tensor& q_tokens, const Tensor& kv_tokens) const {
        if (q_tokens.dim() != 2 || q_tokens.extent(1) != model_dim())
            throw ShapeError("mhsa: query tokens " + shape_str(q_tokens.shape()) +
                             " do not match model_dim " + std::to_string(model_dim()));
        if (kv_tokens.dim() != 2 || kv_tokens.extent(1) != model_dim())
            throw ShapeError("mhsa: key/value tokens " + shape_str(kv_tokens.shape()) +
                             " do not match model_dim " + std::to_string(model_dim()));
        const Tensor q = proj_q.forward(q_tokens);
        const Tensor k = proj_k.forward(kv_tokens);
        const Tensor v = proj_v.forward(kv_tokens);
        const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(head_dim));
        std::vector<Tensor> heads;
        heads.reserve(static_cast<std::size_t>(num_heads));
        for (int h = 0; h < num_heads; ++h) {
            const int c0 = h * head_dim, c1 = (h + 1) * head_dim;
            Tensor qh = slice_cols(q, c0, c1);
            Tensor kh = slice_cols(k, c0, c1);
            Tensor vh = slice_cols(v, c0, c1);
            Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
            Tensor weights = softmax(scores, 1);
            heads.push_back(matmul(weights, vh));
        }
        return proj_o.forward(concat_cols(heads));
    }

    Tensor forward(const Tensor& tokens) const { return cross(tokens, tokens); }

    void params(ParamMap& out, const std::string& prefix) {
        proj_q.params(out, prefix + ".q");
        proj_k.params(out, prefix + ".k");
        proj_v.params(out, prefix + ".v");
        proj_o.params(out, prefix + ".o");
    }
};

}  // namespace ssn
