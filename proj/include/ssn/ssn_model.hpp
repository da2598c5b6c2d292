// The SSN network: a five-conv stem, stages of SSN blocks (RRU -> FMHSA -> IRU
// with the residual around IRU only), UCD layers between stages, and a pooled
// regression head emitting the future trajectory.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssn/layers.hpp"
#include "ssn/model.hpp"
#include "ssn/tensor.hpp"

namespace ssn {

struct StemConfig {
    std::vector<int> kernels{7, 5, 5, 3, 3};
    std::vector<int> strides{2, 1, 2, 1, 1};
    std::vector<int> channels{16, 16, 32, 32, 32};
};

struct StageConfig {
    int num_blocks = 2;
    int channels = 32;
    int heads = 2;
};

struct SSNModelConfig {
    StemConfig stem;
    std::vector<StageConfig> stages{{2, 32, 2}, {2, 64, 4}, {2, 128, 4}};
    int horizon = 12;
    int raster_channels = 5;
    int raster_h = 64;
    int raster_w = 64;
    int reduction_ratio = 2;
    bool use_layernorm = true;
    bool extra_residuals = false;
    bool use_activations = true;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["kind"] = "ssn";
        j["stem"] = {{"kernels", stem.kernels}, {"strides", stem.strides},
                     {"channels", stem.channels}};
        j["stages"] = nlohmann::json::array();
        for (const auto& s : stages)
            j["stages"].push_back(
                {{"blocks", s.num_blocks}, {"channels", s.channels}, {"heads", s.heads}});
        j["horizon"] = horizon;
        j["raster_channels"] = raster_channels;
        j["raster_h"] = raster_h;
        j["raster_w"] = raster_w;
        j["reduction_ratio"] = reduction_ratio;
        j["use_layernorm"] = use_layernorm;
        j["extra_residuals"] = extra_residuals;
        j["use_activations"] = use_activations;
        return j;
    }

    static SSNModelConfig from_json(const nlohmann::json& j) {
        SSNModelConfig cfg;
        if (j.contains("stem")) {
            cfg.stem.kernels = j["stem"].value("kernels", cfg.stem.kernels);
            cfg.stem.strides = j["stem"].value("strides", cfg.stem.strides);
            cfg.stem.channels = j["stem"].value("channels", cfg.stem.channels);
        }
        if (j.contains("stages")) {
            cfg.stages.clear();
            for (const auto& s : j["stages"])
                cfg.stages.push_back(
                    {s.value("blocks", 2), s.value("channels", 32), s.value("heads", 2)});
        }
        cfg.horizon = j.value("horizon", cfg.horizon);
        cfg.raster_channels = j.value("raster_channels", cfg.raster_channels);
        cfg.raster_h = j.value("raster_h", cfg.raster_h);
        cfg.raster_w = j.value("raster_w", cfg.raster_w);
        cfg.reduction_ratio = j.value("reduction_ratio", cfg.reduction_ratio);
        cfg.use_layernorm = j.value("use_layernorm", cfg.use_layernorm);
        cfg.extra_residuals = j.value("extra_residuals", cfg.extra_residuals);
        cfg.use_activations = j.value("use_activations", cfg.use_activations);
        return cfg;
    }
};

/// Pointwise channel mix, then the fixed 0.5 spatial downsample.
struct UCDLayer {
    Conv2DLayer pointwise;

    static UCDLayer create(int c_in, int c_out, Rng& rng) {
        UCDLayer layer;
        layer.pointwise = Conv2DLayer::create(c_in, c_out, 1, 1, 0, rng);
        return layer;
    }

    Tensor forward(const Tensor& x) const { return downsample_half(pointwise.forward(x)); }

    void params(ParamMap& out, const std::string& prefix) {
        pointwise.params(out, prefix + ".pointwise");
    }
};

struct SSNBlockConfig {
    int channels = 32;
    int heads = 2;
    int reduction_ratio = 2;
    bool use_layernorm = true;
    bool extra_residuals = false;
    bool use_activations = true;
};

/// One SSN block. All three units preserve C x H x W.
struct SSNBlock {
    SSNBlockConfig cfg;
    Conv2DLayer rru_conv1, rru_conv2;  // k=3, stride 1, pad 1
    Conv2DLayer reduction;             // k = ratio, stride = ratio, on keys/values
    LinearLayer token_proj;
    LayerNormUnit norm_q, norm_kv;
    MultiHeadSelfAttention attention;
    Conv2DLayer iru_conv_a;  // k=5, pad 2: large field of view
    LinearLayer iru_linear;
    Conv2DLayer iru_conv_b;  // k=3, pad 1: refinement

    static SSNBlock create(const SSNBlockConfig& cfg, Rng& rng) {
        if (cfg.channels <= 0 || cfg.reduction_ratio < 1)
            throw std::invalid_argument("SSNBlock: invalid config");
        SSNBlock b;
        b.cfg = cfg;
        const int c = cfg.channels;
        b.rru_conv1 = Conv2DLayer::create_same(c, c, 3, rng);
        b.rru_conv2 = Conv2DLayer::create_same(c, c, 3, rng);
        b.reduction =
            Conv2DLayer::create(c, c, cfg.reduction_ratio, cfg.reduction_ratio, 0, rng);
        b.token_proj = LinearLayer::create(c, c, rng);
        b.norm_q = LayerNormUnit::create(c);
        b.norm_kv = LayerNormUnit::create(c);
        b.attention = MultiHeadSelfAttention::create(c, cfg.heads, rng);
        b.iru_conv_a = Conv2DLayer::create_same(c, c, 5, rng);
        b.iru_linear = LinearLayer::create(c, c, rng);
        b.iru_conv_b = Conv2DLayer::create_same(c, c, 3, rng);
        return b;
    }

    Tensor activate(const Tensor& t) const { return cfg.use_activations ? gelu(t) : t; }

    /// Two stacked resolution-preserving convolutions.
    Tensor rru_forward(const Tensor& x) const {
        return rru_conv2.forward(activate(rru_conv1.forward(x)));
    }

    /// Queries from every spatial token; keys/values from the
    /// stride-reduced map — the "fast" economy.
    Tensor fmhsa_forward(const Tensor& x) const {
        const int h = x.extent(1), w = x.extent(2);
        if (h % cfg.reduction_ratio != 0 || w % cfg.reduction_ratio != 0)
            throw ShapeError("fmhsa: extents " + shape_str(x.shape()) +
                             " not divisible by reduction ratio " +
                             std::to_string(cfg.reduction_ratio));
        Tensor q_tokens = tokens_from_chw(x);
        if (cfg.use_layernorm) q_tokens = norm_q.forward(q_tokens);
        q_tokens = token_proj.forward(q_tokens);
        Tensor kv_tokens = tokens_from_chw(reduction.forward(x));
        if (cfg.use_layernorm) kv_tokens = norm_kv.forward(kv_tokens);
        Tensor out = attention.cross(q_tokens, kv_tokens);
        return chw_from_tokens(out, h, w);
    }

    /// Large-kernel conv -> tokenwise linear -> small-kernel conv.
    Tensor iru_forward(const Tensor& x) const {
        const int h = x.extent(1), w = x.extent(2);
        Tensor t = activate(iru_conv_a.forward(x));
        Tensor tokens = iru_linear.forward(tokens_from_chw(t));
        Tensor back = chw_from_tokens(activate(tokens), h, w);
        return iru_conv_b.forward(back);
    }

    // A = RRU(X); B = FMHSA(A); C = IRU(B) + B
    Tensor forward(const Tensor& x) const {
        Tensor a = rru_forward(x);
        if (cfg.extra_residuals) a = add(a, x);
        Tensor b = fmhsa_forward(a);
        if (cfg.extra_residuals) b = add(b, a);
        return add(iru_forward(b), b);
    }

    void params(ParamMap& out, const std::string& prefix) {
        rru_conv1.params(out, prefix + ".rru1");
        rru_conv2.params(out, prefix + ".rru2");
        reduction.params(out, prefix + ".reduction");
        token_proj.params(out, prefix + ".token_proj");
        if (cfg.use_layernorm) {
            norm_q.params(out, prefix + ".norm_q");
            norm_kv.params(out, prefix + ".norm_kv");
        }
        attention.params(out, prefix + ".attn");
        iru_conv_a.params(out, prefix + ".iru_a");
        iru_linear.params(out, prefix + ".iru_linear");
        iru_conv_b.params(out, prefix + ".iru_b");
    }

    /// Zero the IRU so forward() returns B exactly (the residual identity).
    void zero_iru() {
        iru_conv_a.set_zero();
        iru_linear.set_zero();
        iru_conv_b.set_zero();
    }
};

class SSNModel : public Model {
public:
    SSNModel(SSNModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        validate(cfg_);
        Rng rng = Rng(seed).fork(0x55A1);
        int c_prev = cfg_.raster_channels;
        for (std::size_t i = 0; i < cfg_.stem.kernels.size(); ++i) {
            const int k = cfg_.stem.kernels[i];
            stem_.push_back(Conv2DLayer::create(c_prev, cfg_.stem.channels[i], k,
                                                cfg_.stem.strides[i], k / 2, rng));
            c_prev = cfg_.stem.channels[i];
        }
        for (std::size_t s = 0; s < cfg_.stages.size(); ++s) {
            const StageConfig& stage = cfg_.stages[s];
            SSNBlockConfig bc;
            bc.channels = stage.channels;
            bc.heads = stage.heads;
            bc.reduction_ratio = cfg_.reduction_ratio;
            bc.use_layernorm = cfg_.use_layernorm;
            bc.extra_residuals = cfg_.extra_residuals;
            bc.use_activations = cfg_.use_activations;
            stages_.emplace_back();
            for (int b = 0; b < stage.num_blocks; ++b)
                stages_.back().push_back(SSNBlock::create(bc, rng));
            if (s + 1 < cfg_.stages.size())
                ucds_.push_back(
                    UCDLayer::create(stage.channels, cfg_.stages[s + 1].channels, rng));
        }
        const int c_last = cfg_.stages.back().channels;
        proj_ = LinearLayer::create(c_last, c_last, rng);
        head_ = LinearLayer::create(c_last, 3 * cfg_.horizon, rng);
    }

    const SSNModelConfig& config() const { return cfg_; }

    Tensor stem_forward(const Tensor& image) const {
        if (image.dim() != 3 || image.extent(0) != cfg_.raster_channels)
            throw ShapeError("stem: expected " + std::to_string(cfg_.raster_channels) +
                             " channels, got " + shape_str(image.shape()));
        if (image.extent(1) % 4 != 0 || image.extent(2) % 4 != 0)
            throw ShapeError("stem: extents must be divisible by 4, got " +
                             shape_str(image.shape()));
        Tensor x = image;
        for (const auto& conv : stem_) {
            x = conv.forward(x);
            x = cfg_.use_activations ? gelu(x) : x;
        }
        return x;
    }

    Tensor forward(const Tensor& raster) const override {
        if (raster.dim() != 3 || raster.extent(0) != cfg_.raster_channels ||
            raster.extent(1) != cfg_.raster_h || raster.extent(2) != cfg_.raster_w)
            throw ShapeError("SSNModel: raster " + shape_str(raster.shape()) +
                             " does not match configured " +
                             std::to_string(cfg_.raster_channels) + "x" +
                             std::to_string(cfg_.raster_h) + "x" + std::to_string(cfg_.raster_w));
        Tensor x = stem_forward(raster);
        for (std::size_t s = 0; s < stages_.size(); ++s) {
            for (const SSNBlock& block : stages_[s]) x = block.forward(x);
            if (s + 1 < stages_.size()) x = ucds_[s].forward(x);
        }
        Tensor pooled = reshape(avg_pool_global(x), {1, x.extent(0)});
        Tensor projected = proj_.forward(pooled);
        projected = cfg_.use_activations ? gelu(projected) : projected;
        Tensor out = head_.forward(projected);
        return reshape(out, {cfg_.horizon, 3});
    }

    ParamMap parameters() override {
        ParamMap out;
        for (std::size_t i = 0; i < stem_.size(); ++i)
            stem_[i].params(out, "stem." + std::to_string(i));
        for (std::size_t s = 0; s < stages_.size(); ++s) {
            for (std::size_t b = 0; b < stages_[s].size(); ++b)
                stages_[s][b].params(out, "stage" + std::to_string(s) + ".block" +
                                              std::to_string(b));
            if (s < ucds_.size()) ucds_[s].params(out, "ucd" + std::to_string(s));
        }
        proj_.params(out, "proj");
        head_.params(out, "head");
        return out;
    }

    nlohmann::json config_json() const override { return cfg_.to_json(); }
    int horizon() const override { return cfg_.horizon; }
    std::string kind() const override { return "ssn"; }

    // test hooks
    std::vector<std::vector<SSNBlock>>& stages() { return stages_; }
    std::vector<UCDLayer>& ucds() { return ucds_; }
    std::vector<Conv2DLayer>& stem_layers() { return stem_; }

    static void validate(const SSNModelConfig& cfg) {
        const auto& stem = cfg.stem;
        if (stem.kernels.size() != 5 || stem.strides.size() != 5 || stem.channels.size() != 5)
            throw std::invalid_argument("SSNModel: stem must have exactly five layers");
        for (std::size_t i = 1; i < stem.kernels.size(); ++i)
            if (stem.kernels[i] > stem.kernels[i - 1])
                throw std::invalid_argument("SSNModel: stem kernel sizes must be non-increasing");
        int net_stride = 1;
        for (int s : stem.strides) {
            if (s < 1) throw std::invalid_argument("SSNModel: stem strides must be >= 1");
            net_stride *= s;
        }
        if (net_stride != 4)
            throw std::invalid_argument("SSNModel: stem must reduce resolution by 4, got " +
                                        std::to_string(net_stride));
        if (cfg.stages.empty()) throw std::invalid_argument("SSNModel: no stages");
        if (cfg.stages.front().channels != stem.channels.back())
            throw std::invalid_argument("SSNModel: first stage channels (" +
                                        std::to_string(cfg.stages.front().channels) +
                                        ") must match stem output (" +
                                        std::to_string(stem.channels.back()) + ")");
        if (cfg.horizon < 1) throw std::invalid_argument("SSNModel: horizon must be >= 1");
        if (cfg.raster_h % 4 != 0 || cfg.raster_w % 4 != 0)
            throw std::invalid_argument("SSNModel: raster extents must be divisible by 4");
        int h = cfg.raster_h / 4, w = cfg.raster_w / 4;
        for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
            const StageConfig& stage = cfg.stages[s];
            if (stage.num_blocks < 1 || stage.channels < 1)
                throw std::invalid_argument("SSNModel: stage " + std::to_string(s) +
                                            " must have blocks and channels");
            if (stage.heads < 1 || stage.channels % stage.heads != 0)
                throw std::invalid_argument("SSNModel: stage " + std::to_string(s) +
                                            " heads must divide channels");
            if (h % cfg.reduction_ratio != 0 || w % cfg.reduction_ratio != 0)
                throw std::invalid_argument("SSNModel: stage " + std::to_string(s) + " extent " +
                                            std::to_string(h) + "x" + std::to_string(w) +
                                            " not divisible by reduction ratio");
            if (s + 1 < cfg.stages.size()) {
                if (h % 2 != 0 || w % 2 != 0)
                    throw std::invalid_argument("SSNModel: stage " + std::to_string(s) +
                                                " extent must be even before a UCD layer");
                h /= 2;
                w /= 2;
            }
        }
    }

private:
    SSNModelConfig cfg_;
    std::vector<Conv2DLayer> stem_;
    std::vector<std::vector<SSNBlock>> stages_;
    std::vector<UCDLayer> ucds_;
    LinearLayer proj_, head_;
};

}  // namespace ssn
