// Desk-scale stand-ins for the comparison models: a small residual CNN and a
// small patch-attention network. Both honor the same policy contract as the
// SSN model so the trainer and evaluator stay model-agnostic.
#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssn/layers.hpp"
#include "ssn/model.hpp"
#include "ssn/tensor.hpp"

namespace ssn {

// ---------------------------------------------------------------------------
// Tiny residual CNN
// ---------------------------------------------------------------------------

struct TinyResidualConfig {
    std::vector<int> channels{16, 32, 64};  // one entry per stage
    int blocks_per_stage = 2;
    int horizon = 12;
    int raster_channels = 5;
    int raster_h = 64;
    int raster_w = 64;

    nlohmann::json to_json() const {
        return {{"kind", "tiny-residual"},   {"channels", channels},
                {"blocks_per_stage", blocks_per_stage}, {"horizon", horizon},
                {"raster_channels", raster_channels},   {"raster_h", raster_h},
                {"raster_w", raster_w}};
    }

    static TinyResidualConfig from_json(const nlohmann::json& j) {
        TinyResidualConfig cfg;
        cfg.channels = j.value("channels", cfg.channels);
        cfg.blocks_per_stage = j.value("blocks_per_stage", cfg.blocks_per_stage);
        cfg.horizon = j.value("horizon", cfg.horizon);
        cfg.raster_channels = j.value("raster_channels", cfg.raster_channels);
        cfg.raster_h = j.value("raster_h", cfg.raster_h);
        cfg.raster_w = j.value("raster_w", cfg.raster_w);
        return cfg;
    }
};

/// x + conv(gelu(conv(x))); shortcut is the identity, so zeroing the branch
/// weights makes the block a no-op.
struct ResidualBlock {
    Conv2DLayer conv1, conv2;

    static ResidualBlock create(int channels, Rng& rng) {
        ResidualBlock b;
        b.conv1 = Conv2DLayer::create_same(channels, channels, 3, rng);
        b.conv2 = Conv2DLayer::create_same(channels, channels, 3, rng);
        return b;
    }

    Tensor forward(const Tensor& x) const {
        return add(x, conv2.forward(gelu(conv1.forward(x))));
    }

    void params(ParamMap& out, const std::string& prefix) {
        conv1.params(out, prefix + ".conv1");
        conv2.params(out, prefix + ".conv2");
    }
};

class TinyResidualModel : public Model {
public:
    TinyResidualModel(TinyResidualConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        if (cfg_.channels.empty() || cfg_.blocks_per_stage < 1 || cfg_.horizon < 1)
            throw std::invalid_argument("TinyResidualModel: invalid config");
        Rng rng = Rng(seed).fork(0xBA5E);
        stem_ = Conv2DLayer::create(cfg_.raster_channels, cfg_.channels[0], 5, 2, 2, rng);
        for (std::size_t s = 0; s < cfg_.channels.size(); ++s) {
            stages_.emplace_back();
            for (int b = 0; b < cfg_.blocks_per_stage; ++b)
                stages_.back().push_back(ResidualBlock::create(cfg_.channels[s], rng));
            if (s + 1 < cfg_.channels.size())
                transitions_.push_back(
                    Conv2DLayer::create(cfg_.channels[s], cfg_.channels[s + 1], 3, 2, 1, rng));
        }
        const int c_last = cfg_.channels.back();
        proj_ = LinearLayer::create(c_last, c_last, rng);
        head_ = LinearLayer::create(c_last, 3 * cfg_.horizon, rng);
    }

    Tensor forward(const Tensor& raster) const override {
        Tensor x = gelu(stem_.forward(raster));
        for (std::size_t s = 0; s < stages_.size(); ++s) {
            for (const ResidualBlock& block : stages_[s]) x = block.forward(x);
            if (s + 1 < stages_.size()) x = gelu(transitions_[s].forward(x));
        }
        Tensor pooled = reshape(avg_pool_global(x), {1, x.extent(0)});
        Tensor out = head_.forward(gelu(proj_.forward(pooled)));
        return reshape(out, {cfg_.horizon, 3});
    }

    ParamMap parameters() override {
        ParamMap out;
        stem_.params(out, "stem");
        for (std::size_t s = 0; s < stages_.size(); ++s) {
            for (std::size_t b = 0; b < stages_[s].size(); ++b)
                stages_[s][b].params(out, "stage" + std::to_string(s) + ".block" +
                                              std::to_string(b));
            if (s < transitions_.size())
                transitions_[s].params(out, "transition" + std::to_string(s));
        }
        proj_.params(out, "proj");
        head_.params(out, "head");
        return out;
    }

    nlohmann::json config_json() const override { return cfg_.to_json(); }
    int horizon() const override { return cfg_.horizon; }
    std::string kind() const override { return "tiny-residual"; }

    std::vector<std::vector<ResidualBlock>>& stages() { return stages_; }

private:
    TinyResidualConfig cfg_;
    Conv2DLayer stem_;
    std::vector<std::vector<ResidualBlock>> stages_;
    std::vector<Conv2DLayer> transitions_;
    LinearLayer proj_, head_;
};

// ---------------------------------------------------------------------------
// Tiny ViT
// ---------------------------------------------------------------------------

struct TinyViTConfig {
    int patch = 8;
    int dim = 64;
    int depth = 2;
    int heads = 4;
    int ffn_mult = 4;  // hidden dim expands the input dimension by 4
    int horizon = 12;
    int raster_channels = 5;
    int raster_h = 64;
    int raster_w = 64;
    bool use_pos_encoding = true;

    nlohmann::json to_json() const {
        return {{"kind", "tiny-vit"}, {"patch", patch},   {"dim", dim},
                {"depth", depth},     {"heads", heads},   {"ffn_mult", ffn_mult},
                {"horizon", horizon}, {"raster_channels", raster_channels},
                {"raster_h", raster_h}, {"raster_w", raster_w},
                {"use_pos_encoding", use_pos_encoding}};
    }

    static TinyViTConfig from_json(const nlohmann::json& j) {
        TinyViTConfig cfg;
        cfg.patch = j.value("patch", cfg.patch);
        cfg.dim = j.value("dim", cfg.dim);
        cfg.depth = j.value("depth", cfg.depth);
        cfg.heads = j.value("heads", cfg.heads);
        cfg.ffn_mult = j.value("ffn_mult", cfg.ffn_mult);
        cfg.horizon = j.value("horizon", cfg.horizon);
        cfg.raster_channels = j.value("raster_channels", cfg.raster_channels);
        cfg.raster_h = j.value("raster_h", cfg.raster_h);
        cfg.raster_w = j.value("raster_w", cfg.raster_w);
        cfg.use_pos_encoding = j.value("use_pos_encoding", cfg.use_pos_encoding);
        return cfg;
    }
};

/// FFN(x) = GELU(x W1 + b1) W2 + b2, hidden = ffn_mult * dim.
struct ViTBlock {
    LayerNormUnit norm1, norm2;
    MultiHeadSelfAttention attention;
    LinearLayer ffn1, ffn2;

    static ViTBlock create(int dim, int heads, int ffn_mult, Rng& rng) {
        ViTBlock b;
        b.norm1 = LayerNormUnit::create(dim);
        b.norm2 = LayerNormUnit::create(dim);
        b.attention = MultiHeadSelfAttention::create(dim, heads, rng);
        b.ffn1 = LinearLayer::create(dim, ffn_mult * dim, rng);
        b.ffn2 = LinearLayer::create(ffn_mult * dim, dim, rng);
        return b;
    }

    Tensor forward(const Tensor& tokens) const {
        Tensor x = add(tokens, attention.forward(norm1.forward(tokens)));
        Tensor ffn = ffn2.forward(gelu(ffn1.forward(norm2.forward(x))));
        return add(x, ffn);
    }

    void params(ParamMap& out, const std::string& prefix) {
        norm1.params(out, prefix + ".norm1");
        norm2.params(out, prefix + ".norm2");
        attention.params(out, prefix + ".attn");
        ffn1.params(out, prefix + ".ffn1");
        ffn2.params(out, prefix + ".ffn2");
    }
};

class TinyViTModel : public Model {
public:
    TinyViTModel(TinyViTConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        if (cfg_.raster_h % cfg_.patch != 0 || cfg_.raster_w % cfg_.patch != 0)
            throw std::invalid_argument("TinyViTModel: raster " + std::to_string(cfg_.raster_h) +
                                        "x" + std::to_string(cfg_.raster_w) +
                                        " not divisible by patch " + std::to_string(cfg_.patch));
        Rng rng = Rng(seed).fork(0x717);
        patch_embed_ = Conv2DLayer::create(cfg_.raster_channels, cfg_.dim, cfg_.patch,
                                           cfg_.patch, 0, rng);
        const int tokens = num_tokens();
        pos_encoding_ = Tensor::uniform(rng, {tokens, cfg_.dim}, -0.02, 0.02);
        pos_encoding_.set_requires_grad();
        for (int d = 0; d < cfg_.depth; ++d)
            blocks_.push_back(ViTBlock::create(cfg_.dim, cfg_.heads, cfg_.ffn_mult, rng));
        final_norm_ = LayerNormUnit::create(cfg_.dim);
        head_ = LinearLayer::create(cfg_.dim, 3 * cfg_.horizon, rng);
    }

    int num_tokens() const { return (cfg_.raster_h / cfg_.patch) * (cfg_.raster_w / cfg_.patch); }

    Tensor forward(const Tensor& raster) const override {
        Tensor grid = patch_embed_.forward(raster);
        Tensor tokens = tokens_from_chw(grid);
        if (cfg_.use_pos_encoding) tokens = add(tokens, pos_encoding_);
        for (const ViTBlock& block : blocks_) tokens = block.forward(tokens);
        tokens = final_norm_.forward(tokens);
        const int n = tokens.extent(0);
        Tensor mean_row(Shape{1, n}, 1.0 / static_cast<double>(n));
        Tensor pooled = matmul(mean_row, tokens);
        return reshape(head_.forward(pooled), {cfg_.horizon, 3});
    }

    ParamMap parameters() override {
        ParamMap out;
        patch_embed_.params(out, "patch_embed");
        if (cfg_.use_pos_encoding) out.emplace_back("pos_encoding", &pos_encoding_);
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            blocks_[i].params(out, "block" + std::to_string(i));
        final_norm_.params(out, "final_norm");
        head_.params(out, "head");
        return out;
    }

    nlohmann::json config_json() const override { return cfg_.to_json(); }
    int horizon() const override { return cfg_.horizon; }
    std::string kind() const override { return "tiny-vit"; }

    Tensor& pos_encoding() { return pos_encoding_; }
    const TinyViTConfig& config() const { return cfg_; }

private:
    TinyViTConfig cfg_;
    Conv2DLayer patch_embed_;
    Tensor pos_encoding_;
    std::vector<ViTBlock> blocks_;
    LayerNormUnit final_norm_;
    LinearLayer head_;
};

}  // namespace ssn
