#include <catch2/catch.hpp>

#include <cmath>

#include "oracles.hpp"
#include "ssn/gradcheck.hpp"
#include "ssn/ssn_model.hpp"

using namespace ssn;

namespace {

SSNModelConfig toy_config() {
    SSNModelConfig cfg;
    cfg.stem.kernels = {7, 5, 5, 3, 3};
    cfg.stem.strides = {2, 1, 2, 1, 1};
    cfg.stem.channels = {4, 4, 8, 8, 8};
    cfg.stages = {{1, 8, 2}, {1, 16, 2}};
    cfg.horizon = 3;
    cfg.raster_h = cfg.raster_w = 16;
    return cfg;
}

double gelu_ref(double v) { return v * 0.5 * (1.0 + std::erf(v * 0.70710678118654752440)); }

// Collect shared-storage copies of an entire model's parameters plus the input
// raster, for whole-model finite differencing.
std::vector<Tensor> model_inputs(Model& model, const Tensor& raster) {
    std::vector<Tensor> inputs = {raster};
    for (auto& [name, t] : model.parameters()) inputs.push_back(*t);
    return inputs;
}

}  // anonymous namespace

TEST_CASE("stem shapes at desk and full scale") {
    SSNModelConfig desk;  // defaults
    SSNModel model(desk, 7);
    Rng rng(1);
    Tensor raster = Tensor::uniform(rng, {5, 64, 64}, 0.0, 1.0);
    Tensor out = model.stem_forward(raster);
    REQUIRE(out.shape() == Shape{32, 16, 16});

    SSNModelConfig full_scale;
    full_scale.raster_h = full_scale.raster_w = 224;
    SSNModel full_model(full_scale, 7);
    Tensor big = Tensor::uniform(rng, {5, 224, 224}, 0.0, 1.0);
    REQUIRE(full_model.stem_forward(big).shape() == Shape{32, 56, 56});

    Tensor odd = Tensor::zeros({5, 30, 30});
    REQUIRE_THROWS_AS(model.stem_forward(odd), ShapeError);
}

TEST_CASE("stem gradient check on a small input") {
    SSNModel model(toy_config(), 7);
    Rng rng(2);
    Tensor raster = Tensor::uniform(rng, {5, 16, 16}, -1.0, 1.0);
    std::vector<Tensor> inputs = {raster};
    auto fn = [&](const std::vector<Tensor>& in) {
        Tensor y = model.stem_forward(in[0]);
        return sum(mul(y, y));
    };
    auto report = grad_check(fn, inputs, 1e-4, 1e-5, 24, 3);
    INFO(report.worst);
    REQUIRE(report.pass);
}

TEST_CASE("ucd halves resolution and mixes channels linearly") {
    Rng rng(11);
    auto ucd = UCDLayer::create(32, 64, rng);
    Tensor x = Tensor::uniform(rng, {32, 16, 16}, -1.0, 1.0);
    REQUIRE(ucd.forward(x).shape() == Shape{64, 8, 8});

    auto identity = UCDLayer::create(3, 3, rng);
    identity.pointwise.set_identity();
    Tensor constant = Tensor::full({3, 6, 6}, 2.5);
    Tensor out = identity.forward(constant);
    REQUIRE(out.shape() == Shape{3, 3, 3});
    for (std::int64_t i = 0; i < out.numel(); ++i) REQUIRE(out.data()[i] == 2.5);

    Tensor oddball = Tensor::zeros({3, 5, 6});
    REQUIRE_THROWS_AS(identity.forward(oddball), ShapeError);

    auto small = UCDLayer::create(2, 3, rng);
    std::vector<Tensor> inputs = {Tensor::uniform(rng, {2, 4, 4}, -1.0, 1.0),
                                  small.pointwise.weight, small.pointwise.bias};
    auto fn = [&](const std::vector<Tensor>& in) {
        Tensor y = downsample_half(conv2d(in[0], in[1], in[2], 1, 0));
        return sum(mul(y, y));
    };
    auto report = grad_check(fn, inputs, 1e-4, 1e-5, 0, 12);
    REQUIRE(report.pass);
}

TEST_CASE("rru is two stacked same-resolution convs") {
    SSNBlockConfig bc;
    bc.channels = 3;
    bc.heads = 1;
    bc.use_activations = false;
    Rng rng(21);
    SSNBlock block = SSNBlock::create(bc, rng);

    block.rru_conv1.set_identity();
    block.rru_conv2.set_identity();
    Tensor x = Tensor::uniform(rng, {3, 6, 6}, -1.0, 1.0);
    Tensor out = block.rru_forward(x);
    for (std::int64_t i = 0; i < x.numel(); ++i) REQUIRE(out.data()[i] == x.data()[i]);

    // random parameters: shape preserved, equals the two-pass loop oracle
    SSNBlockConfig bc2;
    bc2.channels = 4;
    bc2.heads = 2;
    Rng rng2(22);
    SSNBlock block2 = SSNBlock::create(bc2, rng2);
    Tensor y = Tensor::uniform(rng2, {4, 8, 6}, -1.0, 1.0);
    Tensor ours = block2.rru_forward(y);
    REQUIRE(ours.shape() == y.shape());

    Tensor mid = oracle::conv2d_naive(y, block2.rru_conv1.weight, block2.rru_conv1.bias, 1, 1);
    for (std::int64_t i = 0; i < mid.numel(); ++i) mid.data()[i] = gelu_ref(mid.data()[i]);
    Tensor ref = oracle::conv2d_naive(mid, block2.rru_conv2.weight, block2.rru_conv2.bias, 1, 1);
    for (std::int64_t i = 0; i < ref.numel(); ++i)
        REQUIRE(ours.data()[i] == Approx(ref.data()[i]).margin(1e-12));
}

TEST_CASE("fmhsa preserves shape and averages constant inputs") {
    SSNBlockConfig bc;
    bc.channels = 32;
    bc.heads = 4;
    Rng rng(31);
    SSNBlock block = SSNBlock::create(bc, rng);
    Tensor x = Tensor::uniform(rng, {32, 8, 8}, -1.0, 1.0);
    REQUIRE(block.fmhsa_forward(x).shape() == Shape{32, 8, 8});

    Tensor constant({32, 8, 8});
    Rng crng(32);
    for (int c = 0; c < 32; ++c) {
        const double v = crng.uniform(-1.0, 1.0);
        for (int p = 0; p < 64; ++p) constant.data()[c * 64 + p] = v;
    }
    Tensor out = block.fmhsa_forward(constant);
    for (int c = 0; c < 32; ++c) {
        const double first = out.data()[c * 64];
        for (int p = 1; p < 64; ++p)
            REQUIRE(out.data()[c * 64 + p] == Approx(first).margin(1e-12));
    }
}

TEST_CASE("fmhsa with unit reduction equals naive full attention") {
    SSNBlockConfig bc;
    bc.channels = 6;
    bc.heads = 2;
    bc.reduction_ratio = 1;
    bc.use_layernorm = false;
    Rng rng(41);
    SSNBlock block = SSNBlock::create(bc, rng);
    const int h = 4, w = 3, c = 6;
    Tensor x = Tensor::uniform(rng, {c, h, w}, -1.0, 1.0);
    Tensor ours = block.fmhsa_forward(x);
    Tensor ref = oracle::fmhsa_naive(block, x);
    for (std::int64_t i = 0; i < ours.numel(); ++i)
        REQUIRE(ours.data()[i] == Approx(ref.data()[i]).margin(1e-9));
}

TEST_CASE("iru preserves shape and composes to identity") {
    SSNBlockConfig bc;
    bc.channels = 8;
    bc.heads = 2;
    Rng rng(51);
    SSNBlock block = SSNBlock::create(bc, rng);
    Tensor x = Tensor::uniform(rng, {8, 8, 8}, -1.0, 1.0);
    REQUIRE(block.iru_forward(x).shape() == Shape{8, 8, 8});

    SSNBlockConfig idc;
    idc.channels = 3;
    idc.heads = 1;
    idc.use_activations = false;
    Rng rng2(52);
    SSNBlock ident = SSNBlock::create(idc, rng2);
    ident.iru_conv_a.set_identity();
    ident.iru_linear.set_identity();
    ident.iru_conv_b.set_identity();
    Tensor y = Tensor::uniform(rng2, {3, 4, 4}, -1.0, 1.0);
    Tensor out = ident.iru_forward(y);
    for (std::int64_t i = 0; i < y.numel(); ++i) REQUIRE(out.data()[i] == y.data()[i]);
}

TEST_CASE("iru gradient check") {
    SSNBlockConfig bc;
    bc.channels = 4;
    bc.heads = 2;
    Rng rng(53);
    SSNBlock block = SSNBlock::create(bc, rng);
    std::vector<Tensor> inputs = {Tensor::uniform(rng, {4, 4, 4}, -1.0, 1.0),
                                  block.iru_conv_a.weight, block.iru_linear.weight,
                                  block.iru_conv_b.weight};
    auto fn = [&](const std::vector<Tensor>& in) {
        Tensor y = block.iru_forward(in[0]);
        return sum(mul(y, y));
    };
    auto report = grad_check(fn, inputs, 1e-4, 1e-5, 16, 54);
    INFO(report.worst);
    REQUIRE(report.pass);
}

TEST_CASE("ssn block follows the three-unit composition with residual on iru") {
    SSNBlockConfig bc;
    bc.channels = 8;
    bc.heads = 2;
    Rng rng(61);
    SSNBlock block = SSNBlock::create(bc, rng);
    Tensor x = Tensor::uniform(rng, {8, 4, 4}, -1.0, 1.0);

    // zeroed IRU: C = IRU(B) + B = B exactly
    SSNBlock zeroed = block;
    zeroed.zero_iru();
    Tensor b_only = zeroed.fmhsa_forward(zeroed.rru_forward(x));
    Tensor c_full = zeroed.forward(x);
    for (std::int64_t i = 0; i < x.numel(); ++i)
        REQUIRE(c_full.data()[i] == b_only.data()[i]);

    // shape preserved across a stage of two blocks
    SSNBlock second = SSNBlock::create(bc, rng);
    Tensor staged = second.forward(block.forward(x));
    REQUIRE(staged.shape() == x.shape());
}

TEST_CASE("removing fmhsa changes the block output") {
    SSNBlockConfig bc;
    bc.channels = 8;
    bc.heads = 2;
    Rng rng(62);
    SSNBlock block = SSNBlock::create(bc, rng);
    Tensor x = Tensor::uniform(rng, {8, 4, 4}, -1.0, 1.0);
    Tensor full = block.forward(x);
    Tensor a = block.rru_forward(x);
    Tensor bypassed = add(block.iru_forward(a), a);  // FMHSA replaced by identity
    double max_diff = 0.0;
    for (std::int64_t i = 0; i < full.numel(); ++i)
        max_diff = std::max(max_diff, std::abs(full.data()[i] - bypassed.data()[i]));
    REQUIRE(max_diff > 1e-6);
}

TEST_CASE("full ssn block gradient check") {
    SSNBlockConfig bc;
    bc.channels = 4;
    bc.heads = 2;
    Rng rng(63);
    SSNBlock block = SSNBlock::create(bc, rng);
    Tensor x = Tensor::uniform(rng, {4, 4, 4}, -1.0, 1.0);
    std::vector<Tensor> inputs = {x};
    ParamMap pm;
    block.params(pm, "block");
    for (auto& [name, t] : pm) inputs.push_back(*t);
    auto fn = [&](const std::vector<Tensor>& in) {
        Tensor y = block.forward(in[0]);
        return sum(mul(y, y));
    };
    auto report = grad_check(fn, inputs, 1e-4, 1e-5, 6, 64);
    INFO(report.worst);
    REQUIRE(report.pass);
}

TEST_CASE("model forward emits horizon x 3 deterministically") {
    SSNModelConfig cfg;  // desk defaults
    SSNModel model(cfg, 7);
    Rng rng(71);
    Tensor raster = Tensor::uniform(rng, {5, 64, 64}, 0.0, 1.0);
    NoGradGuard no_grad;
    Tensor a = model.forward(raster);
    REQUIRE(a.shape() == Shape{12, 3});
    Tensor b = model.forward(raster);
    for (std::int64_t i = 0; i < a.numel(); ++i) REQUIRE(a.data()[i] == b.data()[i]);

    Tensor wrong = Tensor::zeros({5, 32, 32});
    REQUIRE_THROWS_AS(model.forward(wrong), ShapeError);
}

TEST_CASE("whole-model gradient check on the reduced config") {
    SSNModel model(toy_config(), 7);
    Rng rng(72);
    Tensor raster = Tensor::uniform(rng, {5, 16, 16}, -1.0, 1.0);
    std::vector<Tensor> inputs = model_inputs(model, raster);
    Rng wrng(73);
    Tensor weights = Tensor::uniform(wrng, {3, 3}, -1.0, 1.0);
    auto fn = [&](const std::vector<Tensor>& in) {
        return sum(mul(model.forward(in[0]), weights));
    };
    auto report = grad_check(fn, inputs, 1e-4, 1e-5, 3, 74);
    INFO(report.worst);
    REQUIRE(report.pass);
}

TEST_CASE("parameter count matches the analytic formula") {
    auto linear_params = [](int in, int out) { return static_cast<std::int64_t>(in) * out + out; };
    auto conv_params = [](int cin, int cout, int k) {
        return static_cast<std::int64_t>(cout) * cin * k * k + cout;
    };
    for (std::uint64_t seed : {7ull, 8ull}) {
        SSNModelConfig cfg = seed == 7 ? SSNModelConfig{} : toy_config();
        SSNModel model(cfg, seed);
        std::int64_t expected = 0;
        int c_prev = cfg.raster_channels;
        for (std::size_t i = 0; i < 5; ++i) {
            expected += conv_params(c_prev, cfg.stem.channels[i], cfg.stem.kernels[i]);
            c_prev = cfg.stem.channels[i];
        }
        for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
            const int c = cfg.stages[s].channels;
            std::int64_t per_block = 2 * conv_params(c, c, 3)                      // RRU
                                     + conv_params(c, c, cfg.reduction_ratio)      // reduction
                                     + linear_params(c, c)                         // token proj
                                     + (cfg.use_layernorm ? 4 * c : 0)             // two norms
                                     + 4 * linear_params(c, c)                     // q,k,v,o
                                     + conv_params(c, c, 5) + linear_params(c, c)  // IRU
                                     + conv_params(c, c, 3);
            expected += per_block * cfg.stages[s].num_blocks;
            if (s + 1 < cfg.stages.size())
                expected += conv_params(c, cfg.stages[s + 1].channels, 1);
        }
        const int c_last = cfg.stages.back().channels;
        expected += linear_params(c_last, c_last) + linear_params(c_last, 3 * cfg.horizon);
        REQUIRE(model.parameter_count() == expected);
    }
}

TEST_CASE("shape ledger holds over random valid configs") {
    Rng rng(81);
    for (int it = 0; it < 20; ++it) {
        SSNModelConfig cfg;
        const int base = 4 * (1 + rng.uniform_int(3));  // stem output channels 4/8/12
        cfg.stem.kernels = {7, 5, 5, 3, 3};
        cfg.stem.strides = {2, 1, 2, 1, 1};
        cfg.stem.channels = {4, 4, base, base, base};
        const int num_stages = 1 + rng.uniform_int(2);
        cfg.stages.clear();
        int c = base;
        for (int s = 0; s < num_stages; ++s) {
            cfg.stages.push_back({1 + rng.uniform_int(2), c, 2});
            c *= 2;
        }
        cfg.horizon = 1 + rng.uniform_int(15);
        cfg.raster_h = cfg.raster_w = 32 * (1 + rng.uniform_int(2));  // 32 or 64
        SSNModel model(cfg, 7 + it);
        Rng drng(100 + it);
        Tensor raster =
            Tensor::uniform(drng, {5, cfg.raster_h, cfg.raster_w}, 0.0, 1.0);
        NoGradGuard no_grad;

        // stem divides by 4, blocks preserve, UCD halves
        Tensor x = model.stem_forward(raster);
        REQUIRE(x.shape() == Shape{base, cfg.raster_h / 4, cfg.raster_w / 4});
        for (std::size_t s = 0; s < model.stages().size(); ++s) {
            for (const auto& block : model.stages()[s]) {
                Tensor y = block.forward(x);
                REQUIRE(y.shape() == x.shape());
                x = y;
            }
            if (s + 1 < model.stages().size()) {
                Tensor y = model.ucds()[s].forward(x);
                REQUIRE(y.extent(1) == x.extent(1) / 2);
                REQUIRE(y.extent(2) == x.extent(2) / 2);
                x = y;
            }
        }
        REQUIRE(model.forward(raster).shape() == Shape{cfg.horizon, 3});
    }
}

TEST_CASE("config validation rejects malformed stems and stages") {
    SSNModelConfig increasing;
    increasing.stem.kernels = {3, 5, 5, 3, 3};
    REQUIRE_THROWS_AS(SSNModel(increasing, 7), std::invalid_argument);

    SSNModelConfig mismatched;
    mismatched.stages[0].channels = 64;  // stem ends at 32
    REQUIRE_THROWS_AS(SSNModel(mismatched, 7), std::invalid_argument);

    SSNModelConfig bad_heads;
    bad_heads.stages[0].heads = 5;
    REQUIRE_THROWS_AS(SSNModel(bad_heads, 7), std::invalid_argument);

    SSNModelConfig indivisible;
    indivisible.raster_h = 66;
    REQUIRE_THROWS_AS(SSNModel(indivisible, 7), std::invalid_argument);
}

TEST_CASE("extra residuals flag rewires the block") {
    SSNBlockConfig bc;
    bc.channels = 4;
    bc.heads = 2;
    Rng rng(91);
    SSNBlock plain = SSNBlock::create(bc, rng);
    SSNBlock extra = plain;
    extra.cfg.extra_residuals = true;
    Tensor x = Tensor::uniform(rng, {4, 4, 4}, -1.0, 1.0);
    Tensor a = plain.forward(x);
    Tensor b = extra.forward(x);
    double diff = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        diff = std::max(diff, std::abs(a.data()[i] - b.data()[i]));
    REQUIRE(diff > 1e-9);
}
