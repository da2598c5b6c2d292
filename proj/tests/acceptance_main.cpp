// Acceptance suite: every criterion runs end to end and prints exactly one
// pass/fail line. Exit code is the number of failed criteria.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "ssn/baselines.hpp"
#include "ssn/cli_app.hpp"
#include "ssn/closed_loop.hpp"
#include "ssn/gradcheck_suite.hpp"
#include "ssn/model_zoo.hpp"
#include "ssn/ssn_model.hpp"
#include "ssn/trainer.hpp"
#include "ssn/world.hpp"

using namespace ssn;
namespace fs = std::filesystem;

namespace {

struct Check {
    bool pass = true;
    std::string detail;

    void require(bool condition, const std::string& message) {
        if (!condition && pass) {
            pass = false;
            detail = message;
        }
    }
    void note(const std::string& message) {
        if (pass) detail = message;
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / "ssn_acceptance" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

// --------------------------------------------------------------------------
// 1. Gradient suite: every layer and all full models under finite differences.
// --------------------------------------------------------------------------
Check criterion_gradients() {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    std::ostringstream log;
    const bool ok = run_gradcheck_suite(log, /*quick=*/false);
    const double wall = seconds_since(t0);
    c.require(ok, "gradient check failures:\n" + log.str());
    c.require(wall < 120.0, "suite took " + fmt(wall) + "s, budget 120s");
    c.note("all checks < 1e-4 rel. err in " + fmt(wall) + "s");
    return c;
}

// --------------------------------------------------------------------------
// 2. Equation fidelity: the residual sits on IRU alone, and the conv units
//    collapse to the identity under identity weights.
// --------------------------------------------------------------------------
Check criterion_equation_fidelity() {
    Check c;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        SSNBlockConfig bc;
        bc.channels = 8;
        bc.heads = 2;
        Rng rng(seed);
        SSNBlock block = SSNBlock::create(bc, rng);
        block.zero_iru();
        Tensor x = Tensor::uniform(rng, {8, 4, 4}, -1.0, 1.0);
        Tensor b_only = block.fmhsa_forward(block.rru_forward(x));
        Tensor full = block.forward(x);
        for (std::int64_t i = 0; i < x.numel(); ++i)
            c.require(full.data()[i] == b_only.data()[i],
                      "zero-IRU block deviates from FMHSA(RRU(x)) at element " +
                          std::to_string(i));
    }
    SSNBlockConfig idc;
    idc.channels = 3;
    idc.heads = 1;
    idc.use_activations = false;
    Rng rng(4);
    SSNBlock ident = SSNBlock::create(idc, rng);
    ident.rru_conv1.set_identity();
    ident.rru_conv2.set_identity();
    ident.iru_conv_a.set_identity();
    ident.iru_linear.set_identity();
    ident.iru_conv_b.set_identity();
    Tensor x = Tensor::uniform(rng, {3, 6, 6}, -1.0, 1.0);
    Tensor rru = ident.rru_forward(x);
    Tensor iru = ident.iru_forward(x);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        c.require(rru.data()[i] == x.data()[i], "identity RRU is not the identity");
        c.require(iru.data()[i] == x.data()[i], "identity IRU is not the identity");
    }
    c.note("residual identity exact; identity-weight RRU/IRU reproduce inputs");
    return c;
}

// --------------------------------------------------------------------------
// 3. Shape ledger over random valid configurations.
// --------------------------------------------------------------------------
Check criterion_shapes() {
    Check c;
    Rng rng(31);
    int configs = 0;
    for (int it = 0; it < 20; ++it, ++configs) {
        SSNModelConfig cfg;
        const int base = 4 * (1 + rng.uniform_int(3));
        cfg.stem.channels = {4, 4, base, base, base};
        const int num_stages = 1 + rng.uniform_int(2);
        cfg.stages.clear();
        int ch = base;
        for (int s = 0; s < num_stages; ++s) {
            cfg.stages.push_back({1 + rng.uniform_int(2), ch, 2});
            ch *= 2;
        }
        cfg.horizon = 1 + rng.uniform_int(15);
        cfg.raster_h = cfg.raster_w = 32 * (1 + rng.uniform_int(2));
        SSNModel model(cfg, 100 + static_cast<std::uint64_t>(it));
        Rng drng(200 + it);
        Tensor raster = Tensor::uniform(drng, {5, cfg.raster_h, cfg.raster_w}, 0.0, 1.0);
        NoGradGuard no_grad;
        Tensor x = model.stem_forward(raster);
        c.require(x.extent(1) == cfg.raster_h / 4 && x.extent(2) == cfg.raster_w / 4,
                  "stem does not divide resolution by 4");
        for (std::size_t s = 0; s < model.stages().size(); ++s) {
            for (const SSNBlock& block : model.stages()[s]) {
                Tensor y = block.forward(x);
                c.require(y.shape() == x.shape(), "SSN block changed its shape");
                x = y;
            }
            if (s + 1 < model.stages().size()) {
                Tensor y = model.ucds()[s].forward(x);
                c.require(y.extent(1) * 2 == x.extent(1) && y.extent(2) * 2 == x.extent(2),
                          "UCD did not halve the resolution");
                x = y;
            }
        }
        c.require(model.forward(raster).shape() == Shape{cfg.horizon, 3},
                  "model head shape mismatch");
    }
    {
        SSNModel desk(SSNModelConfig{}, 7);
        Rng drng(300);
        NoGradGuard no_grad;
        Tensor raster = Tensor::uniform(drng, {5, 64, 64}, 0.0, 1.0);
        c.require(desk.forward(raster).shape() == Shape{12, 3},
                  "desk model does not map 5x64x64 to 12x3");
    }
    c.note(std::to_string(configs) + " random configs + desk config verified");
    return c;
}

// --------------------------------------------------------------------------
// 4. Oracle equivalence: conv vs direct loops (exact), reduced attention vs
//    full attention, OBB test vs point sampling.
// --------------------------------------------------------------------------
Check criterion_oracles() {
    Check c;
    Rng rng(41);
    for (int it = 0; it < 50; ++it) {
        const int cin = 1 + rng.uniform_int(3);
        const int cout = 1 + rng.uniform_int(4);
        const int k = 1 + 2 * rng.uniform_int(2);
        const int h = k + rng.uniform_int(6);
        const int w_ext = k + rng.uniform_int(6);
        const int stride = 1 + rng.uniform_int(2);
        const int pad = rng.uniform_int(2);
        Tensor x = Tensor::uniform(rng, {cin, h, w_ext}, -1.0, 1.0);
        Tensor w = Tensor::uniform(rng, {cout, cin, k, k}, -1.0, 1.0);
        Tensor b = Tensor::uniform(rng, {cout}, -1.0, 1.0);
        Tensor ours = conv2d(x, w, b, stride, pad);
        Tensor ref = oracle::conv2d_naive(x, w, b, stride, pad);
        for (std::int64_t i = 0; i < ours.numel(); ++i)
            c.require(ours.data()[i] == ref.data()[i],
                      "conv2d differs from the direct-loop oracle (case " + std::to_string(it) +
                          ")");
    }
    for (std::uint64_t seed : {42ull, 43ull}) {
        SSNBlockConfig bc;
        bc.channels = 6;
        bc.heads = 2;
        bc.reduction_ratio = 1;
        bc.use_layernorm = false;
        Rng brng(seed);
        SSNBlock block = SSNBlock::create(bc, brng);
        Tensor x = Tensor::uniform(brng, {6, 4, 4}, -1.0, 1.0);
        Tensor ours = block.fmhsa_forward(x);
        Tensor ref = oracle::fmhsa_naive(block, x);
        for (std::int64_t i = 0; i < ours.numel(); ++i)
            c.require(std::abs(ours.data()[i] - ref.data()[i]) <= 1e-9,
                      "FMHSA with unit reduction deviates from full attention by more than 1e-9");
    }
    Rng obb_rng(44);
    int checked = 0;
    const double step = 0.02;
    for (int it = 0; it < 1300 && checked < 1100; ++it) {
        auto random_box = [&] {
            OrientedBox box;
            box.center = {obb_rng.uniform(-4.0, 4.0), obb_rng.uniform(-4.0, 4.0)};
            box.yaw = obb_rng.uniform(-kPi, kPi);
            box.half_length = obb_rng.uniform(0.3, 2.0);
            box.half_width = obb_rng.uniform(0.2, 1.5);
            return box;
        };
        OrientedBox a = random_box();
        OrientedBox b = random_box();
        const bool hit =
            oracle::obb_sample_hit(a, b, step, 0.0) || oracle::obb_sample_hit(b, a, step, 0.0);
        if (hit) {
            c.require(obb_intersect(a, b), "OBB test missed a sampled intersection");
            ++checked;
            continue;
        }
        if (oracle::obb_sample_hit(a, b, step, 2.0 * step) ||
            oracle::obb_sample_hit(b, a, step, 2.0 * step))
            continue;  // margin below sampling resolution
        c.require(!obb_intersect(a, b), "OBB test claimed intersection beyond sampling margin");
        ++checked;
    }
    c.require(checked >= 1000, "only " + std::to_string(checked) + " conclusive OBB pairs");
    c.note("conv exact on 50 cases; attention <= 1e-9; " + std::to_string(checked) +
           " OBB pairs agree");
    return c;
}

// --------------------------------------------------------------------------
// 5. Closed-loop oracle scenes with analytic contact frames.
// --------------------------------------------------------------------------
Check criterion_closed_loop() {
    Check c;
    RasterConfig cfg;
    for (std::uint64_t seed : {51ull, 52ull, 53ull}) {
        Scene scene = generate_scenario(ScenarioKind::free_drive, seed);
        ReplayPolicy policy;
        RolloutResult r = rollout_scene(policy, scene, cfg);
        c.require(r.frames_simulated == 250, "free scene did not simulate 250 frames");
        c.require(r.events.empty(), "replay on a free scene produced events");
    }
    for (std::uint64_t seed : {54ull, 55ull, 56ull}) {
        Scene scene = generate_scenario(ScenarioKind::lead_brake, seed);
        const double x1 = scene.frames[1].ego.centroid.x;
        const double vx = scene.frames[1].ego.velocity.x;
        const double sum_half =
            scene.frames[1].ego.length / 2.0 + scene.frames[1].agents[0].length / 2.0;
        int expected = -1;
        for (std::size_t k = 2; k < scene.frames.size(); ++k) {
            const double ego_x = x1 + vx * kFrameDt * (static_cast<double>(k) - 1.0);
            if (scene.frames[k].agents[0].centroid.x - ego_x <= sum_half) {
                expected = static_cast<int>(k);
                break;
            }
        }
        ConstantVelocityPolicy policy;
        RolloutResult r = rollout_scene(policy, scene, cfg);
        c.require(r.events.size() == 1, "lead-brake: expected exactly one event, got " +
                                            std::to_string(r.events.size()));
        if (r.events.size() == 1) {
            c.require(r.events[0].cls == CollisionClass::front,
                      "lead-brake event not classified Front");
            c.require(r.events[0].frame_index == expected,
                      "lead-brake contact frame " + std::to_string(r.events[0].frame_index) +
                          " != analytic " + std::to_string(expected));
            // analytic bearing: same-lane pursuit, ego yaw 0, contact dead ahead
            const double ego_x =
                x1 + vx * kFrameDt * (static_cast<double>(expected) - 1.0);
            const double analytic_bearing = std::atan2(
                scene.frames[static_cast<std::size_t>(expected)].agents[0].centroid.y,
                scene.frames[static_cast<std::size_t>(expected)].agents[0].centroid.x - ego_x);
            c.require(std::abs(r.events[0].contact_bearing - analytic_bearing) < 1e-6,
                      "lead-brake bearing " + fmt(r.events[0].contact_bearing) +
                          " != analytic " + fmt(analytic_bearing));
            c.require(classify_collision(analytic_bearing) == CollisionClass::front,
                      "analytic lead-brake bearing does not classify Front");
        }
    }
    for (std::uint64_t seed : {57ull, 58ull, 59ull}) {
        Scene scene = generate_scenario(ScenarioKind::crossing, seed);
        const AgentState parked = scene.frames[1].ego;
        int expected = -1;
        for (std::size_t k = 2; k < scene.frames.size(); ++k) {
            const AgentState& crosser = scene.frames[k].agents[0];
            if (std::abs(crosser.centroid.x - parked.centroid.x) <=
                    parked.length / 2.0 + crosser.width / 2.0 &&
                std::abs(crosser.centroid.y - parked.centroid.y) <=
                    parked.width / 2.0 + crosser.length / 2.0) {
                expected = static_cast<int>(k);
                break;
            }
        }
        StationaryPolicy policy;
        RolloutResult r = rollout_scene(policy, scene, cfg);
        c.require(r.events.size() == 1, "crossing: expected exactly one event, got " +
                                            std::to_string(r.events.size()));
        if (r.events.size() == 1) {
            c.require(r.events[0].cls == CollisionClass::side,
                      "crossing event not classified Side");
            c.require(r.events[0].frame_index == expected,
                      "crossing contact frame " + std::to_string(r.events[0].frame_index) +
                          " != analytic " + std::to_string(expected));
            // parked ego keeps its frame-1 pose (yaw 0), so the bearing is the
            // crosser's offset angle at the contact frame
            const AgentState& crosser =
                scene.frames[static_cast<std::size_t>(expected)].agents[0];
            const double analytic_bearing =
                std::atan2(crosser.centroid.y - parked.centroid.y,
                           crosser.centroid.x - parked.centroid.x);
            c.require(std::abs(r.events[0].contact_bearing - analytic_bearing) < 1e-9,
                      "crossing bearing " + fmt(r.events[0].contact_bearing) + " != analytic " +
                          fmt(analytic_bearing));
            c.require(classify_collision(analytic_bearing) == CollisionClass::side,
                      "analytic crossing bearing does not classify Side");
        }
    }
    c.note("replay clean; Front and Side events land on the analytic frames");
    return c;
}

// --------------------------------------------------------------------------
// 6. Metric arithmetic, including the published headline total.
// --------------------------------------------------------------------------
Check criterion_metrics() {
    Check c;
    std::vector<CollisionEvent> three(3);
    for (auto& e : three) e.cls = CollisionClass::front;
    MetricsReport r = aggregate_metrics(three, 1500);
    c.require(r.front_rate == 20.0, "3 events / 1500 frames should rate 20.0");

    std::vector<CollisionEvent> headline;
    auto push = [&](CollisionClass cls, int n) {
        for (int i = 0; i < n; ++i) {
            CollisionEvent e;
            e.cls = cls;
            headline.push_back(e);
        }
    };
    push(CollisionClass::front, 26);
    push(CollisionClass::side, 133);
    push(CollisionClass::rear, 35);
    MetricsReport h = aggregate_metrics(headline, 100000);
    c.require(std::abs(h.front_rate - 2.6) < 1e-12 && std::abs(h.side_rate - 13.3) < 1e-12 &&
                  std::abs(h.rear_rate - 3.5) < 1e-12,
              "headline per-class rates are off");
    c.require(std::abs(h.total_rate - 19.4) < 1e-9, "rates 2.6+13.3+3.5 must total 19.4");
    c.require(metrics_csv_row("ssn", h) == "ssn,2.6,13.3,3.5,19.4,100000",
              "CSV formatting of the headline row is off");

    MetricsReport zero = aggregate_metrics({}, 777);
    c.require(zero.total_rate == 0.0 && zero.front_rate == 0.0, "zero events must rate 0.0");
    c.note("20.0 per 10k, headline total 19.4, zero case all pass");
    return c;
}

// --------------------------------------------------------------------------
// 7. Overfit training on 8 scenes at the desk config.
// --------------------------------------------------------------------------
Check criterion_overfit() {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Scene> scenes = generate_mix(
        {{ScenarioKind::straight, 2},
         {ScenarioKind::lead_brake, 2},
         {ScenarioKind::crossing, 2},
         {ScenarioKind::free_drive, 2}},
        7, {60});
    SSNModel model(SSNModelConfig{}, 7);
    RasterConfig raster;
    TrainConfig tc;
    tc.epochs = 1000;
    tc.batch_size = 4;
    tc.seed = 7;
    tc.max_steps = 2000;
    tc.target_loss_ratio = 300.0;
    tc.optimizer.learning_rate = 1e-3;
    TrainResult r = train(model, scenes, raster, tc);
    const double wall = seconds_since(t0);
    const double initial = r.loss_curve.front();
    const double final_loss = r.loss_curve.back();
    c.require(r.steps <= 2000, "took more than 2000 steps");
    c.require(final_loss < initial / 100.0,
              "final loss " + fmt(final_loss) + " not below initial/100 = " +
                  fmt(initial / 100.0) + " after " + std::to_string(r.steps) + " steps");
    c.require(wall < 600.0, "overfit run took " + fmt(wall) + "s, budget 600s");

    // training loss trend: non-overlapping 50-step means must not increase
    std::vector<double> block_means;
    for (std::size_t start = 0; start + 50 <= r.loss_curve.size(); start += 50) {
        double mean = 0.0;
        for (std::size_t i = start; i < start + 50; ++i) mean += r.loss_curve[i];
        block_means.push_back(mean / 50.0);
    }
    for (std::size_t i = 1; i < block_means.size(); ++i)
        c.require(block_means[i] <= block_means[i - 1],
                  "50-step loss averages increased between blocks " + std::to_string(i - 1) +
                      " and " + std::to_string(i));
    c.note("loss " + fmt(initial) + " -> " + fmt(final_loss) + " in " +
           std::to_string(r.steps) + " steps, " + fmt(wall) + "s");
    return c;
}

// --------------------------------------------------------------------------
// 8. End-to-end smoke comparison on held-out scenes.
// --------------------------------------------------------------------------
Check criterion_smoke(int& trained_rows_out) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    const ScenarioParams frames{60};
    std::vector<Scene> train_scenes = generate_mix({{ScenarioKind::straight, 40},
                                                    {ScenarioKind::lead_brake, 40},
                                                    {ScenarioKind::cut_in, 40},
                                                    {ScenarioKind::crossing, 40},
                                                    {ScenarioKind::free_drive, 40}},
                                                   7, frames);
    std::vector<Scene> eval_scenes = generate_mix({{ScenarioKind::straight, 15},
                                                   {ScenarioKind::crossing, 15},
                                                   {ScenarioKind::free_drive, 10},
                                                   {ScenarioKind::lead_brake, 5},
                                                   {ScenarioKind::cut_in, 5}},
                                                  7 + 1000003, frames);
    RasterConfig raster;
    TrainConfig tc;
    tc.epochs = 100;
    tc.batch_size = 2;
    tc.seed = 7;
    tc.max_steps = 250;
    tc.optimizer.learning_rate = 2e-3;

    auto evaluate = [&](Model& model) {
        auto make_policy = [&] { return std::make_unique<ModelPolicy>(model, raster); };
        RolloutResult r = rollout_scenes(make_policy, eval_scenes, raster, 1);
        return aggregate_metrics(r.events, r.frames_simulated);
    };

    std::vector<std::pair<std::string, MetricsReport>> rows;

    SSNModel untrained(SSNModelConfig{}, 7);
    rows.emplace_back("ssn-untrained", evaluate(untrained));

    SSNModel ssn(SSNModelConfig{}, 7);
    train(ssn, train_scenes, raster, tc);
    rows.emplace_back("ssn", evaluate(ssn));

    TinyResidualModel residual(TinyResidualConfig{}, 7);
    train(residual, train_scenes, raster, tc);
    rows.emplace_back("tiny-residual", evaluate(residual));

    TinyViTModel vit(TinyViTConfig{}, 7);
    train(vit, train_scenes, raster, tc);
    rows.emplace_back("tiny-vit", evaluate(vit));

    const auto dir = scratch_dir("smoke");
    write_metrics_csv((dir / "report.csv").string(), rows);
    const std::string report = slurp(dir / "report.csv");
    for (const char* method : {"ssn,", "tiny-residual,", "tiny-vit,"})
        c.require(report.find(std::string("\n") + method) != std::string::npos,
                  std::string("report.csv is missing the ") + method + " row");

    double untrained_total = rows[0].second.total_rate;
    double trained_total = rows[1].second.total_rate;
    c.require(trained_total < untrained_total,
              "trained SSN total " + fmt(trained_total) + " not below untrained " +
                  fmt(untrained_total));
    trained_rows_out = static_cast<int>(rows.size());
    c.note("totals per 10k: ssn " + fmt(trained_total) + ", untrained " + fmt(untrained_total) +
           ", residual " + fmt(rows[2].second.total_rate) + ", vit " +
           fmt(rows[3].second.total_rate) + " (" + fmt(seconds_since(t0)) + "s)");
    return c;
}

// --------------------------------------------------------------------------
// 9. Determinism: the same experiment twice gives byte-identical outputs.
// --------------------------------------------------------------------------
Check criterion_determinism() {
    Check c;
    const auto dir = scratch_dir("determinism");
    std::vector<std::string> overrides = {
        "--set", "raster.height=32",
        "--set", "raster.width=32",
        "--set",
        "model={\"kind\":\"tiny-residual\",\"channels\":[4,8],\"blocks_per_stage\":1,"
        "\"horizon\":4}",
        "--set", "scenario_frames=16",
        "--set", "scenarios={\"straight\":1,\"crossing\":1}",
        "--set", "training.max_steps=3",
        "--set", "training.epochs=1"};
    auto run_experiment = [&]() -> bool {
        auto with = [&](std::vector<std::string> args) {
            args.insert(args.end(), overrides.begin(), overrides.end());
            return args;
        };
        if (cli::run(with({"gen-data", "--out", dir.string()})) != 0) return false;
        if (cli::run(with({"gen-data", "--out", dir.string(), "--split", "eval"})) != 0)
            return false;
        if (cli::run(with({"train", "--out", dir.string()})) != 0) return false;
        if (cli::run(with({"eval", "--out", dir.string()})) != 0) return false;
        return true;
    };

    c.require(run_experiment(), "first experiment failed");
    std::map<std::string, std::string> snapshot;
    const std::vector<std::string> files = {"dataset-train.jsonl", "dataset-eval.jsonl",
                                            "checkpoint.bin", "loss_curve.csv",
                                            "metrics-tiny-residual.csv", "resolved_config.json"};
    for (const std::string& f : files) snapshot[f] = slurp(dir / f);
    fs::remove_all(dir);
    fs::create_directories(dir);
    c.require(run_experiment(), "second experiment failed");
    for (const std::string& f : files)
        c.require(slurp(dir / f) == snapshot[f], f + " differs between identical runs");
    c.note("dataset, checkpoint, loss curve, metrics, resolved config all byte-identical");
    return c;
}

}  // anonymous namespace

int main() {
    struct Entry {
        int id;
        const char* name;
        std::function<Check()> fn;
    };
    int rows = 0;
    const std::vector<Entry> entries = {
        {1, "gradient suite", criterion_gradients},
        {2, "equation fidelity", criterion_equation_fidelity},
        {3, "shape ledger", criterion_shapes},
        {4, "oracle equivalence", criterion_oracles},
        {5, "closed-loop oracle scenes", criterion_closed_loop},
        {6, "metric arithmetic", criterion_metrics},
        {7, "overfit training", criterion_overfit},
        {8, "end-to-end smoke comparison", [&rows] { return criterion_smoke(rows); }},
        {9, "determinism", criterion_determinism},
    };

    int failures = 0;
    for (const Entry& entry : entries) {
        Check result;
        try {
            result = entry.fn();
        } catch (const std::exception& e) {
            result.pass = false;
            result.detail = std::string("exception: ") + e.what();
        }
        failures += result.pass ? 0 : 1;
        std::printf("[%s] criterion %d: %s — %s\n", result.pass ? "PASS" : "FAIL", entry.id,
                    entry.name, result.detail.c_str());
        std::fflush(stdout);
    }
    if (failures == 0)
        std::printf("acceptance: all %zu criteria passed\n", entries.size());
    else
        std::printf("acceptance: %d criteria FAILED\n", failures);
    return failures;
}
