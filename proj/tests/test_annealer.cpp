#include <catch2/catch.hpp>

#include "glab/annealer.hpp"
#include "helpers.hpp"

using namespace glab;

namespace {

DenoiserNet tiny_denoiser(std::uint64_t seed) {
    DenoiserNet d;
    d.sched = default_toy_schedule();
    d.net = init_params(backbone_dims({6}), seed);
    return d;
}

VelocityNet tiny_velocity(std::uint64_t seed) {
    VelocityNet v;
    v.net = init_params(backbone_dims({6}), seed);
    return v;
}

SchedulerSample fixed_sample(double lambda, int t, std::uint64_t seed) {
    Rng rng(seed);
    SchedulerSample s;
    ConditionValue c = sample_condition(rng);
    s.z0 = sample_ring(c.angle(), RingSpec{}, rng);
    s.t = t;
    s.eps = rng.normal_vec(2);
    s.lambda = lambda;
    s.cond_embed = embed_condition(c);
    return s;
}

FlowSample fixed_flow_sample(double lambda, double t, std::uint64_t seed) {
    Rng rng(seed);
    FlowSample s;
    ConditionValue c = sample_condition(rng);
    s.x1 = sample_ring(c.angle(), RingSpec{}, rng);
    s.x0 = rng.normal_vec(2);
    s.t = t;
    s.lambda = lambda;
    s.cond_embed = embed_condition(c);
    return s;
}

}  // namespace

TEST_CASE("scheduler_forward") {
    SECTION("constrained output lies in (0, 1)") {
        AblationFlags flags;
        flags.constrain_w = true;
        SchedulerNet s = make_scheduler_net(2.0, flags, 50, 3, {16});
        for (int t : {1, 10, 50})
            for (double dn : {0.0, 1.0, 10.0}) {
                double w = scheduler_forward(s, t, dn, 0.5);
                REQUIRE(w > 0.0);
                REQUIRE(w < 1.0);
            }
    }
    SECTION("zero-weight unconstrained net returns the output bias") {
        SchedulerNet s = make_scheduler_net(2.0, AblationFlags{}, 50, 3, {16});
        for (auto& w : s.net.weights) std::fill(w.begin(), w.end(), 0.0);
        for (auto& b : s.net.biases) std::fill(b.begin(), b.end(), 0.0);
        s.net.biases.back() = {0.37};
        REQUIRE(scheduler_forward(s, 17, 0.8, 0.2) == 0.37);
    }
    SECTION("lambda range enforced") {
        SchedulerNet s = make_scheduler_net(2.0, AblationFlags{}, 50, 3, {16});
        REQUIRE_THROWS_AS(scheduler_forward(s, 1, 0.0, -0.1), std::out_of_range);
        REQUIRE_THROWS_AS(scheduler_forward(s, 1, 0.0, 1.1), std::out_of_range);
        REQUIRE_THROWS_AS(scheduler_forward(s, 0, 0.0, 0.5), std::out_of_range);
    }
    SECTION("delta norm clamps at delta_max") {
        SchedulerNet s = make_scheduler_net(2.0, AblationFlags{}, 50, 9, {16});
        REQUIRE(scheduler_forward(s, 5, 2.0, 0.4) == scheduler_forward(s, 5, 100.0, 0.4));
    }
}

TEST_CASE("ablation structure") {
    SECTION("without delta input the output is exactly constant in delta") {
        AblationFlags flags;
        flags.use_delta_norm = false;
        SchedulerNet s = make_scheduler_net(2.0, flags, 50, 5, {16});
        double base = scheduler_forward(s, 7, 0.0, 0.3);
        for (double dn : {0.1, 0.5, 1.9, 50.0}) REQUIRE(scheduler_forward(s, 7, dn, 0.3) == base);
        // still varies with t
        REQUIRE(scheduler_forward(s, 40, 0.0, 0.3) != base);
    }
    SECTION("without t input the output is exactly constant in t") {
        AblationFlags flags;
        flags.use_t = false;
        SchedulerNet s = make_scheduler_net(2.0, flags, 50, 5, {16});
        double base = scheduler_forward(s, 1, 0.7, 0.3);
        for (int t : {2, 13, 50}) REQUIRE(scheduler_forward(s, t, 0.7, 0.3) == base);
    }
}

TEST_CASE("w_heatmap") {
    SchedulerNet s = make_scheduler_net(2.0, AblationFlags{}, 50, 8, {16});
    SECTION("1x1 grid is a single forward value") {
        auto m = w_heatmap(s, 0.5, {7}, {0.3});
        REQUIRE(m.size() == 1);
        REQUIRE(m[0].size() == 1);
        REQUIRE(m[0][0] == scheduler_forward(s, 7, 0.3, 0.5));
    }
    SECTION("32x32 grid is finite and well shaped") {
        std::vector<int> ts;
        Vec ds;
        for (int i = 0; i < 32; ++i) {
            ts.push_back(1 + i);
            ds.push_back(0.05 * i);
        }
        auto m = w_heatmap(s, 0.9, ts, ds);
        REQUIRE(m.size() == 32);
        for (const auto& row : m) {
            REQUIRE(row.size() == 32);
            for (double v : row) REQUIRE(std::isfinite(v));
        }
    }
    SECTION("empty grid rejected") {
        REQUIRE_THROWS_AS(w_heatmap(s, 0.5, {}, {0.1}), ConfigError);
    }
}

TEST_CASE("loss decomposition at the lambda extremes") {
    DenoiserNet d = tiny_denoiser(70);
    SchedulerNet s = make_scheduler_net(2.0, AblationFlags{}, d.sched.T, 4, {8, 8});

    SchedulerSample s0 = fixed_sample(0.0, 20, 100);
    LossTerms t0 = scheduler_sample_grad(s, d, s0, DeltaEvalTimestep::Prev, nullptr);
    REQUIRE(t0.combined == t0.l_eps);

    SchedulerSample s1 = fixed_sample(1.0, 20, 100);
    LossTerms t1 = scheduler_sample_grad(s, d, s1, DeltaEvalTimestep::Prev, nullptr);
    REQUIRE(t1.combined == t1.l_delta);

    SchedulerSample sm = fixed_sample(0.37, 20, 100);
    LossTerms tm = scheduler_sample_grad(s, d, sm, DeltaEvalTimestep::Prev, nullptr);
    REQUIRE(tm.combined ==
            Approx(0.37 * tm.l_delta + 0.63 * tm.l_eps).margin(1e-12));
}

TEST_CASE("full training-graph gradient matches finite differences") {
    const double h = 1e-5;
    const double rtol = 1e-3;
    const double atol = 1e-9;
    auto param = GENERATE(EpsParam::X0, EpsParam::Direct);
    DenoiserNet d = tiny_denoiser(71);
    d.param = param;
    SchedulerNet base = make_scheduler_net(2.0, AblationFlags{}, d.sched.T, 6, {8, 8});

    std::vector<SchedulerSample> samples = {fixed_sample(0.8, 30, 200), fixed_sample(0.25, 3, 201)};

    for (auto eval_mode : {DeltaEvalTimestep::Prev, DeltaEvalTimestep::Same}) {
        MlpGrads grads = MlpGrads::zeros_like(base.net);
        for (const auto& smp : samples)
            scheduler_sample_grad(base, d, smp, eval_mode, &grads);

        auto loss_of = [&](const SchedulerNet& sn) {
            double acc = 0.0;
            for (const auto& smp : samples)
                acc += scheduler_sample_grad(sn, d, smp, eval_mode, nullptr).combined;
            return acc;
        };

        int checked = 0;
        for (const auto& ref : testutil::all_params(base.net)) {
            SchedulerNet probe = base;
            double& p = testutil::param_at(probe.net, ref);
            double orig = p;
            p = orig + h;
            double up = loss_of(probe);
            p = orig - h;
            double down = loss_of(probe);
            double fd = (up - down) / (2.0 * h);
            double an = testutil::param_grad_at(grads, ref);
            if (std::abs(fd) < 5e-7 && std::abs(an) < 5e-7) continue;  // both negligible
            INFO("layer=" << ref.layer << " idx=" << ref.index << " fd=" << fd << " an=" << an);
            REQUIRE(testutil::close_rel(an, fd, rtol, atol));
            ++checked;
        }
        REQUIRE(checked > 50);
    }
}

TEST_CASE("flow training-graph gradient matches finite differences") {
    const double h = 1e-5;
    const double rtol = 1e-3;
    VelocityNet v = tiny_velocity(72);
    SchedulerNet base = make_scheduler_net(2.0, AblationFlags{}, 100, 6, {8, 8});
    const double dt = 0.01;

    std::vector<FlowSample> samples = {fixed_flow_sample(0.7, 0.4, 300),
                                       fixed_flow_sample(0.2, 0.9, 301),
                                       fixed_flow_sample(1.0, 0.1, 302)};

    for (auto target : {FlowEpsTarget::Guided, FlowEpsTarget::Conditional}) {
        MlpGrads grads = MlpGrads::zeros_like(base.net);
        for (const auto& smp : samples)
            flow_scheduler_sample_grad(base, v, smp, dt, target, &grads);

        auto loss_of = [&](const SchedulerNet& sn) {
            double acc = 0.0;
            for (const auto& smp : samples)
                acc += flow_scheduler_sample_grad(sn, v, smp, dt, target, nullptr).combined;
            return acc;
        };

        int checked = 0;
        for (const auto& ref : testutil::all_params(base.net)) {
            SchedulerNet probe = base;
            double& p = testutil::param_at(probe.net, ref);
            double orig = p;
            p = orig + h;
            double up = loss_of(probe);
            p = orig - h;
            double down = loss_of(probe);
            double fd = (up - down) / (2.0 * h);
            double an = testutil::param_grad_at(grads, ref);
            if (std::abs(fd) < 1e-7 && std::abs(an) < 1e-7) continue;
            INFO("layer=" << ref.layer << " idx=" << ref.index << " fd=" << fd << " an=" << an);
            REQUIRE(testutil::close_rel(an, fd, rtol, 1e-9));
            ++checked;
        }
        REQUIRE(checked > 50);
    }
}

TEST_CASE("gradient path through the frozen backbone input genuinely contributes") {
    DenoiserNet d = tiny_denoiser(73);
    SchedulerNet s = make_scheduler_net(2.0, AblationFlags{}, d.sched.T, 7, {8, 8});
    SchedulerSample smp = fixed_sample(0.9, 25, 400);

    MlpGrads with_path = MlpGrads::zeros_like(s.net);
    MlpGrads without_path = MlpGrads::zeros_like(s.net);
    scheduler_sample_grad(s, d, smp, DeltaEvalTimestep::Prev, &with_path, true);
    scheduler_sample_grad(s, d, smp, DeltaEvalTimestep::Prev, &without_path, false);

    double max_diff = 0.0;
    for (const auto& ref : testutil::all_params(s.net))
        max_diff = std::max(max_diff, std::abs(testutil::param_grad_at(with_path, ref) -
                                               testutil::param_grad_at(without_path, ref)));
    REQUIRE(max_diff > 1e-12);
}

TEST_CASE("scheduler_train_step and train_scheduler mechanics") {
    DenoiserNet d = tiny_denoiser(74);

    SECTION("steps = 0 returns the freshly initialized scheduler") {
        SchedulerTrainConfig cfg;
        cfg.steps = 0;
        cfg.seed = 12;
        cfg.hidden_dims = {8};
        cfg.delta_max_override = 1.5;
        SchedulerNet s = train_scheduler(cfg, d, RingSpec{});
        SchedulerNet fresh = make_scheduler_net(1.5, AblationFlags{}, d.sched.T, 12, {8});
        REQUIRE(s.net.weights == fresh.net.weights);
        REQUIRE(s.delta_max == 1.5);
    }
    SECTION("one train step updates the scheduler and reports mean terms") {
        SchedulerNet s = make_scheduler_net(1.0, AblationFlags{}, d.sched.T, 5, {8});
        AdamWState opt = AdamWState::init(s.net);
        std::vector<SchedulerSample> batch = {fixed_sample(0.5, 10, 500), fixed_sample(0.5, 40, 501)};
        MlpNet before = s.net;
        LossTerms terms = scheduler_train_step(s, d, batch, opt);
        REQUIRE(terms.combined == Approx(0.5 * terms.l_delta + 0.5 * terms.l_eps).margin(1e-12));
        REQUIRE(s.net.weights != before.weights);
        REQUIRE(opt.step_count == 1);
    }
    SECTION("frozen backbone is bit-identical after training") {
        SchedulerTrainConfig cfg;
        cfg.steps = 32;
        cfg.grad_accum = 4;
        cfg.seed = 3;
        cfg.hidden_dims = {8};
        cfg.delta_max_probes = 50;
        std::uint64_t before = param_hash(d.net);
        train_scheduler(cfg, d, RingSpec{});
        REQUIRE(param_hash(d.net) == before);
    }
    SECTION("lambda_fixed outside range rejected") {
        SchedulerTrainConfig cfg;
        cfg.lambda_fixed = 1.5;
        REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    }
}

TEST_CASE("flow loss decomposition at extremes") {
    VelocityNet v = tiny_velocity(75);
    SchedulerNet s = make_scheduler_net(2.0, AblationFlags{}, 100, 4, {8});
    FlowSample f0 = fixed_flow_sample(0.0, 0.5, 600);
    LossTerms t0 = flow_scheduler_sample_grad(s, v, f0, 0.01, FlowEpsTarget::Guided, nullptr);
    REQUIRE(t0.combined == t0.l_eps);

    FlowSample f1 = fixed_flow_sample(1.0, 0.5, 600);
    LossTerms t1 = flow_scheduler_sample_grad(s, v, f1, 0.01, FlowEpsTarget::Guided, nullptr);
    REQUIRE(t1.combined == t1.l_delta);
}

TEST_CASE("measure_delta_max is positive and deterministic") {
    DenoiserNet d = tiny_denoiser(76);
    double a = measure_delta_max(d, RingSpec{}, 500, 42);
    double b = measure_delta_max(d, RingSpec{}, 500, 42);
    REQUIRE(a == b);
    REQUIRE(a > 0.0);
}
