#include <catch2/catch.hpp>

#include "glab/denoiser.hpp"

using namespace glab;

namespace {

DenoiserNet zero_weight_denoiser(Vec out_bias) {
    DenoiserNet d;
    d.sched = default_toy_schedule();
    d.net = init_params(backbone_dims({8}), 0);
    d.param = EpsParam::Direct;
    for (auto& w : d.net.weights) std::fill(w.begin(), w.end(), 0.0);
    d.net.biases.back() = std::move(out_bias);
    return d;
}

}  // namespace

TEST_CASE("predict_eps") {
    SECTION("pure function of inputs") {
        DenoiserNet d;
        d.sched = default_toy_schedule();
        d.net = init_params(backbone_dims({16}), 3);
        ConditionValue c = ConditionValue::of(1.0);
        Vec a = predict_eps(d, {0.3, -0.4}, 10, c);
        Vec b = predict_eps(d, {0.3, -0.4}, 10, c);
        REQUIRE(a == b);
    }
    SECTION("zero-weight direct net outputs its bias") {
        DenoiserNet d = zero_weight_denoiser({0.25, -0.75});
        REQUIRE(predict_eps(d, {1.0, 1.0}, 5, ConditionValue::of(2.0)) == Vec{0.25, -0.75});
        REQUIRE(predict_eps(d, {-3.0, 0.2}, 40, ConditionValue::null()) == Vec{0.25, -0.75});
    }
    SECTION("x0 parameterization keeps the restoring pull toward the data") {
        DenoiserNet d = zero_weight_denoiser({0.0, 0.0});
        d.param = EpsParam::X0;
        // zero net predicts x0 = 0, so eps = z / sqrt(1 - ab)
        int t = 25;
        double b = std::sqrt(1.0 - d.sched.alpha_bar(t));
        Vec e = predict_eps(d, {2.0, -1.0}, t, ConditionValue::of(1.0));
        REQUIRE(e[0] == Approx(2.0 / b).margin(1e-12));
        REQUIRE(e[1] == Approx(-1.0 / b).margin(1e-12));
        // and the conditional/unconditional difference cancels the z term
        Vec e2 = predict_eps(d, {2.0, -1.0}, t, ConditionValue::null());
        REQUIRE(e == e2);
    }
    SECTION("t out of range") {
        DenoiserNet d = zero_weight_denoiser({0.0, 0.0});
        REQUIRE_THROWS_AS(predict_eps(d, {0.0, 0.0}, 0, ConditionValue::null()), std::out_of_range);
        REQUIRE_THROWS_AS(predict_eps(d, {0.0, 0.0}, 51, ConditionValue::null()), std::out_of_range);
    }
}

TEST_CASE("train_denoiser contract") {
    SECTION("steps = 0 returns the initialized net") {
        BackboneTrainConfig cfg;
        cfg.steps = 0;
        cfg.seed = 9;
        cfg.hidden_dims = {8, 8};
        DenoiserNet d = train_denoiser(cfg, RingSpec{}, default_toy_schedule());
        MlpNet fresh = init_params(backbone_dims({8, 8}), 9);
        REQUIRE(d.net.weights == fresh.weights);
        REQUIRE(d.net.biases == fresh.biases);
    }
    SECTION("bad config rejected") {
        BackboneTrainConfig cfg;
        cfg.p_uncond = 1.0;
        REQUIRE_THROWS_AS(train_denoiser(cfg, RingSpec{}, default_toy_schedule()), ConfigError);
    }
    SECTION("training is deterministic per seed") {
        BackboneTrainConfig cfg;
        cfg.steps = 20;
        cfg.batch_size = 8;
        cfg.dataset_size = 200;
        cfg.hidden_dims = {8};
        cfg.seed = 4;
        DenoiserNet a = train_denoiser(cfg, RingSpec{}, default_toy_schedule());
        DenoiserNet b = train_denoiser(cfg, RingSpec{}, default_toy_schedule());
        REQUIRE(a.net.weights == b.net.weights);
    }
}

TEST_CASE("predict_velocity") {
    SECTION("t range enforced") {
        VelocityNet v;
        v.net = init_params(backbone_dims({8}), 1);
        REQUIRE_THROWS_AS(predict_velocity(v, {0.0, 0.0}, -0.01, ConditionValue::null()),
                          std::out_of_range);
        REQUIRE_THROWS_AS(predict_velocity(v, {0.0, 0.0}, 1.01, ConditionValue::null()),
                          std::out_of_range);
    }
    SECTION("purity and bias output") {
        VelocityNet v;
        v.net = init_params(backbone_dims({8}), 1);
        for (auto& w : v.net.weights) std::fill(w.begin(), w.end(), 0.0);
        v.net.biases.back() = {1.5, -0.5};
        Vec a = predict_velocity(v, {0.2, 0.3}, 0.4, ConditionValue::of(1.0));
        REQUIRE(a == Vec{1.5, -0.5});
        REQUIRE(predict_velocity(v, {9.0, -9.0}, 1.0, ConditionValue::null()) == Vec{1.5, -0.5});
    }
}

TEST_CASE("train_velocity contract") {
    SECTION("steps = 0 returns the initialized net") {
        BackboneTrainConfig cfg;
        cfg.steps = 0;
        cfg.seed = 2;
        cfg.hidden_dims = {8};
        VelocityNet v = train_velocity(cfg, RingSpec{});
        MlpNet fresh = init_params(backbone_dims({8}), 2);
        REQUIRE(v.net.weights == fresh.weights);
    }
    SECTION("loss decreases over a short run") {
        BackboneTrainConfig cfg;
        cfg.steps = 200;
        cfg.batch_size = 32;
        cfg.dataset_size = 2000;
        cfg.hidden_dims = {16, 16};
        cfg.seed = 5;
        std::vector<double> losses;
        train_velocity(cfg, RingSpec{}, &losses);
        double head = 0.0, tail = 0.0;
        for (int i = 0; i < 50; ++i) head += losses[i];
        for (int i = 150; i < 200; ++i) tail += losses[i];
        REQUIRE(tail < head);
    }
}
