#pragma once

// Frozen backbones the guidance scheduler later navigates: a conditional
// epsilon-predictor for diffusion and a conditional velocity field for flow
// matching. Both take [z, sinusoidal time embedding, condition embedding] and
// support the null condition.

#include "glab/nnkernel.hpp"
#include "glab/schedule.hpp"
#include "glab/toyworld.hpp"

namespace glab {

constexpr int kTimeEmbedDim = 8;
constexpr int kCondEmbedDim = 3;
constexpr int kPointDim = 2;

// How the network output realizes the noise prediction. Direct emits eps
// from the last layer as-is. X0 predicts the clean point (softly bounded)
// and converts, eps = (z - sqrt(ab)*x0) / sqrt(1-ab): off-distribution
// states then keep the true restoring pull toward the data manifold, which
// a saturating direct-eps net loses.
enum class EpsParam { Direct, X0 };

struct DenoiserNet {
    MlpNet net;  // input dim 2 + 8 + 3, output dim 2
    int t_embed_dim = kTimeEmbedDim;
    NoiseSchedule sched;
    EpsParam param = EpsParam::X0;
    double x0_bound = 6.0;  // soft bound: x0 = b * tanh(raw / b)
};

struct VelocityNet {
    MlpNet net;  // same input layout, continuous t in [0, 1]
    int t_embed_dim = kTimeEmbedDim;
};

struct BackboneTrainConfig {
    std::size_t dataset_size = 100000;
    int batch_size = 256;
    int steps = 20000;
    double lr = 1e-3;
    double weight_decay = 0.01;
    double p_uncond = 0.1;  // null-condition dropout
    std::vector<int> hidden_dims = {64, 64, 64};
    std::uint64_t seed = 0;
    EpsParam eps_param = EpsParam::X0;
    double x0_bound = 6.0;

    void validate() const {
        if (!(p_uncond >= 0.0 && p_uncond < 1.0)) throw ConfigError("p_uncond must be in [0, 1)");
        if (batch_size < 1 || steps < 0) throw ConfigError("bad batch size or step count");
        if (dataset_size < 1) throw ConfigError("dataset_size must be >= 1");
    }
};

inline std::vector<int> backbone_dims(const std::vector<int>& hidden) {
    std::vector<int> dims;
    dims.push_back(kPointDim + kTimeEmbedDim + kCondEmbedDim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(kPointDim);
    return dims;
}

inline Vec backbone_input(const Vec& z, double t_norm, const Vec& cond_embed) {
    Vec in;
    in.reserve(kPointDim + kTimeEmbedDim + kCondEmbedDim);
    in.insert(in.end(), z.begin(), z.end());
    Vec te = sinusoidal_embed(t_norm, kTimeEmbedDim);
    in.insert(in.end(), te.begin(), te.end());
    in.insert(in.end(), cond_embed.begin(), cond_embed.end());
    return in;
}

// --- diffusion epsilon predictor ---

// One evaluation of the noise predictor with everything needed to run VJPs
// through it afterwards.
struct EpsEval {
    Vec eps;
    Vec raw;       // network output before the eps parameterization
    GradTape tape;
    Vec z;
    double sqrt_ab = 1.0;
    double sqrt_1mab = 0.0;
};

inline EpsEval predict_eps_eval(const DenoiserNet& dnet, const Vec& z, int t, const Vec& cond_embed) {
    if (t < 1 || t > dnet.sched.T) throw std::out_of_range("predict_eps: t out of range");
    double t_norm = static_cast<double>(t) / static_cast<double>(dnet.sched.T);
    auto fwd = mlp_forward(dnet.net, backbone_input(z, t_norm, cond_embed));

    EpsEval ev;
    ev.raw = fwd.output;
    ev.tape = std::move(fwd.tape);
    ev.z = z;
    double ab = dnet.sched.alpha_bar(t);
    ev.sqrt_ab = std::sqrt(ab);
    ev.sqrt_1mab = std::sqrt(1.0 - ab);
    if (dnet.param == EpsParam::Direct) {
        ev.eps = ev.raw;
    } else {
        ev.eps.resize(ev.raw.size());
        for (std::size_t i = 0; i < ev.raw.size(); ++i) {
            double x0 = dnet.x0_bound * std::tanh(ev.raw[i] / dnet.x0_bound);
            ev.eps[i] = (z[i] - ev.sqrt_ab * x0) / ev.sqrt_1mab;
        }
    }
    return ev;
}

struct EpsVjp {
    MlpGrads param_grads;
    Vec z_grad;  // gradient w.r.t. the evaluation point z (length kPointDim)
};

// VJP of out_grad . eps through the parameterization and the network.
inline EpsVjp eps_vjp(const DenoiserNet& dnet, const EpsEval& ev, const Vec& out_grad) {
    Vec raw_grad(out_grad.size());
    Vec direct_z(kPointDim, 0.0);
    if (dnet.param == EpsParam::Direct) {
        raw_grad = out_grad;
    } else {
        for (std::size_t i = 0; i < out_grad.size(); ++i) {
            double th = std::tanh(ev.raw[i] / dnet.x0_bound);
            double dx0_draw = 1.0 - th * th;
            raw_grad[i] = out_grad[i] * (-ev.sqrt_ab / ev.sqrt_1mab) * dx0_draw;
            direct_z[i] = out_grad[i] / ev.sqrt_1mab;  // d eps_i / d z_i term
        }
    }
    auto bwd = mlp_backward(dnet.net, ev.tape, raw_grad);
    EpsVjp v;
    v.param_grads = std::move(bwd.grads);
    v.z_grad.assign(bwd.input_grad.begin(), bwd.input_grad.begin() + kPointDim);
    for (int i = 0; i < kPointDim; ++i) v.z_grad[i] += direct_z[i];
    return v;
}

inline Vec predict_eps_embed(const DenoiserNet& dnet, const Vec& z, int t, const Vec& cond_embed) {
    return predict_eps_eval(dnet, z, t, cond_embed).eps;
}

inline Vec predict_eps(const DenoiserNet& dnet, const Vec& z, int t, const ConditionValue& cond) {
    return predict_eps_embed(dnet, z, t, embed_condition(cond));
}

// Standard denoising objective with classifier-free condition dropout:
// minimize E ||eps_theta(z_t, t, c') - eps||^2, c' = null w.p. p_uncond.
inline DenoiserNet train_denoiser(const BackboneTrainConfig& config, const RingSpec& spec,
                                  const NoiseSchedule& sched, std::vector<double>* loss_log = nullptr) {
    config.validate();
    spec.validate();

    DenoiserNet dnet;
    dnet.sched = sched;
    dnet.net = init_params(backbone_dims(config.hidden_dims), config.seed);
    dnet.param = config.eps_param;
    dnet.x0_bound = config.x0_bound;
    if (config.steps == 0) return dnet;

    auto data = make_dataset(config.dataset_size, spec, config.seed + 1);
    Rng rng(config.seed + 2);
    AdamWState opt = AdamWState::init(dnet.net, config.lr, config.weight_decay);
    MlpGrads grads = MlpGrads::zeros_like(dnet.net);
    const Vec null_embed = embed_condition(ConditionValue::null());

    for (int step = 0; step < config.steps; ++step) {
        grads.zero();
        double loss = 0.0;
        for (int b = 0; b < config.batch_size; ++b) {
            const auto& sample = data[rng.uniform_index(data.size())];
            int t = rng.uniform_int(1, sched.T);
            Vec eps = rng.normal_vec(kPointDim);
            Vec z_t = add_noise(sample.point, t, eps, sched);
            bool drop = rng.uniform() < config.p_uncond;
            Vec cond_embed = drop ? null_embed : embed_condition(sample.cond);

            EpsEval ev = predict_eps_eval(dnet, z_t, t, cond_embed);
            Vec residual = sub(ev.eps, eps);
            loss += dot(residual, residual);
            grads.add(eps_vjp(dnet, ev, scaled(residual, 2.0)).param_grads);
        }
        loss /= config.batch_size;
        if (!std::isfinite(loss)) throw TrainError("train_denoiser: loss diverged", step);
        if (loss_log) loss_log->push_back(loss);
        grads.scale(1.0 / config.batch_size);
        adamw_step(dnet.net, grads, opt);
    }
    return dnet;
}

// --- flow-matching velocity field ---

inline Vec predict_velocity_embed(const VelocityNet& vnet, const Vec& x, double t, const Vec& cond_embed) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::out_of_range("predict_velocity: t outside [0, 1]");
    return mlp_forward(vnet.net, backbone_input(x, t, cond_embed)).output;
}

inline Vec predict_velocity(const VelocityNet& vnet, const Vec& x, double t, const ConditionValue& cond) {
    return predict_velocity_embed(vnet, x, t, embed_condition(cond));
}

// Regress the displacement x1 - x0 at interpolants x(t) = x0 + t*(x1 - x0),
// x0 standard normal, (x1, c) from the ring, with the same condition dropout.
inline VelocityNet train_velocity(const BackboneTrainConfig& config, const RingSpec& spec,
                                  std::vector<double>* loss_log = nullptr) {
    config.validate();
    spec.validate();

    VelocityNet vnet;
    vnet.net = init_params(backbone_dims(config.hidden_dims), config.seed);
    if (config.steps == 0) return vnet;

    auto data = make_dataset(config.dataset_size, spec, config.seed + 1);
    Rng rng(config.seed + 2);
    AdamWState opt = AdamWState::init(vnet.net, config.lr, config.weight_decay);
    MlpGrads grads = MlpGrads::zeros_like(vnet.net);
    const Vec null_embed = embed_condition(ConditionValue::null());

    for (int step = 0; step < config.steps; ++step) {
        grads.zero();
        double loss = 0.0;
        for (int b = 0; b < config.batch_size; ++b) {
            const auto& sample = data[rng.uniform_index(data.size())];
            Vec x0 = rng.normal_vec(kPointDim);
            double t = rng.uniform();
            Vec target = sub(sample.point, x0);
            Vec x_t = add(x0, scaled(target, t));
            bool drop = rng.uniform() < config.p_uncond;
            Vec cond_embed = drop ? null_embed : embed_condition(sample.cond);

            auto fwd = mlp_forward(vnet.net, backbone_input(x_t, t, cond_embed));
            Vec residual = sub(fwd.output, target);
            loss += dot(residual, residual);
            auto bwd = mlp_backward(vnet.net, fwd.tape, scaled(residual, 2.0));
            grads.add(bwd.grads);
        }
        loss /= config.batch_size;
        if (!std::isfinite(loss)) throw TrainError("train_velocity: loss diverged", step);
        if (loss_log) loss_log->push_back(loss);
        grads.scale(1.0 / config.batch_size);
        adamw_step(vnet.net, grads, opt);
    }
    return vnet;
}

}  // namespace glab
