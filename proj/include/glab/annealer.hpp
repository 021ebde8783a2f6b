#pragma once

// Training for the guidance-scale scheduler. One training step performs a
// single guided denoise/renoise at a random timestep and scores the result
// with
//
//     L = lambda * ||delta_{t-1}||^2 + (1 - lambda) * ||eps - eps_hat||^2,
//
// where delta_{t-1} is re-evaluated at the renoised state. The backbone is
// frozen: gradients reach the scheduler parameters only through the scalar w,
// via eps_hat directly and via the backbone's input gradient at z_{t-1}.

#include <optional>

#include "glab/guidance.hpp"

namespace glab {

// Alg. eval point for delta_{t-1}: the consistent reading evaluates the
// frozen net at timestep t-1; Same preserves the literal subscript t.
enum class DeltaEvalTimestep { Prev, Same };

enum class FlowEpsTarget { Guided, Conditional };

struct SchedulerTrainConfig {
    int steps = 20000;  // micro-batch steps
    int batch_size = 2;
    int grad_accum = 8;  // effective batch 16
    double lr = 1e-3;
    double weight_decay = 0.01;
    PerturbConfig perturb;
    std::uint64_t seed = 0;
    std::optional<double> lambda_fixed;  // default: lambda ~ U[0, 1]
    DeltaEvalTimestep delta_eval = DeltaEvalTimestep::Prev;
    FlowEpsTarget flow_eps_target = FlowEpsTarget::Guided;
    AblationFlags ablation;
    std::vector<int> hidden_dims = {128, 128, 128};
    std::optional<double> delta_max_override;
    int delta_max_probes = 10000;
    int flow_steps_per_unit = 100;  // integration resolution: dt = 1/steps_per_unit

    void validate() const {
        if (steps < 0 || batch_size < 1 || grad_accum < 1) throw ConfigError("bad scheduler train config");
        perturb.validate();
        if (lambda_fixed && !(*lambda_fixed >= 0.0 && *lambda_fixed <= 1.0))
            throw ConfigError("lambda_fixed outside [0, 1]");
        if (flow_steps_per_unit < 1) throw ConfigError("flow_steps_per_unit must be >= 1");
    }
};

struct LossTerms {
    double l_delta = 0.0;
    double l_eps = 0.0;
    double combined = 0.0;

    void add(const LossTerms& o) {
        l_delta += o.l_delta;
        l_eps += o.l_eps;
        combined += o.combined;
    }
    void scale(double k) {
        l_delta *= k;
        l_eps *= k;
        combined *= k;
    }
};

// One fully materialized training draw; cond_embed is already perturbed.
struct SchedulerSample {
    Vec z0;
    int t = 1;
    Vec eps;
    double lambda = 0.0;
    Vec cond_embed;
};

namespace detail {

inline Vec input_slice_z(const Vec& input_grad) {
    return Vec(input_grad.begin(), input_grad.begin() + kPointDim);
}

}  // namespace detail

// Loss terms for one sample; when accum is non-null the gradient w.r.t. the
// scheduler parameters is added into it. include_backbone_input_path exists
// so tests can verify that the path through the frozen net's input gradient
// genuinely contributes.
inline LossTerms scheduler_sample_grad(const SchedulerNet& snet, const DenoiserNet& dnet,
                                       const SchedulerSample& s, DeltaEvalTimestep delta_eval,
                                       MlpGrads* accum, bool include_backbone_input_path = true) {
    const NoiseSchedule& sched = dnet.sched;
    if (s.t < 1 || s.t > sched.T) throw std::out_of_range("scheduler_sample_grad: t out of range");
    const Vec null_embed = embed_condition(ConditionValue::null());
    const double T = static_cast<double>(sched.T);

    // step at time t
    Vec z_t = add_noise(s.z0, s.t, s.eps, sched);
    Vec eps_c = predict_eps_embed(dnet, z_t, s.t, s.cond_embed);
    Vec eps_null = predict_eps_embed(dnet, z_t, s.t, null_embed);
    Vec delta_t = sub(eps_c, eps_null);
    double delta_norm = norm2(delta_t);

    auto w_fwd = scheduler_forward_tape(snet, s.t / T, delta_norm, s.lambda);
    double w = w_fwd.output[0];

    Vec eps_hat = cfg_combine(eps_null, eps_c, w);
    Vec z0t = denoise_estimate(z_t, eps_hat, s.t, sched);

    double ab_prev = sched.alpha_bar(s.t - 1);
    double ab = sched.alpha_bar(s.t);
    double a_prev = std::sqrt(ab_prev);        // sqrt(ab_{t-1})
    double b_prev = std::sqrt(1.0 - ab_prev);  // sqrt(1 - ab_{t-1})
    bool renoise_uncond = snet.ablation.use_cfgpp_renoise;
    const Vec& renoise_src = renoise_uncond ? eps_null : eps_hat;
    Vec z_prev = renoise(z0t, renoise_src, s.t - 1, sched);

    // step at time t-1
    int t_eval = delta_eval == DeltaEvalTimestep::Prev ? std::max(s.t - 1, 1) : s.t;
    EpsEval ev_c_prev = predict_eps_eval(dnet, z_prev, t_eval, s.cond_embed);
    EpsEval ev_n_prev = predict_eps_eval(dnet, z_prev, t_eval, null_embed);
    Vec delta_prev = sub(ev_c_prev.eps, ev_n_prev.eps);

    Vec eps_residual = sub(eps_hat, s.eps);
    LossTerms terms;
    terms.l_delta = dot(delta_prev, delta_prev);
    terms.l_eps = dot(eps_residual, eps_residual);
    terms.combined = s.lambda * terms.l_delta + (1.0 - s.lambda) * terms.l_eps;
    if (!std::isfinite(terms.combined))
        throw TrainError("scheduler loss diverged (t=" + std::to_string(s.t) +
                             ", |delta|=" + format_double(delta_norm) + ", w=" + format_double(w) + ")",
                         -1);
    if (!accum) return terms;

    // d z_{t-1} / d w = k * delta_t with k collecting the denoise/renoise
    // coefficients (the renoise term adds b_prev only in the eps_hat ablation)
    double k = -a_prev * std::sqrt(1.0 - ab) / std::sqrt(ab);
    if (!renoise_uncond) k += b_prev;

    double dL_dw = 0.0;
    if (s.lambda != 0.0 && include_backbone_input_path) {
        Vec gz_c = eps_vjp(dnet, ev_c_prev, scaled(delta_prev, 2.0)).z_grad;
        Vec gz_n = eps_vjp(dnet, ev_n_prev, scaled(delta_prev, -2.0)).z_grad;
        Vec g_z = add(gz_c, gz_n);  // dL_delta / dz_{t-1}
        dL_dw += s.lambda * k * dot(g_z, delta_t);
    }
    dL_dw += (1.0 - s.lambda) * 2.0 * dot(eps_residual, delta_t);

    auto snet_bwd = mlp_backward(snet.net, w_fwd.tape, {dL_dw});
    accum->add(snet_bwd.grads);
    return terms;
}

// 99.9th-percentile ||delta_t|| over random noised ring samples; this is the
// scheduler's input normalization constant.
inline double measure_delta_max(const DenoiserNet& dnet, const RingSpec& spec, int n_probes,
                                std::uint64_t seed, double percentile = 0.999) {
    if (n_probes < 1) throw ConfigError("measure_delta_max: need probes");
    Rng rng(seed);
    Vec norms;
    norms.reserve(n_probes);
    for (int i = 0; i < n_probes; ++i) {
        ConditionValue c = sample_condition(rng);
        Vec z0 = sample_ring(c.angle(), spec, rng);
        int t = rng.uniform_int(1, dnet.sched.T);
        Vec z_t = add_noise(z0, t, rng.normal_vec(kPointDim), dnet.sched);
        norms.push_back(compute_delta(dnet, z_t, t, c).norm);
    }
    std::sort(norms.begin(), norms.end());
    auto idx = static_cast<std::size_t>(percentile * (norms.size() - 1));
    double dm = norms[idx];
    return dm > 0.0 ? dm : 1.0;
}

inline SchedulerSample draw_scheduler_sample(const RingSpec& spec, const NoiseSchedule& sched,
                                             const SchedulerTrainConfig& cfg, Rng& rng) {
    SchedulerSample s;
    ConditionValue c = sample_condition(rng);
    s.z0 = sample_ring(c.angle(), spec, rng);
    s.t = rng.uniform_int(1, sched.T);
    s.eps = rng.normal_vec(kPointDim);
    s.lambda = cfg.lambda_fixed ? *cfg.lambda_fixed : rng.uniform();
    PerturbConfig p = cfg.perturb;
    p.enabled = p.enabled && cfg.ablation.use_perturbation;
    int t_sched = p.reverse_time ? sched.T - s.t : s.t;
    s.cond_embed = perturb_condition(embed_condition(c), t_sched, sched.T, p, rng);
    return s;
}

// One optimizer update over an effective batch: mean gradients, AdamW on the
// scheduler only. Returns mean loss terms.
inline LossTerms scheduler_train_step(SchedulerNet& snet, const DenoiserNet& dnet,
                                      const std::vector<SchedulerSample>& batch, AdamWState& opt,
                                      DeltaEvalTimestep delta_eval = DeltaEvalTimestep::Prev) {
    if (batch.empty()) throw ConfigError("scheduler_train_step: empty batch");
    MlpGrads grads = MlpGrads::zeros_like(snet.net);
    LossTerms mean;
    for (const auto& s : batch) mean.add(scheduler_sample_grad(snet, dnet, s, delta_eval, &grads));
    double inv = 1.0 / static_cast<double>(batch.size());
    mean.scale(inv);
    grads.scale(inv);
    adamw_step(snet.net, grads, opt);
    return mean;
}

// Full training loop with gradient accumulation. Data is drawn fresh from the
// ring each micro-step; the backbone is const throughout.
inline SchedulerNet train_scheduler(const SchedulerTrainConfig& config, const DenoiserNet& dnet,
                                    const RingSpec& spec, std::vector<double>* loss_log = nullptr) {
    config.validate();
    double delta_max = config.delta_max_override
                           ? *config.delta_max_override
                           : measure_delta_max(dnet, spec, config.delta_max_probes, config.seed + 101);
    SchedulerNet snet =
        make_scheduler_net(delta_max, config.ablation, dnet.sched.T, config.seed, config.hidden_dims);
    if (config.steps == 0) return snet;

    Rng rng(config.seed + 1);
    AdamWState opt = AdamWState::init(snet.net, config.lr, config.weight_decay);
    MlpGrads grads = MlpGrads::zeros_like(snet.net);
    int micro_in_accum = 0;

    for (int step = 0; step < config.steps; ++step) {
        LossTerms step_terms;
        for (int b = 0; b < config.batch_size; ++b) {
            SchedulerSample s = draw_scheduler_sample(spec, dnet.sched, config, rng);
            try {
                step_terms.add(scheduler_sample_grad(snet, dnet, s, config.delta_eval, &grads));
            } catch (const TrainError& e) {
                throw TrainError(e.what(), step);
            }
        }
        step_terms.scale(1.0 / config.batch_size);
        if (loss_log) loss_log->push_back(step_terms.combined);

        if (++micro_in_accum == config.grad_accum) {
            grads.scale(1.0 / (static_cast<double>(config.batch_size) * config.grad_accum));
            adamw_step(snet.net, grads, opt);
            grads.zero();
            micro_in_accum = 0;
        }
    }
    return snet;
}

// --- flow-matching variant ---

struct FlowSample {
    Vec x0;
    Vec x1;
    double t = 0.0;  // in [0, 1 - dt]
    double lambda = 0.0;
    Vec cond_embed;
};

// Same loss structure on the velocity field: one Euler step with the guided
// velocity, delta re-evaluated at the integrated point, and the eps-term
// matching the guided (default) or raw conditional velocity against the
// target displacement.
inline LossTerms flow_scheduler_sample_grad(const SchedulerNet& snet, const VelocityNet& vnet,
                                            const FlowSample& s, double dt, FlowEpsTarget eps_target,
                                            MlpGrads* accum, bool include_backbone_input_path = true) {
    const Vec null_embed = embed_condition(ConditionValue::null());
    Vec dx = sub(s.x1, s.x0);
    Vec x_t = add(s.x0, scaled(dx, s.t));

    Vec v_c = mlp_forward(vnet.net, backbone_input(x_t, s.t, s.cond_embed)).output;
    Vec v_n = mlp_forward(vnet.net, backbone_input(x_t, s.t, null_embed)).output;
    Vec delta_t = sub(v_c, v_n);
    double delta_norm = norm2(delta_t);

    auto w_fwd = scheduler_forward_tape(snet, s.t, delta_norm, s.lambda);
    double w = w_fwd.output[0];
    Vec v_hat = cfg_combine(v_n, v_c, w);

    double t_next = s.t + dt;
    if (t_next > 1.0) throw std::out_of_range("flow_scheduler_sample_grad: t + dt exceeds 1");
    Vec x_next = add(x_t, scaled(v_hat, dt));

    auto fwd_c_next = mlp_forward(vnet.net, backbone_input(x_next, t_next, s.cond_embed));
    auto fwd_n_next = mlp_forward(vnet.net, backbone_input(x_next, t_next, null_embed));
    Vec delta_next = sub(fwd_c_next.output, fwd_n_next.output);

    Vec eps_residual =
        eps_target == FlowEpsTarget::Guided ? sub(v_hat, dx) : sub(v_c, dx);
    LossTerms terms;
    terms.l_delta = dot(delta_next, delta_next);
    terms.l_eps = dot(eps_residual, eps_residual);
    terms.combined = s.lambda * terms.l_delta + (1.0 - s.lambda) * terms.l_eps;
    if (!std::isfinite(terms.combined)) throw TrainError("flow scheduler loss diverged", -1);
    if (!accum) return terms;

    double dL_dw = 0.0;
    if (s.lambda != 0.0 && include_backbone_input_path) {
        Vec g2 = scaled(delta_next, 2.0);
        Vec gx_c = detail::input_slice_z(mlp_backward(vnet.net, fwd_c_next.tape, g2).input_grad);
        Vec gx_n = detail::input_slice_z(
            mlp_backward(vnet.net, fwd_n_next.tape, scaled(delta_next, -2.0)).input_grad);
        Vec g_x = add(gx_c, gx_n);
        dL_dw += s.lambda * dt * dot(g_x, delta_t);  // dx_next/dw = dt * delta_t
    }
    if (eps_target == FlowEpsTarget::Guided)
        dL_dw += (1.0 - s.lambda) * 2.0 * dot(eps_residual, delta_t);

    auto snet_bwd = mlp_backward(snet.net, w_fwd.tape, {dL_dw});
    accum->add(snet_bwd.grads);
    return terms;
}

inline double measure_flow_delta_max(const VelocityNet& vnet, const RingSpec& spec, int n_probes,
                                     std::uint64_t seed, double percentile = 0.999) {
    if (n_probes < 1) throw ConfigError("measure_flow_delta_max: need probes");
    Rng rng(seed);
    const Vec null_embed = embed_condition(ConditionValue::null());
    Vec norms;
    norms.reserve(n_probes);
    for (int i = 0; i < n_probes; ++i) {
        ConditionValue c = sample_condition(rng);
        Vec x1 = sample_ring(c.angle(), spec, rng);
        Vec x0 = rng.normal_vec(kPointDim);
        double t = rng.uniform();
        Vec x_t = add(x0, scaled(sub(x1, x0), t));
        Vec v_c = predict_velocity_embed(vnet, x_t, t, embed_condition(c));
        Vec v_n = predict_velocity_embed(vnet, x_t, t, null_embed);
        norms.push_back(norm2(sub(v_c, v_n)));
    }
    std::sort(norms.begin(), norms.end());
    auto idx = static_cast<std::size_t>(percentile * (norms.size() - 1));
    double dm = norms[idx];
    return dm > 0.0 ? dm : 1.0;
}

inline FlowSample draw_flow_sample(const RingSpec& spec, const SchedulerTrainConfig& cfg, double dt,
                                   Rng& rng) {
    FlowSample s;
    ConditionValue c = sample_condition(rng);
    s.x1 = sample_ring(c.angle(), spec, rng);
    s.x0 = rng.normal_vec(kPointDim);
    s.t = rng.uniform(0.0, 1.0 - dt);
    s.lambda = cfg.lambda_fixed ? *cfg.lambda_fixed : rng.uniform();
    PerturbConfig p = cfg.perturb;
    p.enabled = p.enabled && cfg.ablation.use_perturbation;
    // g = t keys corruption to the noisy end (t = 0); reverse_time flips it
    // onto the nearly-integrated late steps
    double g = p.reverse_time ? 1.0 - s.t : s.t;
    s.cond_embed = perturb_condition_g(embed_condition(c), g, p, rng);
    return s;
}

inline LossTerms flow_scheduler_train_step(SchedulerNet& snet, const VelocityNet& vnet,
                                           const std::vector<FlowSample>& batch, double dt,
                                           AdamWState& opt,
                                           FlowEpsTarget eps_target = FlowEpsTarget::Guided) {
    if (batch.empty()) throw ConfigError("flow_scheduler_train_step: empty batch");
    MlpGrads grads = MlpGrads::zeros_like(snet.net);
    LossTerms mean;
    for (const auto& s : batch)
        mean.add(flow_scheduler_sample_grad(snet, vnet, s, dt, eps_target, &grads));
    double inv = 1.0 / static_cast<double>(batch.size());
    mean.scale(inv);
    grads.scale(inv);
    adamw_step(snet.net, grads, opt);
    return mean;
}

inline SchedulerNet train_flow_scheduler(const SchedulerTrainConfig& config, const VelocityNet& vnet,
                                         const RingSpec& spec, std::vector<double>* loss_log = nullptr) {
    config.validate();
    double dt = 1.0 / static_cast<double>(config.flow_steps_per_unit);
    double delta_max =
        config.delta_max_override
            ? *config.delta_max_override
            : measure_flow_delta_max(vnet, spec, config.delta_max_probes, config.seed + 101);
    SchedulerNet snet = make_scheduler_net(delta_max, config.ablation, config.flow_steps_per_unit,
                                           config.seed, config.hidden_dims);
    if (config.steps == 0) return snet;

    Rng rng(config.seed + 1);
    AdamWState opt = AdamWState::init(snet.net, config.lr, config.weight_decay);
    MlpGrads grads = MlpGrads::zeros_like(snet.net);
    int micro_in_accum = 0;

    for (int step = 0; step < config.steps; ++step) {
        LossTerms step_terms;
        for (int b = 0; b < config.batch_size; ++b) {
            FlowSample s = draw_flow_sample(spec, config, dt, rng);
            try {
                step_terms.add(
                    flow_scheduler_sample_grad(snet, vnet, s, dt, config.flow_eps_target, &grads));
            } catch (const TrainError& e) {
                throw TrainError(e.what(), step);
            }
        }
        step_terms.scale(1.0 / config.batch_size);
        if (loss_log) loss_log->push_back(step_terms.combined);

        if (++micro_in_accum == config.grad_accum) {
            grads.scale(1.0 / (static_cast<double>(config.batch_size) * config.grad_accum));
            adamw_step(snet.net, grads, opt);
            grads.zero();
            micro_in_accum = 0;
        }
    }
    return snet;
}

}  // namespace glab
