#pragma once

// Guided sampling. The three modes share one loop; they differ in where the
// guidance scale comes from and which prediction renoises the clean estimate:
//plain CFG denoises and renoises with the guided eps_hat, CFG++ and the
// annealing scheduler renoise with the unconditional prediction.

#include "glab/denoiser.hpp"
#include "glab/scheduler_net.hpp"

namespace glab {

enum class GuidanceKind { Cfg, CfgPP, Annealing };

inline const char* to_string(GuidanceKind k) {
    switch (k) {
        case GuidanceKind::Cfg: return "cfg";
        case GuidanceKind::CfgPP: return "cfgpp";
        default: return "anneal";
    }
}

struct GuidanceMode {
    GuidanceKind kind = GuidanceKind::Cfg;
    double w = 1.0;
    double lambda = 0.0;
    const SchedulerNet* scheduler = nullptr;
    bool strict_cfgpp_range = false;

    static GuidanceMode cfg(double w) { return {GuidanceKind::Cfg, w, 0.0, nullptr, false}; }
    static GuidanceMode cfgpp(double w, bool strict = false) {
        if (strict && !(w >= 0.0 && w <= 1.0))
            throw ConfigError("cfgpp: strict range requires w in [0, 1]");
        return {GuidanceKind::CfgPP, w, 0.0, nullptr, strict};
    }
    static GuidanceMode annealing(const SchedulerNet& s, double lambda) {
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("annealing: lambda outside [0, 1]");
        return {GuidanceKind::Annealing, 0.0, lambda, &s, false};
    }
};

enum class SamplerKind { Ddim, Euler, EulerAncestral };

inline const char* to_string(SamplerKind k) {
    switch (k) {
        case SamplerKind::Ddim: return "ddim";
        case SamplerKind::Euler: return "euler";
        default: return "euler-a";
    }
}

inline SamplerKind sampler_from_string(const std::string& s) {
    if (s == "ddim") return SamplerKind::Ddim;
    if (s == "euler") return SamplerKind::Euler;
    if (s == "euler-a") return SamplerKind::EulerAncestral;
    throw ConfigError("unknown sampler: '" + s + "'");
}

struct DeltaResult {
    Vec delta;
    Vec eps_c;
    Vec eps_null;
    double norm = 0.0;
};

inline DeltaResult compute_delta_embed(const DenoiserNet& dnet, const Vec& z, int t, const Vec& cond_embed) {
    DeltaResult r;
    r.eps_c = predict_eps_embed(dnet, z, t, cond_embed);
    r.eps_null = predict_eps_embed(dnet, z, t, embed_condition(ConditionValue::null()));
    r.delta = sub(r.eps_c, r.eps_null);
    r.norm = norm2(r.delta);
    return r;
}

inline DeltaResult compute_delta(const DenoiserNet& dnet, const Vec& z, int t, const ConditionValue& cond) {
    if (cond.is_null()) throw ConfigError("compute_delta: condition must be non-null");
    return compute_delta_embed(dnet, z, t, embed_condition(cond));
}

// eps_null + w * (eps_c - eps_null)
inline Vec cfg_combine(const Vec& eps_null, const Vec& eps_c, double w) {
    if (eps_null.size() != eps_c.size()) throw ShapeError("cfg_combine: size mismatch");
    Vec out(eps_null.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = eps_null[i] + w * (eps_c[i] - eps_null[i]);
    return out;
}

// --- training-time condition perturbation ---

struct PerturbConfig {
    double s = 0.025;   // noise scale
    double psi = 1.0;   // rescale mix factor
    bool enabled = true;
    // Corruption placement along the trajectory. false keeps g(t) = 1 - t/T
    // (heavy corruption at the noisy end); true feeds the reversed index so
    // corruption concentrates at the late, nearly-clean steps instead.
    bool reverse_time = false;

    void validate() const {
        if (!(s >= 0.0)) throw ConfigError("perturb: s must be >= 0");
        if (!(psi >= 0.0 && psi <= 1.0)) throw ConfigError("perturb: psi must be in [0, 1]");
    }
};

namespace detail {

inline double vec_mean(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// sample standard deviation (n - 1 divisor)
inline double vec_std(const Vec& v, double mean) {
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace detail

// Core corruption rule on an embedding, with g the signal-keep factor:
// c_hat = sqrt(g) * c + s * sqrt(1 - g) * n, then CADS-style mean/std
// rescaling mixed by psi. g = 1 (or s = 0, or disabled) returns c unchanged.
inline Vec perturb_condition_g(const Vec& c_embed, double g, const PerturbConfig& cfg, Rng& rng) {
    if (c_embed.size() < 2) throw ConfigError("perturb_condition: embedding needs >= 2 entries");
    if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("perturb_condition: g outside [0, 1]");
    if (!cfg.enabled || cfg.s == 0.0 || g == 1.0) return c_embed;

    double a = std::sqrt(g);
    double b = cfg.s * std::sqrt(1.0 - g);
    Vec c_hat(c_embed.size());
    for (std::size_t i = 0; i < c_embed.size(); ++i) c_hat[i] = a * c_embed[i] + b * rng.normal();

    double mean_hat = detail::vec_mean(c_hat);
    double std_hat = detail::vec_std(c_hat, mean_hat);
    if (std_hat < 1e-12) return c_hat;

    double mean_c = detail::vec_mean(c_embed);
    double std_c = detail::vec_std(c_embed, mean_c);
    Vec out(c_embed.size());
    for (std::size_t i = 0; i < c_embed.size(); ++i) {
        double rescaled = (c_hat[i] - mean_hat) / std_hat * std_c + mean_c;
        out[i] = cfg.psi * rescaled + (1.0 - cfg.psi) * c_hat[i];
    }
    return out;
}

// Linear corruption schedule g(t) = 1 - t/T: no corruption at the end of
// denoising (t = 0), full corruption at t = T.
inline Vec perturb_condition(const Vec& c_embed, int t, int T, const PerturbConfig& cfg, Rng& rng) {
    if (t < 0 || t > T) throw std::out_of_range("perturb_condition: t out of range");
    double g = 1.0 - static_cast<double>(t) / static_cast<double>(T);
    return perturb_condition_g(c_embed, g, cfg, rng);
}

// --- trajectories ---

struct TrajectoryStep {
    double t;  // schedule index (diffusion) or continuous time (flow)
    Vec z;     // state before this step's update
    double w;
    double delta_norm;
    Vec eps_c;
    Vec eps_null;
    Vec extra_noise;  // ancestral fresh noise; empty for deterministic samplers
};

struct Trajectory {
    std::vector<TrajectoryStep> steps;
    Vec z0;  // final state
    std::string mode;
    std::string sampler;
    double c_angle = 0.0;
    double guidance_param = 0.0;  // w, or lambda for annealing
    std::uint64_t seed = 0;
};

constexpr double kTrajectoryBound = 1e3;

namespace detail {

inline void check_bounded(const Vec& z) {
    for (double x : z)
        if (!(std::abs(x) <= kTrajectoryBound))
            throw NumericError("trajectory diverged (|coordinate| > 1e3)");
}

inline double mode_scale(const GuidanceMode& mode, int t, double delta_norm) {
    switch (mode.kind) {
        case GuidanceKind::Cfg:
            return mode.w;
        case GuidanceKind::CfgPP:
            if (mode.strict_cfgpp_range && !(mode.w >= 0.0 && mode.w <= 1.0))
                throw ConfigError("cfgpp: w outside [0, 1] with strict range enabled");
            return mode.w;
        default:
            if (!mode.scheduler) throw ConfigError("annealing mode requires a scheduler");
            return scheduler_forward(*mode.scheduler, t, delta_norm, mode.lambda);
    }
}

inline bool renoise_with_eps_hat(const GuidanceMode& mode) {
    if (mode.kind == GuidanceKind::Cfg) return true;
    if (mode.kind == GuidanceKind::Annealing && mode.scheduler &&
        !mode.scheduler->ablation.use_cfgpp_renoise)
        return true;
    return false;
}

}  // namespace detail

// One guided reverse pass z_T -> z_0. z_T is standard normal from the seed;
// each step computes delta, asks the mode for w, denoises with eps_hat and
// renoises with eps_hat (CFG) or eps_null (CFG++/annealing).
inline Trajectory sample_trajectory(const DenoiserNet& dnet, const GuidanceMode& mode, SamplerKind sampler,
                                    const ConditionValue& cond, std::uint64_t seed) {
    if (cond.is_null()) throw ConfigError("sample_trajectory: condition must be non-null");
    if (mode.kind == GuidanceKind::Annealing) {
        if (!mode.scheduler) throw ConfigError("sample_trajectory: annealing mode requires a scheduler");
        if (mode.scheduler->T != dnet.sched.T)
            throw ConfigError("sample_trajectory: scheduler/backbone T mismatch");
    }

    const NoiseSchedule& sched = dnet.sched;
    Rng rng(seed);
    Vec z = rng.normal_vec(kPointDim);

    Trajectory traj;
    traj.steps.reserve(sched.T);
    traj.mode = to_string(mode.kind);
    traj.sampler = to_string(sampler);
    traj.c_angle = cond.angle();
    traj.guidance_param = mode.kind == GuidanceKind::Annealing ? mode.lambda : mode.w;
    traj.seed = seed;

    for (int t = sched.T; t >= 1; --t) {
        DeltaResult d = compute_delta(dnet, z, t, cond);
        double w = detail::mode_scale(mode, t, d.norm);
        Vec eps_hat = cfg_combine(d.eps_null, d.eps_c, w);
        Vec z0t = denoise_estimate(z, eps_hat, t, sched);
        const Vec& src = detail::renoise_with_eps_hat(mode) ? eps_hat : d.eps_null;

        TrajectoryStep step{static_cast<double>(t), z, w, d.norm, d.eps_c, d.eps_null, {}};
        if (sampler == SamplerKind::EulerAncestral) {
            // sigma_up^2 = (1 - ab_{t-1}) / (1 - ab_t) * beta_t; zero at t = 1
            double ab_prev = sched.alpha_bar(t - 1);
            double ab = sched.alpha_bar(t);
            double var_up = (1.0 - ab_prev) / (1.0 - ab) * sched.beta(t);
            double sigma_up = std::sqrt(var_up);
            double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - var_up));
            Vec n = rng.normal_vec(kPointDim);
            Vec next(kPointDim);
            double a_prev = std::sqrt(ab_prev);
            for (int i = 0; i < kPointDim; ++i)
                next[i] = a_prev * z0t[i] + dir * src[i] + sigma_up * n[i];
            step.extra_noise = n;
            z = std::move(next);
        } else {
            // DDIM and the deterministic Euler form share this update
            z = renoise(z0t, src, t - 1, sched);
        }
        detail::check_bounded(z);
        traj.steps.push_back(std::move(step));
    }
    traj.z0 = z;
    return traj;
}

// Guided flow-matching integration: Euler steps on the velocity ODE with the
// conditional/unconditional combination re-evaluated each step. The scheduler
// (when present) is queried with the flow time directly.
inline Trajectory flow_guided_sample(const VelocityNet& vnet, const GuidanceMode& mode,
                                     const ConditionValue& cond, int steps, std::uint64_t seed) {
    if (cond.is_null()) throw ConfigError("flow_guided_sample: condition must be non-null");
    if (steps < 1) throw ConfigError("flow_guided_sample: steps must be >= 1");
    if (mode.kind == GuidanceKind::Annealing && !mode.scheduler)
        throw ConfigError("flow_guided_sample: annealing mode requires a scheduler");

    Rng rng(seed);
    Vec x = rng.normal_vec(kPointDim);
    const Vec cond_embed = embed_condition(cond);
    const Vec null_embed = embed_condition(ConditionValue::null());
    double dt = 1.0 / static_cast<double>(steps);

    Trajectory traj;
    traj.steps.reserve(steps);
    traj.mode = to_string(mode.kind);
    traj.sampler = "flow-euler";
    traj.c_angle = cond.angle();
    traj.guidance_param = mode.kind == GuidanceKind::Annealing ? mode.lambda : mode.w;
    traj.seed = seed;

    for (int k = 0; k < steps; ++k) {
        double t = static_cast<double>(k) * dt;
        Vec v_c = predict_velocity_embed(vnet, x, t, cond_embed);
        Vec v_n = predict_velocity_embed(vnet, x, t, null_embed);
        Vec delta = sub(v_c, v_n);
        double dn = norm2(delta);
        double w = mode.kind == GuidanceKind::Annealing
                       ? scheduler_forward_u(*mode.scheduler, t, dn, mode.lambda)
                       : mode.w;
        Vec v_hat = cfg_combine(v_n, v_c, w);

        traj.steps.push_back({t, x, w, dn, v_c, v_n, {}});
        axpy(x, dt, v_hat);
        detail::check_bounded(x);
    }
    traj.z0 = x;
    return traj;
}

}  // namespace glab
