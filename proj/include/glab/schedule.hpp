#pragma once

// Discrete DDPM noise schedule and the per-step algebra shared by every
// sampler. Index convention: t runs 1..T with alpha_bar(0) = 1; samplers
// iterate t = T down to 1 and land on z_0.

#include "glab/common.hpp"

namespace glab {

enum class ScheduleKind { Linear, ScaledLinear };

inline const char* to_string(ScheduleKind k) {
    return k == ScheduleKind::Linear ? "linear" : "scaled_linear";
}

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear") return ScheduleKind::Linear;
    if (s == "scaled_linear") return ScheduleKind::ScaledLinear;
    throw ConfigError("unknown schedule kind: '" + s + "'");
}

struct NoiseSchedule {
    int T = 0;
    ScheduleKind kind = ScheduleKind::Linear;
    double beta_start = 0.0;
    double beta_end = 0.0;
    Vec betas;       // beta_1..beta_T at [t-1]
    Vec alpha_bars;  // alpha_bar_0..alpha_bar_T at [t], alpha_bar_0 = 1

    double beta(int t) const {
        if (t < 1 || t > T) throw std::out_of_range("beta: t out of range");
        return betas[t - 1];
    }

    double alpha_bar(int t) const {
        if (t < 0 || t > T) throw std::out_of_range("alpha_bar: t out of range");
        return alpha_bars[t];
    }
};

inline NoiseSchedule build_schedule(ScheduleKind kind, int T, double beta_start, double beta_end) {
    if (T < 1) throw ConfigError("build_schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ConfigError("build_schedule: need 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.T = T;
    s.kind = kind;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.betas.resize(T);
    for (int t = 1; t <= T; ++t) {
        double u = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
        if (kind == ScheduleKind::Linear) {
            s.betas[t - 1] = beta_start + u * (beta_end - beta_start);
        } else {
            double r = std::sqrt(beta_start) + u * (std::sqrt(beta_end) - std::sqrt(beta_start));
            s.betas[t - 1] = r * r;
        }
    }
    s.alpha_bars.resize(T + 1);
    s.alpha_bars[0] = 1.0;
    for (int t = 1; t <= T; ++t) s.alpha_bars[t] = s.alpha_bars[t - 1] * (1.0 - s.betas[t - 1]);
    return s;
}

// Toy-world default: linear, T = 50, beta chosen so alpha_bar(T) ~ 1e-4 and
// the t = T marginal is indistinguishable from the standard normal that
// sampling starts from.
inline NoiseSchedule default_toy_schedule() {
    return build_schedule(ScheduleKind::Linear, 50, 1e-4, 0.15);
}

// z_t = sqrt(ab_t) * z0 + sqrt(1 - ab_t) * eps; t = 0 returns z0.
inline Vec add_noise(const Vec& z0, int t, const Vec& eps, const NoiseSchedule& sched) {
    if (z0.size() != eps.size()) throw ShapeError("add_noise: z0/eps size mismatch");
    double ab = sched.alpha_bar(t);
    double a = std::sqrt(ab);
    double b = std::sqrt(1.0 - ab);
    Vec z(z0.size());
    for (std::size_t i = 0; i < z0.size(); ++i) z[i] = a * z0[i] + b * eps[i];
    return z;
}

// z_{0|t} = (z_t - sqrt(1 - ab_t) * eps_hat) / sqrt(ab_t)
inline Vec denoise_estimate(const Vec& z_t, const Vec& eps_hat, int t, const NoiseSchedule& sched) {
    if (t < 1 || t > sched.T) throw std::out_of_range("denoise_estimate: t out of range");
    double ab = sched.alpha_bar(t);
    if (ab == 0.0) throw NumericError("denoise_estimate: singular schedule (alpha_bar = 0)");
    double a = std::sqrt(ab);
    double b = std::sqrt(1.0 - ab);
    Vec z0(z_t.size());
    for (std::size_t i = 0; i < z_t.size(); ++i) z0[i] = (z_t[i] - b * eps_hat[i]) / a;
    return z0;
}

// Same formula as add_noise; t_prev = 0 returns the clean estimate exactly.
inline Vec renoise(const Vec& z0_est, const Vec& eps_renoise, int t_prev, const NoiseSchedule& sched) {
    return add_noise(z0_est, t_prev, eps_renoise, sched);
}

// gamma = sqrt(ab) / sqrt(1 - ab), the coefficient scaling delta into the
// score-distillation gradient.
inline double gamma_of(double alpha_bar) {
    if (alpha_bar >= 1.0) throw NumericError("gamma_of: alpha_bar = 1 divides by zero");
    if (alpha_bar < 0.0) throw NumericError("gamma_of: negative alpha_bar");
    return std::sqrt(alpha_bar) / std::sqrt(1.0 - alpha_bar);
}

inline double gamma_t(const NoiseSchedule& sched, int t) {
    if (t < 1 || t > sched.T) throw std::out_of_range("gamma_t: t out of range");
    return gamma_of(sched.alpha_bar(t));
}

}  // namespace glab
