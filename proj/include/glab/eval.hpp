#pragma once

// Metrics and batch evaluation. Adherence counts endpoints within +-pi/64 of
// the target angle, the manifold band is mu_r +- 3 sigma_r, and coverage is
// the occupied fraction of 16 bins spanning the adherence band.

#include <mutex>

#include "glab/annealer.hpp"
#include "glab/checkpoint.hpp"
#include "glab/io.hpp"

namespace glab {

constexpr double kAdherenceTol = kPi / 64.0;
constexpr int kCoverageBins = 16;

inline double endpoint_angle(const Vec& p) { return wrap_angle(std::atan2(p[1], p[0])); }

inline double adherence_rate(const std::vector<Vec>& endpoints, double c, double tol = kAdherenceTol) {
    if (endpoints.empty()) throw ConfigError("adherence_rate: empty input");
    std::size_t hit = 0;
    for (const auto& p : endpoints)
        if (angular_distance(endpoint_angle(p), c) <= tol) ++hit;
    return static_cast<double>(hit) / static_cast<double>(endpoints.size());
}

inline double on_manifold_rate(const std::vector<Vec>& endpoints, const RingSpec& spec, double k = 3.0) {
    if (endpoints.empty()) throw ConfigError("on_manifold_rate: empty input");
    double lo = spec.mu_r - k * spec.sigma_r;
    double hi = spec.mu_r + k * spec.sigma_r;
    std::size_t hit = 0;
    for (const auto& p : endpoints) {
        double r = std::hypot(p[0], p[1]);
        if (r >= lo && r <= hi) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(endpoints.size());
}

// Fraction of angular bins across the +-tol band occupied by in-band
// endpoints, offsets taken from each endpoint's own condition.
inline double coverage_rate(const std::vector<Vec>& endpoints, const std::vector<double>& conditions,
                            double tol = kAdherenceTol, int bins = kCoverageBins) {
    if (endpoints.empty() || endpoints.size() != conditions.size())
        throw ConfigError("coverage_rate: empty or mismatched input");
    std::vector<bool> occupied(bins, false);
    for (std::size_t i = 0; i < endpoints.size(); ++i) {
        double a = endpoint_angle(endpoints[i]);
        double off = wrap_angle(a - conditions[i]);
        if (off > kPi) off -= kTwoPi;  // signed offset in (-pi, pi]
        if (std::abs(off) > tol) continue;
        int b = static_cast<int>((off + tol) / (2.0 * tol) * bins);
        occupied[std::clamp(b, 0, bins - 1)] = true;
    }
    int n = 0;
    for (bool o : occupied) n += o;
    return static_cast<double>(n) / static_cast<double>(bins);
}

struct EvalReport {
    int n_samples = 0;
    double adherence_rate = 0.0;
    double on_manifold_rate = 0.0;
    double coverage = 0.0;
    double mean_w = 0.0;
    std::string label;

    Json to_json() const {
        Json j;
        j["n_samples"] = n_samples;
        j["adherence_rate"] = adherence_rate;
        j["on_manifold_rate"] = on_manifold_rate;
        j["coverage"] = coverage;
        j["mean_w"] = mean_w;
        j["label"] = label;
        return j;
    }
};

inline EvalReport report_from_trajectories(const std::vector<Trajectory>& trajs, const RingSpec& spec,
                                           const std::string& label) {
    if (trajs.empty()) throw ConfigError("report: empty trajectory batch");
    std::vector<Vec> endpoints;
    std::vector<double> conditions;
    double w_sum = 0.0;
    std::size_t w_count = 0;
    double c_common = trajs.front().c_angle;
    for (const auto& tr : trajs) {
        endpoints.push_back(tr.z0);
        conditions.push_back(tr.c_angle);
        for (const auto& s : tr.steps) {
            w_sum += s.w;
            ++w_count;
        }
    }
    EvalReport r;
    r.n_samples = static_cast<int>(trajs.size());
    r.adherence_rate = adherence_rate(endpoints, c_common);
    r.on_manifold_rate = on_manifold_rate(endpoints, spec);
    r.coverage = coverage_rate(endpoints, conditions);
    r.mean_w = w_count ? w_sum / static_cast<double>(w_count) : 0.0;
    r.label = label;
    return r;
}

// --- delta-norm landscapes ---

struct GridSpec {
    int nx = 64;
    int ny = 64;
    double x_min = -1.5;
    double x_max = 1.5;
    double y_min = -1.5;
    double y_max = 1.5;

    double x_at(int j) const { return nx == 1 ? x_min : x_min + j * (x_max - x_min) / (nx - 1); }
    double y_at(int i) const { return ny == 1 ? y_min : y_min + i * (y_max - y_min) / (ny - 1); }
};

constexpr double kLogDeltaFloor = 1e-12;

// M[i][j] = ln ||delta|| at grid point (row i -> y, column j -> x), floored
// at ln(1e-12).
inline std::vector<Vec> delta_norm_heatmap(const DenoiserNet& dnet, int t, double c_angle,
                                           const GridSpec& grid = {}) {
    if (grid.nx < 1 || grid.ny < 1) throw ConfigError("delta_norm_heatmap: empty grid");
    ConditionValue cond = ConditionValue::of(c_angle);
    std::vector<Vec> m(grid.ny, Vec(grid.nx));
    for (int i = 0; i < grid.ny; ++i)
        for (int j = 0; j < grid.nx; ++j) {
            Vec z = {grid.x_at(j), grid.y_at(i)};
            m[i][j] = std::log(std::max(compute_delta(dnet, z, t, cond).norm, kLogDeltaFloor));
        }
    return m;
}

inline std::vector<Vec> flow_delta_norm_heatmap(const VelocityNet& vnet, double t, double c_angle,
                                                const GridSpec& grid = {}) {
    if (grid.nx < 1 || grid.ny < 1) throw ConfigError("flow_delta_norm_heatmap: empty grid");
    const Vec cond_embed = embed_condition(ConditionValue::of(c_angle));
    const Vec null_embed = embed_condition(ConditionValue::null());
    std::vector<Vec> m(grid.ny, Vec(grid.nx));
    for (int i = 0; i < grid.ny; ++i)
        for (int j = 0; j < grid.nx; ++j) {
            Vec x = {grid.x_at(j), grid.y_at(i)};
            Vec d = sub(predict_velocity_embed(vnet, x, t, cond_embed),
                        predict_velocity_embed(vnet, x, t, null_embed));
            m[i][j] = std::log(std::max(norm2(d), kLogDeltaFloor));
        }
    return m;
}

// Argmin of a heatmap restricted to the ring annulus; returns the grid point.
inline Vec annulus_argmin(const std::vector<Vec>& m, const GridSpec& grid, const RingSpec& spec,
                          double band_k = 3.0) {
    double lo = spec.mu_r - band_k * spec.sigma_r;
    double hi = spec.mu_r + band_k * spec.sigma_r;
    double best = std::numeric_limits<double>::infinity();
    Vec best_p = {spec.mu_r, 0.0};
    for (int i = 0; i < grid.ny; ++i)
        for (int j = 0; j < grid.nx; ++j) {
            double x = grid.x_at(j), y = grid.y_at(i);
            double r = std::hypot(x, y);
            if (r < lo || r > hi) continue;
            if (m[i][j] < best) {
                best = m[i][j];
                best_p = {x, y};
            }
        }
    return best_p;
}

// --- batch evaluation ---

struct BatchEvalResult {
    std::vector<Trajectory> trajectories;
    EvalReport report;
};

namespace detail {

inline std::uint64_t cond_seed(std::uint64_t traj_seed) { return traj_seed ^ 0x9e3779b97f4a7c15ULL; }

}  // namespace detail

// Per-trajectory seeds are seed_base + i; with resample_c each trajectory
// draws its own condition from a derived stream, otherwise all share c_angle.
inline BatchEvalResult evaluate_diffusion(const DenoiserNet& dnet, const GuidanceMode& mode,
                                          SamplerKind sampler, double c_angle, int n,
                                          std::uint64_t seed_base, const RingSpec& spec,
                                          const std::string& label, bool resample_c = false) {
    if (n < 1) throw ConfigError("evaluate_diffusion: need n >= 1");
    std::vector<Trajectory> trajs(n);
    std::exception_ptr first_error;
    std::mutex err_mu;
    parallel_for(n, [&](std::size_t i) {
        try {
            std::uint64_t seed = seed_base + i;
            ConditionValue cond = ConditionValue::of(c_angle);
            if (resample_c) {
                Rng cr(detail::cond_seed(seed));
                cond = sample_condition(cr);
            }
            trajs[i] = sample_trajectory(dnet, mode, sampler, cond, seed);
        } catch (...) {
            std::lock_guard<std::mutex> lk(err_mu);
            if (!first_error) first_error = std::current_exception();
        }
    });
    if (first_error) std::rethrow_exception(first_error);
    EvalReport rep = report_from_trajectories(trajs, spec, label);
    return {std::move(trajs), std::move(rep)};
}

inline BatchEvalResult evaluate_flow(const VelocityNet& vnet, const GuidanceMode& mode, double c_angle,
                                     int steps, int n, std::uint64_t seed_base, const RingSpec& spec,
                                     const std::string& label, bool resample_c = false) {
    if (n < 1) throw ConfigError("evaluate_flow: need n >= 1");
    std::vector<Trajectory> trajs(n);
    std::exception_ptr first_error;
    std::mutex err_mu;
    parallel_for(n, [&](std::size_t i) {
        try {
            std::uint64_t seed = seed_base + i;
            ConditionValue cond = ConditionValue::of(c_angle);
            if (resample_c) {
                Rng cr(detail::cond_seed(seed));
                cond = sample_condition(cr);
            }
            trajs[i] = flow_guided_sample(vnet, mode, cond, steps, seed);
        } catch (...) {
            std::lock_guard<std::mutex> lk(err_mu);
            if (!first_error) first_error = std::current_exception();
        }
    });
    if (first_error) std::rethrow_exception(first_error);
    EvalReport rep = report_from_trajectories(trajs, spec, label);
    return {std::move(trajs), std::move(rep)};
}

}  // namespace glab
