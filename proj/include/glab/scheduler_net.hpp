#pragma once

// The lambda-conditioned guidance-scale predictor w(t, |delta|, lambda):
// three 4-dim sinusoidal embeddings (normalized timestep, normalized delta
// norm, lambda) feeding an MLP with a scalar output. Ablation flags zero an
// embedding block while keeping the input width fixed; the constrained
// variant adds a sigmoid so every output lies in (0, 1).

#include "glab/nnkernel.hpp"

namespace glab {

constexpr int kSchedEmbedDim = 4;
constexpr int kSchedInputDim = 3 * kSchedEmbedDim;

struct AblationFlags {
    bool use_t = true;
    bool use_delta_norm = true;
    bool use_cfgpp_renoise = true;
    bool use_perturbation = true;
    bool constrain_w = false;
};

struct SchedulerNet {
    MlpNet net;               // dims [12, hidden..., 1]
    double delta_max = 1.0;   // measured at training time (99.9th percentile)
    AblationFlags ablation;
    int T = 50;               // schedule length used for timestep normalization
};

inline SchedulerNet make_scheduler_net(double delta_max, const AblationFlags& flags, int T,
                                       std::uint64_t seed,
                                       const std::vector<int>& hidden = {128, 128, 128}) {
    if (!(delta_max > 0.0)) throw ConfigError("make_scheduler_net: delta_max must be positive");
    SchedulerNet s;
    std::vector<int> dims;
    dims.push_back(kSchedInputDim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(1);
    s.net = init_params(dims, seed);
    s.net.output_squash = flags.constrain_w ? OutputSquash::Sigmoid : OutputSquash::None;
    s.delta_max = delta_max;
    s.ablation = flags;
    s.T = T;
    return s;
}

// u is the normalized timestep in [0, 1]; delta_norm is clamped to
// [0, delta_max] before embedding.
inline Vec scheduler_features(const SchedulerNet& snet, double u, double delta_norm, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::out_of_range("scheduler: lambda outside [0, 1]");
    if (!(delta_norm >= 0.0)) throw std::out_of_range("scheduler: negative delta norm");

    Vec in(kSchedInputDim, 0.0);
    if (snet.ablation.use_t) {
        Vec e = sinusoidal_embed(u, kSchedEmbedDim);
        std::copy(e.begin(), e.end(), in.begin());
    }
    if (snet.ablation.use_delta_norm) {
        double d = std::min(delta_norm, snet.delta_max) / snet.delta_max;
        Vec e = sinusoidal_embed(d, kSchedEmbedDim);
        std::copy(e.begin(), e.end(), in.begin() + kSchedEmbedDim);
    }
    Vec e = sinusoidal_embed(lambda, kSchedEmbedDim);
    std::copy(e.begin(), e.end(), in.begin() + 2 * kSchedEmbedDim);
    return in;
}

inline ForwardResult scheduler_forward_tape(const SchedulerNet& snet, double u, double delta_norm,
                                            double lambda) {
    return mlp_forward(snet.net, scheduler_features(snet, u, delta_norm, lambda));
}

inline double scheduler_forward_u(const SchedulerNet& snet, double u, double delta_norm, double lambda) {
    return scheduler_forward_tape(snet, u, delta_norm, lambda).output[0];
}

inline double scheduler_forward(const SchedulerNet& snet, int t, double delta_norm, double lambda) {
    if (t < 1 || t > snet.T) throw std::out_of_range("scheduler_forward: t out of range");
    return scheduler_forward_u(snet, static_cast<double>(t) / snet.T, delta_norm, lambda);
}

inline std::vector<Vec> w_heatmap(const SchedulerNet& snet, double lambda, const std::vector<int>& t_grid,
                                  const Vec& delta_grid) {
    if (t_grid.empty() || delta_grid.empty()) throw ConfigError("w_heatmap: empty grid");
    std::vector<Vec> m(t_grid.size(), Vec(delta_grid.size()));
    for (std::size_t i = 0; i < t_grid.size(); ++i)
        for (std::size_t j = 0; j < delta_grid.size(); ++j)
            m[i][j] = scheduler_forward(snet, t_grid[i], delta_grid[j], lambda);
    return m;
}

}  // namespace glab
