#pragma once

// Dense feed-forward nets with recorded-activation reverse mode. The tape
// supports exactly this topology: ReLU hidden layers, optional sigmoid on the
// output, gradients w.r.t. parameters and w.r.t. the input vector. All math
// is in 64-bit floats.

#include <cstring>
#include <limits>
#include <utility>

#include "glab/common.hpp"

namespace glab {

enum class OutputSquash { None, Sigmoid };

struct MlpNet {
    std::vector<int> layer_dims;                // input dim first, output dim last
    std::vector<std::vector<double>> weights;   // per layer, row-major (out x in)
    std::vector<std::vector<double>> biases;    // per layer
    OutputSquash output_squash = OutputSquash::None;

    int num_layers() const { return static_cast<int>(weights.size()); }
    int input_dim() const { return layer_dims.front(); }
    int output_dim() const { return layer_dims.back(); }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
        return n;
    }
};

// Activations recorded during one forward pass; replaying it reproduces the
// output bit-exactly and feeds mlp_backward.
struct GradTape {
    Vec input;
    std::vector<Vec> pre;    // pre-activation per layer
    std::vector<Vec> post;   // post-activation per layer; post.back() is the output
};

// Gradient (or moment) buffers shaped like a net's parameters.
struct MlpGrads {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    static MlpGrads zeros_like(const MlpNet& net) {
        MlpGrads g;
        g.weights.reserve(net.weights.size());
        g.biases.reserve(net.biases.size());
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            g.weights.emplace_back(net.weights[l].size(), 0.0);
            g.biases.emplace_back(net.biases[l].size(), 0.0);
        }
        return g;
    }

    void zero() {
        for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
        for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
    }

    void add(const MlpGrads& o) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            for (std::size_t i = 0; i < weights[l].size(); ++i) weights[l][i] += o.weights[l][i];
            for (std::size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += o.biases[l][i];
        }
    }

    void scale(double k) {
        for (auto& w : weights)
            for (auto& x : w) x *= k;
        for (auto& b : biases)
            for (auto& x : b) x *= k;
    }

    bool finite() const {
        for (const auto& w : weights)
            if (!all_finite(w)) return false;
        for (const auto& b : biases)
            if (!all_finite(b)) return false;
        return true;
    }
};

struct AdamWState {
    MlpGrads m;  // first moments
    MlpGrads v;  // second moments
    long step_count = 0;
    double lr = 1e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;

    static AdamWState init(const MlpNet& net, double lr = 1e-3, double weight_decay = 0.01) {
        AdamWState st;
        st.m = MlpGrads::zeros_like(net);
        st.v = MlpGrads::zeros_like(net);
        st.lr = lr;
        st.weight_decay = weight_decay;
        return st;
    }
};

// Kaiming-uniform for ReLU: |w| <= sqrt(6 / fan_in) (gain sqrt(2) folded into
// the bound), biases zero, deterministic per seed.
inline MlpNet init_params(const std::vector<int>& layer_dims, std::uint64_t seed) {
    if (layer_dims.size() < 2) throw ConfigError("init_params: need at least input and output dims");
    for (int d : layer_dims)
        if (d <= 0) throw ConfigError("init_params: layer dims must be positive");

    MlpNet net;
    net.layer_dims = layer_dims;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        int fan_in = layer_dims[l];
        int fan_out = layer_dims[l + 1];
        double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::vector<double> w(static_cast<std::size_t>(fan_out) * fan_in);
        for (auto& x : w) x = rng.uniform(-bound, bound);
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(fan_out, 0.0);
    }
    return net;
}

// Frequencies omega_k = pi * 2^k over [0,1]-normalized inputs; layout is all
// sines then all cosines.
inline Vec sinusoidal_embed(double x, int dim) {
    if (dim <= 0 || dim % 2 != 0) throw ConfigError("sinusoidal_embed: dim must be even and positive");
    if (!std::isfinite(x)) throw NumericError("sinusoidal_embed: non-finite input");
    int half = dim / 2;
    Vec out(dim);
    double omega = kPi;
    for (int k = 0; k < half; ++k) {
        out[k] = std::sin(omega * x);
        out[half + k] = std::cos(omega * x);
        omega *= 2.0;
    }
    return out;
}

namespace detail {

inline double sigmoid_strict(double x) {
    double s;
    if (x >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-x));
    } else {
        double e = std::exp(x);
        s = e / (1.0 + e);
    }
    // keep strictly inside (0, 1)
    const double hi = std::nextafter(1.0, 0.0);
    return std::clamp(s, std::numeric_limits<double>::min(), hi);
}

}  // namespace detail

struct ForwardResult {
    Vec output;
    GradTape tape;
};

inline ForwardResult mlp_forward(const MlpNet& net, const Vec& input) {
    if (static_cast<int>(input.size()) != net.input_dim())
        throw ShapeError("mlp_forward: input size " + std::to_string(input.size()) +
                         " != " + std::to_string(net.input_dim()));
    if (!all_finite(input)) throw NumericError("mlp_forward: non-finite input");

    GradTape tape;
    tape.input = input;
    tape.pre.resize(net.num_layers());
    tape.post.resize(net.num_layers());

    const Vec* a = &tape.input;
    for (int l = 0; l < net.num_layers(); ++l) {
        int in = net.layer_dims[l];
        int out = net.layer_dims[l + 1];
        const auto& w = net.weights[l];
        Vec pre(out);
        for (int r = 0; r < out; ++r) {
            double s = net.biases[l][r];
            const double* wr = w.data() + static_cast<std::size_t>(r) * in;
            for (int c = 0; c < in; ++c) s += wr[c] * (*a)[c];
            pre[r] = s;
        }
        Vec post(out);
        bool last = (l == net.num_layers() - 1);
        if (last) {
            if (net.output_squash == OutputSquash::Sigmoid) {
                for (int r = 0; r < out; ++r) post[r] = detail::sigmoid_strict(pre[r]);
            } else {
                post = pre;
            }
        } else {
            for (int r = 0; r < out; ++r) post[r] = pre[r] > 0.0 ? pre[r] : 0.0;
        }
        tape.pre[l] = std::move(pre);
        tape.post[l] = std::move(post);
        a = &tape.post[l];
    }
    return {tape.post.back(), std::move(tape)};
}

struct BackwardResult {
    MlpGrads grads;
    Vec input_grad;
};

// Reverse pass over one tape: returns d(output_grad . output)/d(params) and
// d(output_grad . output)/d(input).
inline BackwardResult mlp_backward(const MlpNet& net, const GradTape& tape, const Vec& output_grad) {
    int layers = net.num_layers();
    if (static_cast<int>(tape.pre.size()) != layers || static_cast<int>(tape.post.size()) != layers ||
        static_cast<int>(tape.input.size()) != net.input_dim())
        throw TapeError("mlp_backward: tape does not match net");
    for (int l = 0; l < layers; ++l)
        if (static_cast<int>(tape.pre[l].size()) != net.layer_dims[l + 1])
            throw TapeError("mlp_backward: tape layer size mismatch");
    if (static_cast<int>(output_grad.size()) != net.output_dim())
        throw ShapeError("mlp_backward: output_grad size mismatch");

    BackwardResult res;
    res.grads = MlpGrads::zeros_like(net);

    Vec g = output_grad;
    for (int l = layers - 1; l >= 0; --l) {
        int in = net.layer_dims[l];
        int out = net.layer_dims[l + 1];
        bool last = (l == layers - 1);
        if (last) {
            if (net.output_squash == OutputSquash::Sigmoid) {
                for (int r = 0; r < out; ++r) {
                    double y = tape.post[l][r];
                    g[r] *= y * (1.0 - y);
                }
            }
        } else {
            for (int r = 0; r < out; ++r)
                if (tape.pre[l][r] <= 0.0) g[r] = 0.0;
        }

        const Vec& a_prev = (l == 0) ? tape.input : tape.post[l - 1];
        auto& dw = res.grads.weights[l];
        for (int r = 0; r < out; ++r) {
            double gr = g[r];
            double* dwr = dw.data() + static_cast<std::size_t>(r) * in;
            for (int c = 0; c < in; ++c) dwr[c] += gr * a_prev[c];
            res.grads.biases[l][r] += gr;
        }

        Vec g_in(in, 0.0);
        const auto& w = net.weights[l];
        for (int r = 0; r < out; ++r) {
            double gr = g[r];
            const double* wr = w.data() + static_cast<std::size_t>(r) * in;
            for (int c = 0; c < in; ++c) g_in[c] += wr[c] * gr;
        }
        g = std::move(g_in);
    }
    res.input_grad = std::move(g);
    return res;
}

// Decoupled weight decay applied before the bias-corrected Adam update.
inline void adamw_step(MlpNet& net, const MlpGrads& grads, AdamWState& st) {
    if (grads.weights.size() != net.weights.size())
        throw ShapeError("adamw_step: gradient shape mismatch");
    if (!grads.finite()) throw NumericError("adamw_step: non-finite gradients");

    st.step_count += 1;
    double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
    double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));

    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        auto update = [&](std::vector<double>& p, const std::vector<double>& g,
                          std::vector<double>& m, std::vector<double>& v) {
            if (p.size() != g.size()) throw ShapeError("adamw_step: gradient shape mismatch");
            for (std::size_t i = 0; i < p.size(); ++i) {
                p[i] -= st.lr * st.weight_decay * p[i];
                m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
                v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
                double m_hat = m[i] / bc1;
                double v_hat = v[i] / bc2;
                p[i] -= st.lr * m_hat / (std::sqrt(v_hat) + st.eps_hat);
            }
        };
        update(net.weights[l], grads.weights[l], st.m.weights[l], st.v.weights[l]);
        update(net.biases[l], grads.biases[l], st.m.biases[l], st.v.biases[l]);
    }
}

// FNV-1a over the parameter bytes; used for frozen-backbone checks and
// checkpoint provenance.
inline std::uint64_t param_hash(const MlpNet& net) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const std::vector<double>& v) {
        for (double d : v) {
            std::uint64_t bits;
            static_assert(sizeof(bits) == sizeof(d));
            std::memcpy(&bits, &d, sizeof(bits));
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xffULL;
                h *= 1099511628211ULL;
            }
        }
    };
    for (const auto& w : net.weights) mix(w);
    for (const auto& b : net.biases) mix(b);
    return h;
}

}  // namespace glab
