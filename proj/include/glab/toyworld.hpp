#pragma once

// The 2D ring data distribution: a normal radius around mu_r and a wrapped
// normal angle around the conditioning angle c. The angle plays the prompt
// role throughout.

#include <optional>

#include "glab/common.hpp"

namespace glab {

struct RingSpec {
    double mu_r = 1.0;
    double sigma_r = 0.1;
    double sigma_theta = kPi / 16.0;

    void validate() const {
        if (!(mu_r > 3.0 * sigma_r)) throw ConfigError("RingSpec: ring reaches the origin (mu_r <= 3*sigma_r)");
        if (!(sigma_theta > 0.0)) throw ConfigError("RingSpec: sigma_theta must be positive");
    }
};

// An angle in [0, 2*pi) or the null condition.
class ConditionValue {
public:
    static ConditionValue null() { return ConditionValue(); }
    static ConditionValue of(double angle) {
        ConditionValue c;
        c.angle_ = wrap_angle(angle);
        return c;
    }

    bool is_null() const { return !angle_.has_value(); }
    double angle() const {
        if (!angle_) throw ConfigError("ConditionValue: null condition has no angle");
        return *angle_;
    }

private:
    std::optional<double> angle_;
};

inline ConditionValue sample_condition(Rng& rng) {
    return ConditionValue::of(rng.uniform(0.0, kTwoPi));
}

inline Vec sample_ring(double c, const RingSpec& spec, Rng& rng) {
    double theta = wrap_angle(c + spec.sigma_theta * rng.normal());
    double r = spec.mu_r + spec.sigma_r * rng.normal();
    return {r * std::cos(theta), r * std::sin(theta)};
}

// (cos c, sin c, 1); the null condition maps to the zero vector, the third
// entry is a presence flag.
inline Vec embed_condition(const ConditionValue& cond) {
    if (cond.is_null()) return {0.0, 0.0, 0.0};
    return {std::cos(cond.angle()), std::sin(cond.angle()), 1.0};
}

// min over k of |a - b + 2*pi*k|, in [0, pi]
inline double angular_distance(double a, double b) {
    double d = wrap_angle(a - b);
    return d > kPi ? kTwoPi - d : d;
}

struct RingSample {
    Vec point;
    ConditionValue cond;
};

inline std::vector<RingSample> make_dataset(std::size_t n, const RingSpec& spec, std::uint64_t seed) {
    if (n < 1) throw ConfigError("make_dataset: n must be >= 1");
    spec.validate();
    Rng rng(seed);
    std::vector<RingSample> data;
    data.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ConditionValue c = sample_condition(rng);
        data.push_back({sample_ring(c.angle(), spec, rng), c});
    }
    return data;
}

}  // namespace glab
