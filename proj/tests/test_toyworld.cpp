#include <catch2/catch.hpp>

#include "glab/toyworld.hpp"

using namespace glab;

TEST_CASE("sample_condition") {
    SECTION("uniform on the circle") {
        Rng rng(17);
        double sc = 0.0, ss = 0.0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            double c = sample_condition(rng).angle();
            REQUIRE(c >= 0.0);
            REQUIRE(c < kTwoPi);
            sc += std::cos(c);
            ss += std::sin(c);
        }
        REQUIRE(std::abs(sc / n) < 0.02);
        REQUIRE(std::abs(ss / n) < 0.02);
    }
    SECTION("seeded reproducibility") {
        Rng a(5), b(5);
        for (int i = 0; i < 10; ++i) REQUIRE(sample_condition(a).angle() == sample_condition(b).angle());
    }
}

TEST_CASE("sample_ring") {
    SECTION("degenerate spec lands exactly on the ring") {
        RingSpec spec;
        spec.sigma_r = 0.0;
        spec.sigma_theta = 0.0;
        Rng rng(1);
        Vec p = sample_ring(kPi / 3.0, spec, rng);
        REQUIRE(p[0] == Approx(std::cos(kPi / 3.0)));
        REQUIRE(p[1] == Approx(std::sin(kPi / 3.0)));
    }
    SECTION("angular concentration: +-2 sigma band holds ~95%") {
        for (double sigma_theta : {kPi / 128.0, kPi / 16.0}) {
            RingSpec spec;
            spec.sigma_theta = sigma_theta;
            Rng rng(23);
            double c = 3.0 * kPi / 4.0;
            int in_band = 0;
            const int n = 10000;
            for (int i = 0; i < n; ++i) {
                Vec p = sample_ring(c, spec, rng);
                double a = wrap_angle(std::atan2(p[1], p[0]));
                if (angular_distance(a, c) <= 2.0 * sigma_theta) ++in_band;
            }
            REQUIRE(in_band >= static_cast<int>(0.95 * n));
        }
    }
    SECTION("radius stays within 3 sigma for ~99%") {
        RingSpec spec;
        Rng rng(29);
        int in = 0;
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            Vec p = sample_ring(1.0, spec, rng);
            double r = std::hypot(p[0], p[1]);
            if (r >= spec.mu_r - 3 * spec.sigma_r && r <= spec.mu_r + 3 * spec.sigma_r) ++in;
        }
        REQUIRE(in >= static_cast<int>(0.99 * n));
    }
}

TEST_CASE("embed_condition") {
    Vec a = embed_condition(ConditionValue::of(0.0));
    REQUIRE(a[0] == Approx(1.0));
    REQUIRE(a[1] == Approx(0.0).margin(1e-15));
    REQUIRE(a[2] == 1.0);

    Vec b = embed_condition(ConditionValue::of(kPi));
    REQUIRE(b[0] == Approx(-1.0));
    REQUIRE(b[1] == Approx(0.0).margin(1e-12));
    REQUIRE(b[2] == 1.0);

    Vec n = embed_condition(ConditionValue::null());
    REQUIRE(n == Vec{0.0, 0.0, 0.0});

    // presence flag separates null from every angle
    Rng rng(2);
    for (int i = 0; i < 50; ++i) {
        Vec e = embed_condition(sample_condition(rng));
        REQUIRE(e[2] == 1.0);
    }
}

TEST_CASE("angular_distance") {
    REQUIRE(angular_distance(3 * kPi / 4, 3 * kPi / 4) == 0.0);
    REQUIRE(angular_distance(0.1, kTwoPi - 0.1) == Approx(0.2));
    REQUIRE(angular_distance(0.0, kPi / 2) == Approx(kPi / 2));
    REQUIRE(angular_distance(-0.3, 0.3) == Approx(0.6));
    // symmetric and bounded by pi
    Rng rng(7);
    for (int i = 0; i < 100; ++i) {
        double a = rng.uniform(-10, 10), b = rng.uniform(-10, 10);
        double d = angular_distance(a, b);
        REQUIRE(d >= 0.0);
        REQUIRE(d <= kPi + 1e-12);
        REQUIRE(d == Approx(angular_distance(b, a)));
    }
}

TEST_CASE("make_dataset") {
    SECTION("n = 0 rejected") {
        REQUIRE_THROWS_AS(make_dataset(0, RingSpec{}, 1), ConfigError);
    }
    SECTION("radial mean near mu_r") {
        auto data = make_dataset(100000, RingSpec{}, 31);
        double sum = 0.0;
        for (const auto& d : data) sum += std::hypot(d.point[0], d.point[1]);
        REQUIRE(std::abs(sum / data.size() - 1.0) < 0.005);
    }
    SECTION("same seed gives identical datasets") {
        auto a = make_dataset(500, RingSpec{}, 8);
        auto b = make_dataset(500, RingSpec{}, 8);
        for (std::size_t i = 0; i < a.size(); ++i) {
            REQUIRE(a[i].point == b[i].point);
            REQUIRE(a[i].cond.angle() == b[i].cond.angle());
        }
    }
    SECTION("marginal covers the full ring") {
        auto data = make_dataset(100000, RingSpec{}, 37);
        const int bins = 32;  // width pi/16
        std::vector<int> count(bins, 0);
        for (const auto& d : data) {
            double a = wrap_angle(std::atan2(d.point[1], d.point[0]));
            ++count[std::min(bins - 1, static_cast<int>(a / kTwoPi * bins))];
        }
        for (int b = 0; b < bins; ++b)
            REQUIRE(count[b] >= static_cast<int>(0.01 * data.size()));
    }
    SECTION("invalid spec rejected") {
        RingSpec bad;
        bad.mu_r = 0.1;  // reaches the origin
        REQUIRE_THROWS_AS(make_dataset(10, bad, 1), ConfigError);
    }
}
