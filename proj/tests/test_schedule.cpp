#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "driftlab/schedule.hpp"

using namespace driftlab;

TEST_CASE("single-step schedule") {
    const NoiseSchedule s = make_linear_schedule(1, 0.5, 0.5);
    REQUIRE(s.beta_at(1) == 0.5);
    REQUIRE(s.alpha_at(1) == 0.5);
    REQUIRE(s.alpha_bar_at(1) == 0.5); // abar_1 = alpha_1
}

TEST_CASE("three-step linear schedule, hand-multiplied cumulative product") {
    const NoiseSchedule s = make_linear_schedule(3, 0.1, 0.3);
    REQUIRE_THAT(s.beta_at(1), Catch::Matchers::WithinAbs(0.1, 1e-15));
    REQUIRE_THAT(s.beta_at(2), Catch::Matchers::WithinAbs(0.2, 1e-15));
    REQUIRE_THAT(s.beta_at(3), Catch::Matchers::WithinAbs(0.3, 1e-15));
    REQUIRE_THAT(s.alpha_bar_at(1), Catch::Matchers::WithinRel(0.9, 1e-12));
    REQUIRE_THAT(s.alpha_bar_at(2), Catch::Matchers::WithinRel(0.72, 1e-12));
    REQUIRE_THAT(s.alpha_bar_at(3), Catch::Matchers::WithinRel(0.504, 1e-12));
}

TEST_CASE("invalid ranges are rejected") {
    REQUIRE_THROWS_AS(make_linear_schedule(2, 0.9, 0.0), ConfigError);
    REQUIRE_THROWS_AS(make_linear_schedule(0, 0.1, 0.2), ConfigError);
    REQUIRE_THROWS_AS(make_linear_schedule(2, 0.0, 0.2), ConfigError);
    REQUIRE_THROWS_AS(make_linear_schedule(2, 0.1, 1.0), ConfigError);
}

TEST_CASE("alpha_bar accessor bounds") {
    const NoiseSchedule s = make_linear_schedule(3, 0.1, 0.3);
    REQUIRE(alpha_bar_at(s, 2) == s.alpha_bar_at(2));
    REQUIRE(s.alpha_bar_at(0) == 1.0);
    REQUIRE_THROWS_AS(s.alpha_bar_at(4), std::out_of_range);
    REQUIRE_THROWS_AS(s.beta_at(0), std::out_of_range);
}

TEST_CASE("degenerate all-zero-beta test schedule has abar == 1 everywhere") {
    const NoiseSchedule s = make_degenerate_test_schedule(5);
    for (std::size_t t = 1; t <= 5; ++t) REQUIRE(s.alpha_bar_at(t) == 1.0);
}

TEST_CASE("schedule invariants over representative sizes") {
    for (std::size_t T : {std::size_t(1), std::size_t(10), std::size_t(50),
                          std::size_t(1000)}) {
        const NoiseSchedule s = make_linear_schedule(T, 1e-4, 2e-2);
        for (std::size_t t = 1; t <= T; ++t) {
            REQUIRE(s.beta_at(t) > 0.0);
            REQUIRE(s.beta_at(t) < 1.0);
            REQUIRE(s.alpha_at(t) == 1.0 - s.beta_at(t));
            REQUIRE(s.alpha_bar_at(t) > 0.0);
            REQUIRE(s.alpha_bar_at(t) <= 1.0);
            REQUIRE(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1)); // strict decrease
            // telescoping, relative tolerance 1e-12
            const double lhs = s.alpha_bar_at(t);
            const double rhs = s.alpha_bar_at(t - 1) * s.alpha_at(t);
            REQUIRE(std::abs(lhs - rhs) <= 1e-12 * std::abs(rhs));
            REQUIRE(s.sigma_at(t) >= 0.0);
            REQUIRE(s.weight_at(t) == 1.0);
        }
    }
}

TEST_CASE("construction is bit-deterministic") {
    const NoiseSchedule a = make_linear_schedule(100, 1e-4, 2e-2);
    const NoiseSchedule b = make_linear_schedule(100, 1e-4, 2e-2);
    REQUIRE(a.beta == b.beta);
    REQUIRE(a.alpha_bar == b.alpha_bar);
    REQUIRE(a.sigma == b.sigma);
    REQUIRE(a.w == b.w);
}

TEST_CASE("variance and weight mode hooks") {
    const NoiseSchedule s = make_linear_schedule(10, 1e-2, 2e-1,
                                                 VarianceMode::FixedPosterior,
                                                 WeightMode::Snr);
    REQUIRE(s.sigma_at(1) == 0.0); // abar_0 = 1 makes the posterior var 0
    for (std::size_t t = 2; t <= 10; ++t) {
        REQUIRE(s.sigma_at(t) > 0.0);
        REQUIRE(s.sigma_at(t) < std::sqrt(s.beta_at(t)));
    }
    for (std::size_t t = 1; t <= 10; ++t) {
        const double abar = s.alpha_bar_at(t);
        REQUIRE_THAT(s.weight_at(t),
                     Catch::Matchers::WithinRel(abar / (1.0 - abar), 1e-12));
    }
}

TEST_CASE("prior spec validation") {
    const PriorSpec p = make_prior(0.0, 1.0, 2);
    REQUIRE(p.dim == 2);
    REQUIRE_THROWS_AS(make_prior(0.0, 0.0, 1), ConfigError);
    REQUIRE_THROWS_AS(make_prior(0.0, 1.0, 0), ConfigError);
}
