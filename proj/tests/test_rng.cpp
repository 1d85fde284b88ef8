#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "driftlab/rng.hpp"

using driftlab::RngStream;

TEST_CASE("keyed streams are deterministic and independent of call order") {
    RngStream a = RngStream::keyed(7, 1, 42);
    RngStream b = RngStream::keyed(7, 1, 42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

    // consuming stream 41 first must not perturb stream 42
    RngStream other = RngStream::keyed(7, 1, 41);
    for (int i = 0; i < 17; ++i) other.next_u64();
    RngStream c = RngStream::keyed(7, 1, 42);
    RngStream d = RngStream::keyed(7, 1, 42);
    REQUIRE(c.next_u64() == d.next_u64());
}

TEST_CASE("different keys give different streams") {
    std::set<std::uint64_t> firsts;
    for (std::uint64_t i = 0; i < 1000; ++i)
        firsts.insert(RngStream::keyed(7, 1, i).next_u64());
    REQUIRE(firsts.size() == 1000);

    REQUIRE(RngStream::keyed(7, 1, 5).next_u64() !=
            RngStream::keyed(8, 1, 5).next_u64());
    REQUIRE(RngStream::keyed(7, 1, 5).next_u64() !=
            RngStream::keyed(7, 2, 5).next_u64());
}

TEST_CASE("uniform draws stay in [0,1) and look uniform") {
    RngStream rng(123);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.next_uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    // mean of U(0,1): se = 1/sqrt(12 n)
    REQUIRE(std::abs(sum / n - 0.5) < 4.0 / std::sqrt(12.0 * n));
}

TEST_CASE("gaussian draws have the right first two moments") {
    RngStream rng(99);
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = rng.next_gaussian();
        s1 += g;
        s2 += g * g;
    }
    const double mean = s1 / n;
    const double var = s2 / n - mean * mean;
    REQUIRE(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
    REQUIRE(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("next_below is unbiased over small ranges") {
    RngStream rng(5);
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) counts[rng.next_below(7)]++;
    for (int c : counts) REQUIRE(std::abs(c - n / 7) < 5 * std::sqrt(n / 7.0));
}
