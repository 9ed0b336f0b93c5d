#include "doctest.h"

#include <cmath>
#include <set>
#include <vector>

#include "shuttlesim/rng.hpp"

using namespace shuttlesim;

TEST_SUITE("rng") {

TEST_CASE("splitmix64 is a deterministic sequence") {
    uint64_t s1 = 42, s2 = 42;
    for (int i = 0; i < 8; ++i) CHECK(splitmix64(s1) == splitmix64(s2));
    CHECK(s1 == s2);
    uint64_t s3 = 43;
    CHECK(splitmix64(s3) != splitmix64(s1));
}

TEST_CASE("derive_stream_seed: stable, index- and master-sensitive") {
    CHECK(derive_stream_seed(1, 0) == derive_stream_seed(1, 0));
    std::set<uint64_t> seen;
    for (uint64_t master : {0ull, 1ull, 99ull})
        for (uint64_t idx = 0; idx < 50; ++idx) seen.insert(derive_stream_seed(master, idx));
    CHECK(seen.size() == 150); // no collisions across a small grid
}

TEST_CASE("identical seeds give identical streams") {
    RandomStream a(7), b(7);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
}

TEST_CASE("uniform range and moments") {
    RandomStream rng(11);
    const int n = 200000;
    double sum = 0, sumsq = 0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
        sumsq += u * u;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
    CHECK(var == doctest::Approx(1.0 / 12.0).epsilon(0.02));
}

TEST_CASE("uniform_pos is strictly positive") {
    RandomStream rng(12);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform_pos();
        CHECK(u > 0.0);
        CHECK(u <= 1.0);
    }
}

TEST_CASE("normal moments") {
    RandomStream rng(13);
    const int n = 200000;
    double sum = 0, sumsq = 0, sum4 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sumsq += z * z;
        sum4 += z * z * z * z;
    }
    CHECK(sum / n == doctest::Approx(0.0).epsilon(0.01));
    CHECK(sumsq / n == doctest::Approx(1.0).epsilon(0.02));
    CHECK(sum4 / n == doctest::Approx(3.0).epsilon(0.06)); // gaussian kurtosis
}

TEST_CASE("exponential mean is 1/rate") {
    RandomStream rng(14);
    const int n = 100000;
    double sum = 0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.exponential(2.5);
        CHECK(x >= 0.0);
        sum += x;
    }
    CHECK(sum / n == doctest::Approx(0.4).epsilon(0.02));
}

TEST_CASE("bernoulli frequency and edge probabilities") {
    RandomStream rng(15);
    int hits = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) hits += rng.bernoulli(0.3) ? 1 : 0;
    CHECK(hits / static_cast<double>(n) == doctest::Approx(0.3).epsilon(0.03));
    for (int i = 0; i < 1000; ++i) {
        CHECK_FALSE(rng.bernoulli(0.0));
        CHECK(rng.bernoulli(1.0));
    }
}

TEST_CASE("below(n) stays in range and covers it") {
    RandomStream rng(16);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const uint64_t k = rng.below(7);
        REQUIRE(k < 7);
        ++counts[static_cast<int>(k)];
    }
    for (int c : counts) CHECK(c == doctest::Approx(10000).epsilon(0.05));
}

} // TEST_SUITE
