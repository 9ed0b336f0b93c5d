#include "doctest.h"

#include <cmath>
#include <vector>

#include "shuttlesim/errors.hpp"
#include "shuttlesim/rng.hpp"
#include "shuttlesim/stats.hpp"

using namespace shuttlesim;

TEST_SUITE("stats") {

TEST_CASE("mean / variance / stddev / rms on a known vector") {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    CHECK(mean(v) == doctest::Approx(2.5));
    CHECK(variance(v) == doctest::Approx(5.0 / 3.0)); // unbiased
    CHECK(stddev(v) == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(rms(v) == doctest::Approx(std::sqrt(7.5)));
}

TEST_CASE("pearson: exact on linear data, zero on even symmetry") {
    const std::vector<double> x{-2.0, -1.0, 0.0, 1.0, 2.0};
    std::vector<double> y;
    for (double xi : x) y.push_back(3.0 - 2.0 * xi);
    CHECK(pearson(x, y) == doctest::Approx(-1.0));
    std::vector<double> y2;
    for (double xi : x) y2.push_back(xi * xi); // uncorrelated with x by symmetry
    CHECK(pearson(x, y2) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("linear_fit recovers exact slope and intercept") {
    std::vector<double> x, y;
    for (int i = 0; i < 9; ++i) {
        x.push_back(0.5 * i);
        y.push_back(1.25 - 0.75 * x.back());
    }
    const LinFit f = linear_fit(x, y);
    CHECK(f.intercept == doctest::Approx(1.25).epsilon(1e-12));
    CHECK(f.slope == doctest::Approx(-0.75).epsilon(1e-12));
}

// Bessel values pinned against an independent special-function evaluation.
TEST_CASE("log I0 and I1/I0 anchors") {
    CHECK(log_bessel_i0(0.0) == doctest::Approx(0.0));
    CHECK(log_bessel_i0(1.0) == doctest::Approx(0.23591435850717854).epsilon(1e-10));
    CHECK(log_bessel_i0(500.0) == doctest::Approx(495.9740076681067).epsilon(1e-10));
    CHECK(bessel_i1_over_i0(1.0) == doctest::Approx(0.4463899658965347).epsilon(1e-10));
    // the large-argument branch truncates the asymptotic series at x^-3
    CHECK(bessel_i1_over_i0(100.0) == doctest::Approx(0.9949873730051687).epsilon(1e-8));
}

TEST_CASE("rice pdf / cdf anchors") {
    // nu = 0 reduces to Rayleigh
    CHECK(rice_pdf(1.0, 0.0, 1.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
    CHECK(rice_cdf(1.0, 0.0, 1.0) == doctest::Approx(1.0 - std::exp(-0.5)).epsilon(1e-7));
    CHECK(rice_pdf(2.0, 1.5, 0.8) == doctest::Approx(0.4883656781876672).epsilon(1e-10));
    CHECK(rice_cdf(2.0, 1.5, 0.8) == doctest::Approx(0.6501771865707817).epsilon(1e-6));
    CHECK(rice_log_pdf(2.0, 1.5, 0.8) ==
          doctest::Approx(std::log(0.4883656781876672)).epsilon(1e-10));
    CHECK(rice_cdf(0.0, 1.5, 0.8) == doctest::Approx(0.0));
    CHECK(rice_cdf(50.0, 1.5, 0.8) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("rice cdf is monotone") {
    double prev = -1.0;
    for (double x = 0.0; x <= 6.0; x += 0.25) {
        const double c = rice_cdf(x, 1.0, 0.7);
        CHECK(c >= prev);
        prev = c;
    }
}

TEST_CASE("kolmogorov survival anchors") {
    CHECK(kolmogorov_q(0.5) == doctest::Approx(0.9639452436648751).epsilon(1e-10));
    CHECK(kolmogorov_q(1.0) == doctest::Approx(0.26999967167735456).epsilon(1e-10));
    CHECK(kolmogorov_q(2.0) == doctest::Approx(0.0006709252557796953).epsilon(1e-8));
}

TEST_CASE("ks_test accepts matching samples and rejects a shifted model") {
    RandomStream rng(101);
    std::vector<double> samples;
    for (int i = 0; i < 400; ++i) {
        const double z1 = rng.normal(), z2 = rng.normal();
        samples.push_back(std::hypot(1.5 + 0.8 * z1, 0.8 * z2)); // exact Rice(1.5, 0.8)
    }
    const auto right = ks_test(samples, [](double x) { return rice_cdf(x, 1.5, 0.8); });
    CHECK(right.n == samples.size());
    CHECK(right.p_value > 0.01);
    const auto wrong = ks_test(samples, [](double x) { return rice_cdf(x, 3.0, 0.8); });
    CHECK(wrong.p_value < 1e-4);
    CHECK(wrong.statistic > right.statistic);
}

TEST_CASE("degenerate inputs are rejected") {
    const std::vector<double> empty;
    CHECK_THROWS_AS((void)mean(empty), SimError);
    const std::vector<double> one{1.0};
    CHECK_THROWS_AS((void)variance(one), SimError);
    const std::vector<double> flat{2.0, 2.0, 2.0};
    CHECK_THROWS_AS((void)pearson(flat, flat), SimError);
}

} // TEST_SUITE
