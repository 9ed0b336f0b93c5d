#include "shuttlesim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "shuttlesim/errors.hpp"
#include "shuttlesim/parallel.hpp"
#include "shuttlesim/units.hpp"

namespace shuttlesim {

double mean(std::span<const double> v) {
    require(!v.empty(), Errc::degenerate_samples, "mean of empty sample");
    KahanSum s;
    for (double x : v) s.add(x);
    return s.value() / static_cast<double>(v.size());
}

double variance(std::span<const double> v) {
    require(v.size() >= 2, Errc::degenerate_samples, "variance needs >= 2 samples");
    const double m = mean(v);
    KahanSum s;
    for (double x : v) s.add((x - m) * (x - m));
    return s.value() / static_cast<double>(v.size() - 1);
}

double stddev(std::span<const double> v) { return std::sqrt(variance(v)); }

double rms(std::span<const double> v) {
    require(!v.empty(), Errc::degenerate_samples, "rms of empty sample");
    KahanSum s;
    for (double x : v) s.add(x * x);
    return std::sqrt(s.value() / static_cast<double>(v.size()));
}

double pearson(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), Errc::mismatched_axes, "pearson: size mismatch");
    require(a.size() >= 2, Errc::degenerate_samples, "pearson needs >= 2 samples");
    const double ma = mean(a), mb = mean(b);
    KahanSum sab, saa, sbb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab.add(da * db);
        saa.add(da * da);
        sbb.add(db * db);
    }
    const double denom = std::sqrt(saa.value() * sbb.value());
    require(denom > 0.0, Errc::zero_variance, "pearson: zero variance input");
    return sab.value() / denom;
}

LinFit linear_fit(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size(), Errc::mismatched_axes, "linear_fit: size mismatch");
    require(x.size() >= 2, Errc::degenerate_samples, "linear_fit needs >= 2 points");
    const double mx = mean(x), my = mean(y);
    KahanSum sxx, sxy;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx.add((x[i] - mx) * (x[i] - mx));
        sxy.add((x[i] - mx) * (y[i] - my));
    }
    require(sxx.value() > 0.0, Errc::zero_variance, "linear_fit: degenerate abscissa");
    LinFit f;
    f.slope = sxy.value() / sxx.value();
    f.intercept = my - f.slope * mx;
    return f;
}

double log_bessel_i0(double z) {
    z = std::abs(z);
    if (z < 30.0) return std::log(std::cyl_bessel_i(0.0, z));
    // Asymptotic: I0(z) ~ e^z / sqrt(2 pi z) * (1 + 1/(8z) + 9/(128 z^2) + ...)
    const double inv = 1.0 / z;
    const double series = 1.0 + inv * (0.125 + inv * (0.0703125 + inv * 0.0732421875));
    return z - 0.5 * std::log(2.0 * kPi * z) + std::log(series);
}

double bessel_i1_over_i0(double z) {
    z = std::abs(z);
    if (z < 30.0) return std::cyl_bessel_i(1.0, z) / std::cyl_bessel_i(0.0, z);
    // Ratio expansion: I1/I0 ~ 1 - 1/(2z) - 1/(8z^2) - 1/(8z^3)
    const double inv = 1.0 / z;
    return 1.0 - inv * (0.5 + inv * (0.125 + inv * 0.125));
}

double rice_log_pdf(double x, double nu, double sigma) {
    require(sigma > 0.0, Errc::invalid_params, "rice: sigma must be > 0");
    require(nu >= 0.0, Errc::invalid_params, "rice: nu must be >= 0");
    if (x <= 0.0) return -std::numeric_limits<double>::infinity();
    const double s2 = sigma * sigma;
    return std::log(x / s2) - (x * x + nu * nu) / (2.0 * s2) + log_bessel_i0(x * nu / s2);
}

double rice_pdf(double x, double nu, double sigma) {
    const double lp = rice_log_pdf(x, nu, sigma);
    return std::isfinite(lp) ? std::exp(lp) : 0.0;
}

namespace {
double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    // n must be even
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}
} // namespace

double rice_cdf(double x, double nu, double sigma) {
    require(sigma > 0.0, Errc::invalid_params, "rice: sigma must be > 0");
    if (x <= 0.0) return 0.0;
    // The pdf is smooth and concentrated within a few sigma of nu; a composite
    // Simpson rule with resolution tied to sigma is accurate to ~1e-9 here,
    // far below KS statistic scales.
    auto f = [&](double t) { return rice_pdf(t, nu, sigma); };
    const int n = std::clamp(static_cast<int>(64.0 * x / sigma), 64, 4096) & ~1;
    const double c = simpson(f, 0.0, x, n);
    return std::clamp(c, 0.0, 1.0);
}

double kolmogorov_q(double lambda) {
    if (lambda < 1e-8) return 1.0;
    double q = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        q += sign * term;
        sign = -sign;
        if (term < 1e-12) break;
    }
    return std::clamp(2.0 * q, 0.0, 1.0);
}

KsResult ks_test(std::vector<double> samples, const std::function<double(double)>& cdf) {
    require(samples.size() >= 5, Errc::degenerate_samples, "ks_test needs >= 5 samples");
    std::sort(samples.begin(), samples.end());
    const auto n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double c = cdf(samples[i]);
        d = std::max(d, std::abs(c - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - c));
    }
    KsResult r;
    r.statistic = d;
    r.n = samples.size();
    // Stephens' small-sample correction to the asymptotic distribution.
    const double sq = std::sqrt(n);
    r.p_value = kolmogorov_q(d * (sq + 0.12 + 0.11 / sq));
    return r;
}

} // namespace shuttlesim
