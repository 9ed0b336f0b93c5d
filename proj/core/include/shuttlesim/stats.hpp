#pragma once

#include <functional>
#include <span>
#include <vector>

namespace shuttlesim {

double mean(std::span<const double> v);
double variance(std::span<const double> v);      // unbiased (n-1)
double stddev(std::span<const double> v);
double rms(std::span<const double> v);
double pearson(std::span<const double> a, std::span<const double> b);

// Ordinary least squares y = a + b*x. Returns {a, b}.
struct LinFit {
    double intercept = 0.0;
    double slope = 0.0;
};
LinFit linear_fit(std::span<const double> x, std::span<const double> y);

// log I0(z) and I1(z)/I0(z), stable for large z.
double log_bessel_i0(double z);
double bessel_i1_over_i0(double z);

// Rice distribution with noncentrality nu >= 0 and scale sigma > 0.
double rice_pdf(double x, double nu, double sigma);
double rice_log_pdf(double x, double nu, double sigma);
// CDF by adaptive Simpson integration of the pdf (exact enough for KS use).
double rice_cdf(double x, double nu, double sigma);

// One-sample Kolmogorov-Smirnov test against an arbitrary CDF.
struct KsResult {
    double statistic = 0.0;
    double p_value = 0.0;
    std::size_t n = 0;
};
KsResult ks_test(std::vector<double> samples, const std::function<double(double)>& cdf);

// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^{k-1} e^{-2 k^2 lambda^2}.
double kolmogorov_q(double lambda);

} // namespace shuttlesim
