#include "shuttlesim/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "shuttlesim/errors.hpp"
#include "shuttlesim/fit.hpp"
#include "shuttlesim/io.hpp"
#include "shuttlesim/rng.hpp"
#include "shuttlesim/stats.hpp"

#include <nlohmann/json.hpp>

namespace shuttlesim {

namespace {

constexpr double kAcfFitFloor = 0.05; // fit window: lags with acf above this

int grid_count(double extent, double spacing) {
    return static_cast<int>(std::floor(extent / spacing + 1e-9)) + 1;
}

// Truncated Gaussian taps exp(-(j dx)^2 / (2 w^2)), normalized to unit sum of
// squares so that convolving unit white noise keeps unit variance per axis.
std::vector<double> kernel_taps(double width, double spacing) {
    const int radius = static_cast<int>(std::ceil(4.0 * width / spacing));
    std::vector<double> taps(2 * radius + 1);
    double sum_sq = 0.0;
    for (int j = -radius; j <= radius; ++j) {
        const double t = std::exp(-0.5 * (j * spacing) * (j * spacing) / (width * width));
        taps[j + radius] = t;
        sum_sq += t * t;
    }
    const double norm = 1.0 / std::sqrt(sum_sq);
    for (double& t : taps) t *= norm;
    return taps;
}

// In-place separable convolution along one axis of a row-major (nx x ny)
// field. The caller guarantees a margin of at least taps radius, so clamped
// indexing never reaches the cropped core region.
void convolve_axis(std::vector<double>& f, int nx, int ny, const std::vector<double>& taps,
                   bool along_x) {
    const int radius = static_cast<int>(taps.size() / 2);
    std::vector<double> scratch(along_x ? nx : ny);
    if (along_x) {
        for (int iy = 0; iy < ny; ++iy) {
            double* row = f.data() + static_cast<std::size_t>(iy) * nx;
            for (int ix = 0; ix < nx; ++ix) {
                double acc = 0.0;
                const int j0 = std::max(-radius, -ix);
                const int j1 = std::min(radius, nx - 1 - ix);
                for (int j = j0; j <= j1; ++j) acc += taps[j + radius] * row[ix + j];
                scratch[ix] = acc;
            }
            std::copy(scratch.begin(), scratch.end(), row);
        }
    } else {
        for (int ix = 0; ix < nx; ++ix) {
            for (int iy = 0; iy < ny; ++iy) {
                double acc = 0.0;
                const int j0 = std::max(-radius, -iy);
                const int j1 = std::min(radius, ny - 1 - iy);
                for (int j = j0; j <= j1; ++j)
                    acc += taps[j + radius] * f[static_cast<std::size_t>(iy + j) * nx + ix];
                scratch[iy] = acc;
            }
            for (int iy = 0; iy < ny; ++iy) f[static_cast<std::size_t>(iy) * nx + ix] = scratch[iy];
        }
    }
}

// Accumulates per-row normalized acf values into `sum` (length max_lag + 1).
// Returns false when the row has no variance.
bool accumulate_row_acf(std::span<const double> row, int max_lag, std::vector<double>& sum) {
    const std::size_t n = row.size();
    double m = 0.0;
    for (double v : row) m += v;
    m /= static_cast<double>(n);
    double denom = 0.0;
    for (double v : row) denom += (v - m) * (v - m);
    if (denom <= 0.0) return false;
    for (int k = 0; k <= max_lag; ++k) {
        double num = 0.0;
        for (std::size_t i = 0; i + k < n; ++i) num += (row[i] - m) * (row[i + k] - m);
        sum[k] += num / denom;
    }
    return true;
}

// Monte-Carlo measurement of the acf-fitted correlation length produced by a
// kernel of the given width: long 1D complex-noise rows, shared across
// bisection candidates (common random numbers).
struct CalibrationRows {
    int n_core = 4096;
    int n_rows = 48;
    int margin = 0;
    std::vector<double> re, im; // row-major (n_core + 2*margin) per row

    CalibrationRows(double spacing, double w_max, uint64_t seed) {
        margin = static_cast<int>(std::ceil(4.0 * w_max / spacing));
        const std::size_t len = static_cast<std::size_t>(n_core + 2 * margin);
        re.resize(len * n_rows);
        im.resize(len * n_rows);
        for (int r = 0; r < n_rows; ++r) {
            RandomStream stream(derive_stream_seed(seed, static_cast<uint64_t>(r)));
            for (std::size_t i = 0; i < len; ++i) {
                re[r * len + i] = stream.normal();
                im[r * len + i] = stream.normal();
            }
        }
    }

    double measure_a(double width, double spacing, int max_lag) const {
        const auto taps = kernel_taps(width, spacing);
        const int radius = static_cast<int>(taps.size() / 2);
        require(radius <= margin, Errc::invalid_params, "kernel exceeds calibration margin");
        const std::size_t len = static_cast<std::size_t>(n_core + 2 * margin);
        std::vector<double> evs(n_core);
        std::vector<double> acf_sum(max_lag + 1, 0.0);
        int used = 0;
        for (int r = 0; r < n_rows; ++r) {
            const double* prow_re = re.data() + r * len;
            const double* prow_im = im.data() + r * len;
            for (int i = 0; i < n_core; ++i) {
                double cre = 0.0, cim = 0.0;
                const int base = i + margin - radius;
                for (int j = 0; j < 2 * radius + 1; ++j) {
                    cre += taps[j] * prow_re[base + j];
                    cim += taps[j] * prow_im[base + j];
                }
                evs[i] = 2.0 * std::hypot(cre, cim);
            }
            if (accumulate_row_acf(evs, max_lag, acf_sum)) ++used;
        }
        require(used > 0, Errc::zero_variance, "calibration rows degenerate");
        AcfResult acf;
        acf.spacing = spacing;
        acf.lags.resize(acf_sum.size());
        acf.acf_values.resize(acf_sum.size());
        for (std::size_t k = 0; k < acf_sum.size(); ++k) {
            acf.lags[k] = static_cast<double>(k) * spacing;
            acf.acf_values[k] = acf_sum[k] / used;
        }
        return fit_acf(acf);
    }
};

std::map<std::pair<double, double>, double>& calibration_cache() {
    static std::map<std::pair<double, double>, double> cache;
    return cache;
}
std::mutex& calibration_mutex() {
    static std::mutex m;
    return m;
}

} // namespace

void LandscapeConfig::validate() const {
    require(grid_spacing_nm > 0.0, Errc::invalid_config, "grid spacing must be positive");
    require(extent_x_nm > 0.0 && extent_y_nm > 0.0, Errc::invalid_config,
            "extents must be positive");
    require(a_dot_nm > 0.0, Errc::invalid_config, "a_dot must be positive");
    require(rice_sigma_ueV > 0.0, Errc::invalid_config, "rice_sigma must be positive");
    require(rice_nu_ueV >= 0.0, Errc::invalid_config, "rice_nu must be non-negative");
    require(g_dev_rms >= 0.0, Errc::invalid_config, "g_dev_rms must be non-negative");
    // x carries the shuttling statistics and must hold several correlation
    // lengths; y may be a narrow channel (the synthesis pads the kernel).
    require(extent_x_nm >= 4.0 * a_dot_nm, Errc::invalid_config,
            "x extent must be at least 4*a_dot");
    require(extent_y_nm >= 2.0 * grid_spacing_nm, Errc::invalid_config,
            "y extent must cover at least three grid rows");
    require(grid_spacing_nm <= a_dot_nm / 3.0, Errc::invalid_config,
            "grid too coarse: spacing must be <= a_dot/3");
    constants.validate();
    const double npts = static_cast<double>(grid_count(extent_x_nm, grid_spacing_nm)) *
                        static_cast<double>(grid_count(extent_y_nm, grid_spacing_nm));
    require(npts <= max_grid_points, Errc::invalid_config, "grid exceeds max_grid_points budget");
}

double g_dev_kernel_width(double a_dot_nm) {
    require(a_dot_nm > 0.0, Errc::invalid_params, "a_dot must be positive");
    return 0.5 * a_dot_nm * std::sqrt(4.0 - kPi);
}

double calibrate_correlation_kernel(double a_dot_nm, double grid_spacing_nm) {
    require(grid_spacing_nm > 0.0, Errc::invalid_params, "grid spacing must be positive");
    require(a_dot_nm > 3.0 * grid_spacing_nm, Errc::invalid_params,
            "a_dot must exceed 3*grid_spacing");
    {
        std::lock_guard<std::mutex> lock(calibration_mutex());
        auto it = calibration_cache().find({a_dot_nm, grid_spacing_nm});
        if (it != calibration_cache().end()) return it->second;
    }

    // Initial guess from matching the small-lag curvature of the modulus acf:
    // w ~ a*sqrt((4-pi)/2) ~= 0.655*a.
    double lo = 0.35 * a_dot_nm;
    double hi = 1.10 * a_dot_nm;
    const int max_lag = static_cast<int>(std::ceil(3.5 * a_dot_nm / grid_spacing_nm));
    constexpr uint64_t kCalibrationSeed = 0x5ca1ab1e0ddba11ULL;
    CalibrationRows rows(grid_spacing_nm, 2.2 * a_dot_nm, kCalibrationSeed);

    auto measure = [&](double w) { return rows.measure_a(w, grid_spacing_nm, max_lag); };

    double a_lo = measure(lo), a_hi = measure(hi);
    int guard = 0;
    while (a_lo > a_dot_nm && guard++ < 5) {
        lo *= 0.6;
        a_lo = measure(lo);
    }
    while (a_hi < a_dot_nm && guard++ < 10) {
        hi = std::min(hi * 1.4, 2.2 * a_dot_nm);
        a_hi = measure(hi);
        if (hi >= 2.2 * a_dot_nm && a_hi < a_dot_nm) break;
    }
    require(a_lo <= a_dot_nm && a_hi >= a_dot_nm, Errc::non_convergence,
            "kernel calibration failed to bracket the target correlation length");

    double w = 0.5 * (lo + hi);
    const double tol = 0.005 * a_dot_nm;
    bool converged = false;
    for (int it = 0; it < 40; ++it) {
        w = 0.5 * (lo + hi);
        const double a_mid = measure(w);
        if (std::abs(a_mid - a_dot_nm) <= tol) {
            converged = true;
            break;
        }
        if (a_mid < a_dot_nm)
            lo = w;
        else
            hi = w;
        if (hi - lo < 1e-6 * a_dot_nm) {
            converged = true;
            break;
        }
    }
    require(converged, Errc::non_convergence, "kernel calibration bisection did not converge");

    std::lock_guard<std::mutex> lock(calibration_mutex());
    calibration_cache()[{a_dot_nm, grid_spacing_nm}] = w;
    return w;
}

ValleyLandscape ValleyLandscape::generate(const LandscapeConfig& config) {
    config.validate();
    const double dx = config.grid_spacing_nm;
    const int nx = grid_count(config.extent_x_nm, dx);
    const int ny = grid_count(config.extent_y_nm, dx);

    const double w_delta = calibrate_correlation_kernel(config.a_dot_nm, dx);
    const double w_g = g_dev_kernel_width(config.a_dot_nm);
    const auto taps_delta = kernel_taps(w_delta, dx);
    const auto taps_g = kernel_taps(w_g, dx);
    const int margin = static_cast<int>(std::max(taps_delta.size(), taps_g.size()) / 2);

    const int px = nx + 2 * margin;
    const int py = ny + 2 * margin;
    require(static_cast<double>(px) * py <= 4.0 * config.max_grid_points, Errc::invalid_config,
            "padded generation grid exceeds memory budget");

    const std::size_t pn = static_cast<std::size_t>(px) * py;
    std::vector<double> re(pn), im(pn), gp(pn), gm(pn);
    {
        // Fixed draw order: one stream per field, row-major over the padded
        // grid, so the result is independent of everything but the config.
        RandomStream s_delta(derive_stream_seed(config.seed, 0));
        for (std::size_t i = 0; i < pn; ++i) {
            re[i] = s_delta.normal();
            im[i] = s_delta.normal();
        }
        RandomStream s_gp(derive_stream_seed(config.seed, 1));
        for (std::size_t i = 0; i < pn; ++i) gp[i] = s_gp.normal();
        RandomStream s_gm(derive_stream_seed(config.seed, 2));
        for (std::size_t i = 0; i < pn; ++i) gm[i] = s_gm.normal();
    }
    convolve_axis(re, px, py, taps_delta, true);
    convolve_axis(re, px, py, taps_delta, false);
    convolve_axis(im, px, py, taps_delta, true);
    convolve_axis(im, px, py, taps_delta, false);
    convolve_axis(gp, px, py, taps_g, true);
    convolve_axis(gp, px, py, taps_g, false);
    convolve_axis(gm, px, py, taps_g, true);
    convolve_axis(gm, px, py, taps_g, false);

    // 2|delta| ~ Rice(nu, sigma): quadratures sigma/2 around the real offset nu/2.
    const double scale = 0.5 * config.rice_sigma_ueV;
    const double offset = 0.5 * config.rice_nu_ueV;

    ValleyLandscape out;
    out.config_ = config;
    out.nx_ = nx;
    out.ny_ = ny;
    out.delta_.resize(static_cast<std::size_t>(nx) * ny);
    out.evs_.resize(out.delta_.size());
    out.dg_plus_.resize(out.delta_.size());
    out.dg_minus_.resize(out.delta_.size());
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            const std::size_t src = static_cast<std::size_t>(iy + margin) * px + (ix + margin);
            const std::size_t dst = static_cast<std::size_t>(iy) * nx + ix;
            out.delta_[dst] = {offset + scale * re[src], scale * im[src]};
            out.evs_[dst] = 2.0 * std::abs(out.delta_[dst]);
            out.dg_plus_[dst] = config.g_dev_rms * gp[src];
            out.dg_minus_[dst] = config.g_dev_rms * gm[src];
        }
    }
    return out;
}

ValleyLandscape ValleyLandscape::from_fields(const LandscapeConfig& config,
                                             std::vector<std::complex<double>> delta,
                                             std::vector<double> dg_plus,
                                             std::vector<double> dg_minus) {
    config.validate();
    const int nx = grid_count(config.extent_x_nm, config.grid_spacing_nm);
    const int ny = grid_count(config.extent_y_nm, config.grid_spacing_nm);
    const std::size_t n = static_cast<std::size_t>(nx) * ny;
    require(delta.size() == n && dg_plus.size() == n && dg_minus.size() == n,
            Errc::invalid_params, "field size does not match config grid");
    ValleyLandscape out;
    out.config_ = config;
    out.nx_ = nx;
    out.ny_ = ny;
    out.delta_ = std::move(delta);
    out.dg_plus_ = std::move(dg_plus);
    out.dg_minus_ = std::move(dg_minus);
    out.evs_.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.evs_[i] = 2.0 * std::abs(out.delta_[i]);
    return out;
}

void ValleyLandscape::locate(double x, double y, int& ix, int& iy, double& fx, double& fy) const {
    const double dx = spacing();
    const double eps = 1e-9 * dx;
    require(x >= -eps && x <= extent_x() + eps, Errc::out_of_bounds, "x outside landscape extent");
    require(y >= y_min() - eps && y <= y_max() + eps, Errc::out_of_bounds,
            "y outside landscape extent");
    const double gx = std::clamp(x / dx, 0.0, static_cast<double>(nx_ - 1));
    const double gy = std::clamp((y - y_min()) / dx, 0.0, static_cast<double>(ny_ - 1));
    ix = std::min(static_cast<int>(gx), nx_ - 2);
    iy = std::min(static_cast<int>(gy), ny_ - 2);
    if (nx_ == 1) ix = 0;
    if (ny_ == 1) iy = 0;
    fx = gx - ix;
    fy = gy - iy;
}

double ValleyLandscape::bilinear(const std::vector<double>& f, double x, double y) const {
    int ix, iy;
    double fx, fy;
    locate(x, y, ix, iy, fx, fy);
    const double f00 = f[idx(ix, iy)];
    const double f10 = f[idx(std::min(ix + 1, nx_ - 1), iy)];
    const double f01 = f[idx(ix, std::min(iy + 1, ny_ - 1))];
    const double f11 = f[idx(std::min(ix + 1, nx_ - 1), std::min(iy + 1, ny_ - 1))];
    return (1 - fx) * (1 - fy) * f00 + fx * (1 - fy) * f10 + (1 - fx) * fy * f01 + fx * fy * f11;
}

double ValleyLandscape::evs_at(double x, double y) const { return bilinear(evs_, x, y); }

std::complex<double> ValleyLandscape::delta_at(double x, double y) const {
    int ix, iy;
    double fx, fy;
    locate(x, y, ix, iy, fx, fy);
    const auto f00 = delta_[idx(ix, iy)];
    const auto f10 = delta_[idx(std::min(ix + 1, nx_ - 1), iy)];
    const auto f01 = delta_[idx(ix, std::min(iy + 1, ny_ - 1))];
    const auto f11 = delta_[idx(std::min(ix + 1, nx_ - 1), std::min(iy + 1, ny_ - 1))];
    return (1 - fx) * (1 - fy) * f00 + fx * (1 - fy) * f10 + (1 - fx) * fy * f01 + fx * fy * f11;
}

double ValleyLandscape::dg_at(double x, double y, Valley v) const {
    return bilinear(v == Valley::plus ? dg_plus_ : dg_minus_, x, y);
}

std::span<const double> ValleyLandscape::evs_row(int iy) const {
    require(iy >= 0 && iy < ny_, Errc::out_of_bounds, "row index outside grid");
    return {evs_.data() + static_cast<std::size_t>(iy) * nx_, static_cast<std::size_t>(nx_)};
}

std::vector<double> ValleyLandscape::decorrelated_evs(double min_spacing_nm) const {
    require(min_spacing_nm > 0.0, Errc::invalid_params, "min spacing must be positive");
    const int stride = std::max(1, static_cast<int>(std::ceil(min_spacing_nm / spacing())));
    std::vector<double> out;
    for (int iy = 0; iy < ny_; iy += stride)
        for (int ix = 0; ix < nx_; ix += stride) out.push_back(evs_[idx(ix, iy)]);
    return out;
}

RiceFit fit_rice(std::span<const double> samples) {
    require(samples.size() >= 100, Errc::invalid_params, "need at least 100 samples");
    double xmax = 0.0, xmin = std::numeric_limits<double>::infinity();
    for (double x : samples) {
        require(x >= 0.0, Errc::invalid_params, "Rice samples must be non-negative");
        xmax = std::max(xmax, x);
        xmin = std::min(xmin, x);
    }
    require(xmax > xmin, Errc::degenerate_samples, "all samples equal");

    const double floor_x = 1e-12 * xmax;
    const std::size_t n = samples.size();

    auto nll = [&](double nu, double sigma) {
        double acc = 0.0;
        for (double x : samples) acc -= rice_log_pdf(std::max(x, floor_x), nu, sigma);
        return acc;
    };

    // Moment-based start: E[x^2] = nu^2 + 2 sigma^2, E[x^4] = nu^4 + 8 sigma^2 nu^2 + 8 sigma^4.
    double m2 = 0.0, m4 = 0.0;
    for (double x : samples) {
        m2 += x * x;
        m4 += x * x * x * x;
    }
    m2 /= static_cast<double>(n);
    m4 /= static_cast<double>(n);
    const double nu4 = std::max(0.0, 2.0 * m2 * m2 - m4);
    double nu0 = std::pow(nu4, 0.25);
    double sigma0 = std::sqrt(std::max((m2 - nu0 * nu0) / 2.0, 1e-6 * m2));

    NmOptions nm_opts;
    nm_opts.max_iterations = 600;
    nm_opts.ftol = 1e-10;
    Eigen::VectorXd start(2);
    start << nu0, std::log(sigma0);
    auto objective = [&](const Eigen::VectorXd& p) { return nll(std::abs(p[0]), std::exp(p[1])); };
    NmResult opt = nelder_mead(objective, start, nm_opts);
    require(opt.converged, Errc::non_convergence, "Rice likelihood optimization failed");

    RiceFit fit;
    fit.nu = std::abs(opt.params[0]);
    fit.sigma = std::exp(opt.params[1]);
    fit.log_likelihood = -opt.value;
    fit.n = n;

    // Observed information in (nu, sigma). The pdf is even in nu, so central
    // differences are valid across nu = 0; for Rayleigh-like data the nu
    // curvature legitimately vanishes -> profile-likelihood fallback below.
    auto nll_vec = [&](const Eigen::VectorXd& p) { return nll(std::abs(p[0]), p[1]); };
    Eigen::VectorXd at(2);
    at << fit.nu, fit.sigma;
    const Eigen::MatrixXd hess = numeric_hessian(nll_vec, at, 1e-4);

    bool have_cov = false;
    const double det = hess(0, 0) * hess(1, 1) - hess(0, 1) * hess(1, 0);
    if (std::isfinite(det) && det > 0.0 && hess(0, 0) > 0.0) {
        const double inv00 = hess(1, 1) / det;
        const double inv11 = hess(0, 0) / det;
        if (inv00 > 0.0 && inv11 > 0.0) {
            fit.nu_stderr = std::sqrt(inv00);
            fit.sigma_stderr = std::sqrt(inv11);
            have_cov = true;
        }
    }
    if (!have_cov) {
        if (hess(1, 1) > 0.0) fit.sigma_stderr = std::sqrt(1.0 / hess(1, 1));
        // Profile half-width at dNLL = 0.5 with sigma fixed at the MLE.
        const double base = nll(fit.nu, fit.sigma);
        double lo = fit.nu, hi = std::max(fit.sigma, fit.nu + fit.sigma);
        int guard = 0;
        while (nll(hi, fit.sigma) - base < 0.5 && guard++ < 60) hi *= 1.5;
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (nll(mid, fit.sigma) - base < 0.5)
                lo = mid;
            else
                hi = mid;
        }
        fit.nu_stderr = 0.5 * (lo + hi) - fit.nu;
    }
    return fit;
}

AcfResult autocorrelation(std::span<const double> trace, double spacing, int max_lag) {
    require(spacing > 0.0, Errc::invalid_params, "spacing must be positive");
    require(trace.size() >= 50, Errc::invalid_params, "trace too short (need >= 50 points)");
    const int n = static_cast<int>(trace.size());
    int lags = max_lag > 0 ? std::min(max_lag, n - 2) : n / 2;
    AcfResult out;
    out.spacing = spacing;
    std::vector<double> sum(lags + 1, 0.0);
    if (!accumulate_row_acf(trace, lags, sum))
        fail(Errc::zero_variance, "trace has zero variance");
    out.lags.resize(sum.size());
    out.acf_values = std::move(sum);
    for (std::size_t k = 0; k < out.lags.size(); ++k)
        out.lags[k] = static_cast<double>(k) * spacing;
    return out;
}

double fit_acf(AcfResult& result) {
    require(result.lags.size() == result.acf_values.size() && result.lags.size() >= 5,
            Errc::invalid_params, "acf result too short");
    // Fit window: from lag 0 up to (excluding) the first dip below the floor.
    std::size_t m = result.acf_values.size();
    for (std::size_t k = 1; k < result.acf_values.size(); ++k) {
        if (result.acf_values[k] <= kAcfFitFloor) {
            m = k;
            break;
        }
    }
    require(m >= 4, Errc::underdetermined, "too few acf lags above fit floor");

    // Linearized start through the origin point acf(0)=1: ln r = -d^2/((4-pi) a^2).
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 1; k < m; ++k) {
        const double d2 = result.lags[k] * result.lags[k];
        sxx += d2 * d2;
        sxy += d2 * std::log(std::max(result.acf_values[k], 1e-12));
    }
    require(sxx > 0.0 && sxy < 0.0, Errc::underdetermined, "acf not decaying");
    const double slope = sxy / sxx;
    double a0 = std::sqrt(-1.0 / ((4.0 - kPi) * slope));

    auto residuals = [&](const Eigen::VectorXd& p) {
        const double a = std::exp(p[0]);
        Eigen::VectorXd r(static_cast<Eigen::Index>(m));
        for (std::size_t k = 0; k < m; ++k) {
            const double model =
                std::exp(-result.lags[k] * result.lags[k] / ((4.0 - kPi) * a * a));
            r[static_cast<Eigen::Index>(k)] = result.acf_values[k] - model;
        }
        return r;
    };
    Eigen::VectorXd p0(1);
    p0 << std::log(a0);
    LmOptions opts;
    LmResult lm = levenberg_marquardt(residuals, p0, opts);
    require(lm.converged, Errc::non_convergence, "acf fit did not converge");
    result.fitted_a_dot = std::exp(lm.params[0]);
    result.fit_residual = lm.residual_rms;
    return result.fitted_a_dot;
}

AcfResult averaged_row_acf(const ValleyLandscape& landscape, int max_lag) {
    const int n = landscape.nx();
    require(n >= 50, Errc::invalid_params, "landscape rows too short for acf");
    int lags = max_lag > 0 ? std::min(max_lag, n - 2) : n / 2;
    std::vector<double> sum(lags + 1, 0.0);
    int used = 0;
    for (int iy = 0; iy < landscape.ny(); ++iy)
        if (accumulate_row_acf(landscape.evs_row(iy), lags, sum)) ++used;
    require(used > 0, Errc::zero_variance, "all landscape rows have zero variance");
    AcfResult out;
    out.spacing = landscape.spacing();
    out.lags.resize(sum.size());
    out.acf_values.resize(sum.size());
    for (std::size_t k = 0; k < sum.size(); ++k) {
        out.lags[k] = static_cast<double>(k) * landscape.spacing();
        out.acf_values[k] = sum[k] / used;
    }
    return out;
}

namespace {

std::vector<double> sample_path_evs(const ValleyLandscape& landscape, const Path& path,
                                    double& dx_out) {
    const double dx = landscape.spacing();
    dx_out = dx;
    const int n = static_cast<int>(std::floor(landscape.extent_x() / dx + 1e-9)) + 1;
    std::vector<double> evs(n);
    for (int k = 0; k < n; ++k) {
        const double x = std::min(k * dx, landscape.extent_x());
        evs[k] = landscape.evs_at(x, path.y_at(x));
    }
    return evs;
}

} // namespace

std::vector<LowSpot> find_low_evs_spots(const ValleyLandscape& landscape, const Path& path,
                                        double threshold_ueV) {
    double dx;
    const auto evs = sample_path_evs(landscape, path, dx);
    const int n = static_cast<int>(evs.size());
    std::vector<LowSpot> spots;
    for (int k = 1; k + 1 < n; ++k) {
        if (!(evs[k] < threshold_ueV)) continue;
        if (!(evs[k] < evs[k - 1] && evs[k] <= evs[k + 1])) continue;
        LowSpot spot;
        spot.x_nm = k * dx;
        spot.evs_ueV = evs[k];
        // Centered differences at the flanking samples (one-sided at borders).
        spot.slope_left = (k >= 2) ? (evs[k] - evs[k - 2]) / (2.0 * dx)
                                   : (evs[k] - evs[k - 1]) / dx;
        spot.slope_right = (k + 2 < n) ? (evs[k + 2] - evs[k]) / (2.0 * dx)
                                       : (evs[k + 1] - evs[k]) / dx;
        spots.push_back(spot);
    }
    return spots;
}

std::vector<Crossing> resonance_crossings(const ValleyLandscape& landscape, const Path& path,
                                          double B_T) {
    require(B_T > 0.0, Errc::zero_field, "magnetic field must be positive");
    const double e_z = landscape.config().constants.zeeman(B_T);
    double dx;
    const auto evs = sample_path_evs(landscape, path, dx);
    const int n = static_cast<int>(evs.size());
    std::vector<Crossing> crossings;
    for (int k = 0; k + 1 < n; ++k) {
        const double f0 = evs[k] - e_z;
        const double f1 = evs[k + 1] - e_z;
        if (f0 == 0.0) {
            Crossing c;
            c.x_nm = k * dx;
            const double left = (k > 0) ? evs[k - 1] : evs[k];
            c.slope_abs = std::abs((evs[k + 1] - left) / ((k > 0 ? 2.0 : 1.0) * dx));
            crossings.push_back(c);
        } else if (f0 * f1 < 0.0) {
            Crossing c;
            const double t = f0 / (f0 - f1);
            c.x_nm = (k + t) * dx;
            c.slope_abs = std::abs((evs[k + 1] - evs[k]) / dx);
            crossings.push_back(c);
        }
    }
    if (n > 1 && evs[n - 1] - e_z == 0.0) {
        Crossing c;
        c.x_nm = (n - 1) * dx;
        c.slope_abs = std::abs((evs[n - 1] - evs[n - 2]) / dx);
        crossings.push_back(c);
    }
    return crossings;
}

void save_landscape(const std::filesystem::path& file, const ValleyLandscape& landscape) {
    const auto& cfg = landscape.config();
    nlohmann::json header{
        {"format", "shuttlesim-landscape"},
        {"version", 1},
        {"units", {{"length", "nm"}, {"energy", "ueV"}, {"field", "T"}}},
        {"config",
         {{"extent_x_nm", cfg.extent_x_nm},
          {"extent_y_nm", cfg.extent_y_nm},
          {"grid_spacing_nm", cfg.grid_spacing_nm},
          {"a_dot_nm", cfg.a_dot_nm},
          {"rice_nu_ueV", cfg.rice_nu_ueV},
          {"rice_sigma_ueV", cfg.rice_sigma_ueV},
          {"g_dev_rms", cfg.g_dev_rms},
          {"seed", cfg.seed},
          {"max_grid_points", cfg.max_grid_points},
          {"mu_B_ueV_per_T", cfg.constants.mu_B},
          {"hbar_ueV_ns", cfg.constants.hbar},
          {"g0", cfg.constants.g0}}},
    };
    Table table;
    table.columns = {"x_nm", "y_nm", "re_delta_ueV", "im_delta_ueV", "dg_plus", "dg_minus"};
    table.rows.reserve(static_cast<std::size_t>(landscape.nx()) * landscape.ny());
    for (int iy = 0; iy < landscape.ny(); ++iy) {
        const double y = landscape.y_min() + iy * landscape.spacing();
        for (int ix = 0; ix < landscape.nx(); ++ix) {
            const double x = ix * landscape.spacing();
            const auto d = landscape.delta_node(ix, iy);
            table.rows.push_back({x, y, d.real(), d.imag(),
                                  landscape.dg_node(ix, iy, Valley::plus),
                                  landscape.dg_node(ix, iy, Valley::minus)});
        }
    }
    write_header_csv(file, header, table);
}

ValleyLandscape load_landscape(const std::filesystem::path& file) {
    auto [header, table] = read_header_csv(file);
    require(header.value("format", "") == "shuttlesim-landscape", Errc::io_error,
            "not a landscape file");
    require(header.value("version", 0) == 1, Errc::io_error,
            "unsupported landscape file version");
    const auto& jc = header.at("config");
    LandscapeConfig cfg;
    cfg.extent_x_nm = jc.at("extent_x_nm").get<double>();
    cfg.extent_y_nm = jc.at("extent_y_nm").get<double>();
    cfg.grid_spacing_nm = jc.at("grid_spacing_nm").get<double>();
    cfg.a_dot_nm = jc.at("a_dot_nm").get<double>();
    cfg.rice_nu_ueV = jc.at("rice_nu_ueV").get<double>();
    cfg.rice_sigma_ueV = jc.at("rice_sigma_ueV").get<double>();
    cfg.g_dev_rms = jc.at("g_dev_rms").get<double>();
    cfg.seed = jc.at("seed").get<uint64_t>();
    cfg.max_grid_points = jc.value("max_grid_points", cfg.max_grid_points);
    cfg.constants.mu_B = jc.value("mu_B_ueV_per_T", cfg.constants.mu_B);
    cfg.constants.hbar = jc.value("hbar_ueV_ns", cfg.constants.hbar);
    cfg.constants.g0 = jc.value("g0", cfg.constants.g0);

    const int nx = grid_count(cfg.extent_x_nm, cfg.grid_spacing_nm);
    const int ny = grid_count(cfg.extent_y_nm, cfg.grid_spacing_nm);
    const std::size_t n = static_cast<std::size_t>(nx) * ny;
    require(table.rows.size() == n, Errc::io_error, "landscape row count mismatch");
    const int c_re = table.col_index("re_delta_ueV");
    const int c_im = table.col_index("im_delta_ueV");
    const int c_gp = table.col_index("dg_plus");
    const int c_gm = table.col_index("dg_minus");
    std::vector<std::complex<double>> delta(n);
    std::vector<double> gp(n), gm(n);
    for (std::size_t i = 0; i < n; ++i) {
        delta[i] = {table.rows[i][c_re], table.rows[i][c_im]};
        gp[i] = table.rows[i][c_gp];
        gm[i] = table.rows[i][c_gm];
    }
    return ValleyLandscape::from_fields(cfg, std::move(delta), std::move(gp), std::move(gm));
}

} // namespace shuttlesim
