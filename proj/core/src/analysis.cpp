#include "shuttlesim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <functional>
#include <limits>

#include "shuttlesim/errors.hpp"
#include "shuttlesim/fft.hpp"
#include "shuttlesim/fit.hpp"
#include "shuttlesim/io.hpp"
#include "shuttlesim/parallel.hpp"
#include "shuttlesim/rng.hpp"
#include "shuttlesim/stats.hpp"

namespace shuttlesim {

namespace {

constexpr double kTwoPi = 2.0 * kPi;

double wrap_phase(double phi) {
    phi = std::fmod(phi, kTwoPi);
    if (phi < 0.0) phi += kTwoPi;
    return phi;
}

// Canonical form: amplitude >= 0, omega >= 0, phase in [0, 2pi).
void canonicalize_tone(double& a, double& w, double& phi) {
    if (w < 0.0) {
        w = -w;
        phi = -phi;
    }
    if (a < 0.0) {
        a = -a;
        phi += kPi;
    }
    phi = wrap_phase(phi);
}

struct ToneSeed {
    double omega = 0.0; // rad/ns
    double amplitude = 0.0;
};

// Mean-removed, Hann-windowed magnitude FFT of (t, y); top peaks as seeds.
std::vector<ToneSeed> spectral_seeds(std::span<const double> t, std::span<const double> y,
                                     std::size_t max_tones) {
    const std::size_t n = t.size();
    const double dt = (t.back() - t.front()) / static_cast<double>(n - 1);
    const double ybar = mean(y);
    std::vector<double> windowed(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double w = 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(i) /
                                                static_cast<double>(n - 1)));
        windowed[i] = (y[i] - ybar) * w;
    }
    const std::size_t padded = next_pow2(4 * n);
    const auto spectrum = fft_real(windowed, padded);
    std::vector<double> mag(padded / 2 + 1);
    for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::abs(spectrum[k]);
    const auto peaks = spectral_peaks(mag, 0.02, 3);
    std::vector<std::pair<double, std::size_t>> ranked; // (magnitude, bin)
    for (std::size_t k : peaks)
        if (k > 0) ranked.emplace_back(mag[k], k);
    std::sort(ranked.rbegin(), ranked.rend());
    std::vector<ToneSeed> seeds;
    for (const auto& [m, k] : ranked) {
        if (seeds.size() >= max_tones) break;
        ToneSeed s;
        s.omega = kTwoPi * static_cast<double>(k) / (static_cast<double>(padded) * dt);
        // Hann coherent gain 1/2 and one-sided spectrum fold another 1/2.
        s.amplitude = 4.0 * m / static_cast<double>(n);
        seeds.push_back(s);
    }
    return seeds;
}

struct PreparedTrace {
    std::vector<double> t;
    std::vector<double> y;
    double span = 0.0;
};

PreparedTrace prepare_trace(const SingletTrace& trace, int exclude_first, std::size_t min_points) {
    trace.validate();
    require(exclude_first >= 0, Errc::invalid_params, "exclude_first must be >= 0");
    require(trace.p_s.size() > static_cast<std::size_t>(exclude_first) + min_points - 1,
            Errc::invalid_params, "too few points after exclusion for a decay fit");
    PreparedTrace out;
    out.t.assign(trace.abscissa.begin() + exclude_first, trace.abscissa.end());
    out.y.assign(trace.p_s.begin() + exclude_first, trace.p_s.end());
    out.span = out.t.back() - out.t.front();
    require(out.span > 0.0, Errc::invalid_params, "degenerate abscissa span");
    return out;
}

double amplitude_floor(double residual_rms, std::size_t n) {
    return std::max(1e-6, 5.0 * residual_rms * std::sqrt(2.0 / static_cast<double>(n)));
}

} // namespace

void SingletTrace::validate() const {
    require(!abscissa.empty(), Errc::invalid_params, "empty trace");
    require(abscissa.size() == p_s.size(), Errc::mismatched_axes,
            "abscissa and p_s lengths differ");
    require(B_T >= 0.0, Errc::invalid_params, "negative field");
    for (std::size_t i = 0; i < abscissa.size(); ++i) {
        require(std::isfinite(abscissa[i]) && std::isfinite(p_s[i]), Errc::invalid_params,
                "non-finite trace entry");
        require(p_s[i] > -0.5 && p_s[i] < 1.5, Errc::invalid_params,
                "singlet probability far outside [0, 1]");
        if (i > 0)
            require(abscissa[i] > abscissa[i - 1], Errc::invalid_params,
                    "abscissa must increase strictly");
    }
}

DecayFitResult fit_gaussian_two_tone(const SingletTrace& trace) {
    const auto data = prepare_trace(trace, 0, 12);
    const std::size_t n = data.t.size();

    // p = [A1, w1, phi1, logT, A2, w2, phi2, eps]
    const auto model = [&](const Eigen::VectorXd& p, double t) {
        const double T = std::exp(p[3]);
        const double u = t / T;
        return p[0] * std::cos(p[1] * t + p[2]) * std::exp(-u * u) +
               p[4] * std::cos(p[5] * t + p[6]) + 0.5 + p[7];
    };
    const ResidualFn residuals = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i)
            r[static_cast<Eigen::Index>(i)] = model(p, data.t[i]) - data.y[i];
        return r;
    };

    auto seeds = spectral_seeds(data.t, data.y, 2);
    double w1_seed = seeds.empty() ? kTwoPi / data.span : seeds[0].omega;
    double a1_seed = seeds.empty() ? stddev(data.y) * std::sqrt(2.0) : seeds[0].amplitude;
    double w2_seed = seeds.size() > 1 ? seeds[1].omega : 0.37 * w1_seed;
    double a2_seed = seeds.size() > 1 ? seeds[1].amplitude : 0.25 * a1_seed;
    const double eps_seed = mean(data.y) - 0.5;
    const double logT_seed = std::log(0.6 * data.t.back() + 0.4 * data.span);

    LmOptions options;
    options.max_iterations = 250;
    LmResult best;
    best.sse = std::numeric_limits<double>::infinity();
    const double phases[4] = {0.0, 0.5 * kPi, kPi, 1.5 * kPi};
    for (int swap = 0; swap < 2; ++swap) {
        const double w1 = swap ? w2_seed : w1_seed;
        const double a1 = swap ? a2_seed : a1_seed;
        const double w2 = swap ? w1_seed : w2_seed;
        const double a2 = swap ? a1_seed : a2_seed;
        for (double phi1 : phases) {
            for (double phi2 : {0.0, kPi}) {
                Eigen::VectorXd p0(8);
                p0 << a1, w1, phi1, logT_seed, a2, w2, phi2, eps_seed;
                LmResult r = levenberg_marquardt(residuals, p0, options);
                if (std::isfinite(r.sse) && r.sse < best.sse) best = r;
            }
        }
    }
    require(std::isfinite(best.sse), Errc::non_convergence, "two-tone decay fit failed");

    DecayFitResult out;
    out.model = DecayModel::gaussian_two_tone;
    out.a1 = best.params[0];
    out.omega1 = best.params[1];
    out.phi1 = best.params[2];
    out.decay_ns = std::exp(best.params[3]);
    out.a2 = best.params[4];
    out.omega2 = best.params[5];
    out.phi2 = best.params[6];
    out.epsilon = best.params[7];
    canonicalize_tone(out.a1, out.omega1, out.phi1);
    canonicalize_tone(out.a2, out.omega2, out.phi2);
    out.residual_rms = best.residual_rms;
    out.iterations = best.iterations;

    const double floor = amplitude_floor(out.residual_rms, n);
    require(out.a1 >= floor, Errc::ill_conditioned,
            "damped tone amplitude indistinguishable from zero; decay time unidentifiable");
    if (out.a2 >= floor)
        require(std::abs(out.omega1 - out.omega2) * data.span > 0.5 * kPi, Errc::ill_conditioned,
                "tones degenerate over the sampled window");

    if (best.covariance.rows() == 8) {
        const double vT = best.covariance(3, 3);
        const double vw = best.covariance(1, 1);
        const double va = best.covariance(0, 0);
        out.decay_stderr_ns = vT > 0.0 ? out.decay_ns * std::sqrt(vT) : 0.0;
        out.omega1_stderr = vw > 0.0 ? std::sqrt(vw) : 0.0;
        out.a1_stderr = va > 0.0 ? std::sqrt(va) : 0.0;
    }
    return out;
}

DecayFitResult fit_exponential(const SingletTrace& trace, int exclude_first) {
    const auto data = prepare_trace(trace, exclude_first, 8);
    const std::size_t n = data.t.size();

    // p = [A, w, phi, logT, eps]
    const auto model = [&](const Eigen::VectorXd& p, double t) {
        return p[0] * std::cos(p[1] * t + p[2]) * std::exp(-t / std::exp(p[3])) + 0.5 + p[4];
    };
    const ResidualFn residuals = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i)
            r[static_cast<Eigen::Index>(i)] = model(p, data.t[i]) - data.y[i];
        return r;
    };

    auto seeds = spectral_seeds(data.t, data.y, 1);
    const double w_seed = seeds.empty() ? kTwoPi / data.span : seeds[0].omega;
    const double a_seed = seeds.empty() ? stddev(data.y) * std::sqrt(2.0) : seeds[0].amplitude;
    const double eps_seed = mean(data.y) - 0.5;
    const double spread = std::max(data.y.front() - mean(data.y), 1e-3);

    LmOptions options;
    options.max_iterations = 250;
    LmResult best;
    best.sse = std::numeric_limits<double>::infinity();
    const double phases[4] = {0.0, 0.5 * kPi, kPi, 1.5 * kPi};
    const double logT0 = std::log(0.5 * data.span);
    struct Start {
        double a, w, phi, logT;
    };
    std::vector<Start> starts;
    for (double phi : phases) {
        starts.push_back({a_seed, w_seed, phi, logT0});
        starts.push_back({a_seed, w_seed, phi, logT0 - 1.4});
    }
    // Overdamped traces: no oscillation, start as a pure envelope.
    starts.push_back({spread, 0.0, 0.0, logT0});
    starts.push_back({spread, 0.0, 0.0, logT0 - 1.4});
    for (const Start& s : starts) {
        Eigen::VectorXd p0(5);
        p0 << s.a, s.w, s.phi, s.logT, eps_seed;
        LmResult r = levenberg_marquardt(residuals, p0, options);
        if (std::isfinite(r.sse) && r.sse < best.sse) best = r;
    }
    require(std::isfinite(best.sse), Errc::non_convergence, "exponential decay fit failed");

    DecayFitResult out;
    out.model = DecayModel::exponential;
    out.a1 = best.params[0];
    out.omega1 = best.params[1];
    out.phi1 = best.params[2];
    out.decay_ns = std::exp(best.params[3]);
    out.epsilon = best.params[4];
    canonicalize_tone(out.a1, out.omega1, out.phi1);
    out.residual_rms = best.residual_rms;
    out.iterations = best.iterations;
    out.excluded_indices.resize(static_cast<std::size_t>(exclude_first));
    for (int i = 0; i < exclude_first; ++i) out.excluded_indices[static_cast<std::size_t>(i)] = i;

    require(out.a1 >= amplitude_floor(out.residual_rms, n), Errc::ill_conditioned,
            "decaying amplitude indistinguishable from zero; decay time unidentifiable");

    if (best.covariance.rows() == 5) {
        const double vT = best.covariance(3, 3);
        const double vw = best.covariance(1, 1);
        const double va = best.covariance(0, 0);
        out.decay_stderr_ns = vT > 0.0 ? out.decay_ns * std::sqrt(vT) : 0.0;
        out.omega1_stderr = vw > 0.0 ? std::sqrt(vw) : 0.0;
        out.a1_stderr = va > 0.0 ? std::sqrt(va) : 0.0;
    }
    return out;
}

StSpectrum st_fft(const std::vector<SingletTrace>& columns, double B_T,
                  const PhysicalConstants& constants) {
    require(!columns.empty(), Errc::invalid_params, "no trace columns");
    require(B_T > 0.0, Errc::zero_field, "spectral g-factor axis requires B > 0");
    constants.validate();

    const SingletTrace& first = columns.front();
    first.validate();
    require(first.axis == TraceAxis::tau_s_sweep, Errc::invalid_params,
            "spectral columns must sweep tau_S");
    const std::size_t n = first.abscissa.size();
    require(n >= 8, Errc::invalid_params, "need at least 8 samples per column");
    const double dt = (first.abscissa.back() - first.abscissa.front()) / static_cast<double>(n - 1);
    for (const SingletTrace& c : columns) {
        c.validate();
        require(c.axis == TraceAxis::tau_s_sweep, Errc::invalid_params,
                "spectral columns must sweep tau_S");
        require(c.abscissa.size() == n, Errc::mismatched_axes, "columns differ in length");
        for (std::size_t i = 0; i < n; ++i) {
            require(std::abs(c.abscissa[i] - first.abscissa[i]) <= 1e-9 * dt,
                    Errc::mismatched_axes, "columns must share one tau_S grid");
            if (i > 0) {
                const double step = c.abscissa[i] - c.abscissa[i - 1];
                require(std::abs(step - dt) <= 1e-6 * dt, Errc::non_uniform_sampling,
                        "tau_S grid must be uniform");
            }
        }
    }

    const std::size_t padded = next_pow2(4 * n);
    StSpectrum out;
    out.d_nm.reserve(columns.size());
    out.magnitude.reserve(columns.size());
    out.frequency_axis.resize(padded / 2 + 1);
    out.delta_g_axis.resize(padded / 2 + 1);
    const double df = 1.0 / (static_cast<double>(padded) * dt);
    // Tone at angular rate dg * mu_B * B / hbar appears at f = dg mu_B B / h;
    // the axis below maps f back with an extra 1/2 from the one-sided fold.
    const double f_to_dg = constants.h() / (2.0 * constants.mu_B * B_T);
    for (std::size_t k = 0; k < out.frequency_axis.size(); ++k) {
        out.frequency_axis[k] = df * static_cast<double>(k);
        out.delta_g_axis[k] = out.frequency_axis[k] * f_to_dg;
    }

    for (const SingletTrace& c : columns) {
        const double ybar = mean(c.p_s);
        std::vector<double> windowed(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double w = 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(i) /
                                                    static_cast<double>(n - 1)));
            windowed[i] = (c.p_s[i] - ybar) * w;
        }
        const auto spectrum = fft_real(windowed, padded);
        std::vector<double> mag(padded / 2 + 1);
        for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::abs(spectrum[k]);
        out.d_nm.push_back(c.d_nm);
        out.magnitude.push_back(std::move(mag));
    }
    return out;
}

std::vector<std::size_t> spectral_peaks(std::span<const double> magnitude, double rel_threshold,
                                        int min_separation) {
    require(rel_threshold > 0.0 && rel_threshold < 1.0, Errc::invalid_params,
            "relative threshold must be in (0, 1)");
    require(min_separation >= 1, Errc::invalid_params, "separation must be >= 1 bin");
    if (magnitude.size() < 3) return {};
    const double peak = *std::max_element(magnitude.begin(), magnitude.end());
    if (peak <= 0.0) return {};
    const double floor = rel_threshold * peak;
    std::vector<std::size_t> candidates;
    for (std::size_t k = 1; k + 1 < magnitude.size(); ++k)
        if (magnitude[k] >= floor && magnitude[k] >= magnitude[k - 1] &&
            magnitude[k] > magnitude[k + 1])
            candidates.push_back(k);
    std::sort(candidates.begin(), candidates.end(),
              [&](std::size_t a, std::size_t b) { return magnitude[a] > magnitude[b]; });
    std::vector<std::size_t> kept;
    for (std::size_t k : candidates) {
        bool clear = true;
        for (std::size_t j : kept)
            if (std::llabs(static_cast<long long>(k) - static_cast<long long>(j)) <
                min_separation)
                clear = false;
        if (clear) kept.push_back(k);
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

double average_delta_g(const ValleyLandscape& landscape, const Path& path, double d_nm,
                       Valley static_valley, Valley mobile_valley,
                       const std::array<double, 2>& g_L) {
    require(d_nm > 0.0, Errc::zero_distance, "path average needs a positive distance");
    require(d_nm <= landscape.extent_x() + 1e-9, Errc::out_of_bounds,
            "distance exceeds the landscape");
    const double g_static = static_valley == Valley::plus ? g_L[0] : g_L[1];
    const double g0 = landscape.config().constants.g0;
    const double dx = landscape.spacing();
    const auto n_seg = static_cast<std::size_t>(std::ceil(d_nm / dx - 1e-9));
    const double step = d_nm / static_cast<double>(n_seg);
    KahanSum acc;
    for (std::size_t i = 0; i <= n_seg; ++i) {
        const double x = std::min(d_nm, static_cast<double>(i) * step);
        const double dg = landscape.dg_at(x, path.y_at(x), mobile_valley);
        const double f = g_static - (g0 + dg);
        acc.add((i == 0 || i == n_seg) ? 0.5 * f : f);
    }
    return acc.value() / static_cast<double>(n_seg);
}

double rtn_coherence(double gamma, double delta_omega_bar, double tau) {
    require(gamma >= 0.0 && delta_omega_bar >= 0.0 && tau >= 0.0, Errc::invalid_params,
            "rates and times must be non-negative");
    if (tau == 0.0) return 1.0;
    const double half = 0.5 * delta_omega_bar;
    const double disc = (gamma - half) * (gamma + half);
    if (std::abs(disc) * tau * tau < 1e-16) {
        return std::exp(-gamma * tau) * (1.0 + gamma * tau);
    }
    if (disc > 0.0) {
        // Overdamped: W = ((1 + g/mu) e^{-(g-mu)t} + (1 - g/mu) e^{-(g+mu)t}) / 2.
        const double mu = std::sqrt(disc);
        const double slow = half * half / (gamma + mu); // gamma - mu, cancellation-free
        return 0.5 * ((1.0 + gamma / mu) * std::exp(-slow * tau) +
                      (1.0 - gamma / mu) * std::exp(-(gamma + mu) * tau));
    }
    const double m = std::sqrt(-disc);
    return std::exp(-gamma * tau) * (std::cos(m * tau) + (gamma / m) * std::sin(m * tau));
}

double decay_time(double gamma, double delta_omega_bar) {
    require(gamma >= 0.0 && delta_omega_bar >= 0.0, Errc::invalid_params,
            "rates must be non-negative");
    const double half = 0.5 * delta_omega_bar;
    if (gamma <= half) {
        // Slow flips: the oscillatory cosh/sinh factor is bounded, envelope e^{-gamma tau}.
        return gamma > 0.0 ? 1.0 / gamma : std::numeric_limits<double>::infinity();
    }
    const double mu = std::sqrt((gamma - half) * (gamma + half));
    const double rate = half * half / (gamma + mu); // = gamma - mu without cancellation
    return 1.0 / rate;
}

McCoherence telegraph_mc(double gamma, double delta_omega_bar, std::size_t n_traj,
                         std::span<const double> tau_grid, uint64_t seed) {
    require(gamma >= 0.0 && delta_omega_bar >= 0.0, Errc::invalid_params,
            "rates must be non-negative");
    require(n_traj >= 2, Errc::invalid_params, "need at least two trajectories");
    require(!tau_grid.empty(), Errc::invalid_params, "empty tau grid");
    for (std::size_t i = 0; i < tau_grid.size(); ++i) {
        require(tau_grid[i] >= 0.0, Errc::invalid_params, "negative tau");
        if (i > 0)
            require(tau_grid[i] > tau_grid[i - 1], Errc::invalid_params,
                    "tau grid must increase strictly");
    }

    const std::size_t n_tau = tau_grid.size();
    const std::size_t slots = chunk_count(n_traj);
    std::vector<KahanSum> sum(slots * n_tau);
    std::vector<KahanSum> sum_sq(slots * n_tau);
    const double rate = 0.5 * delta_omega_bar;

    parallel_chunks(n_traj, [&](std::size_t begin, std::size_t end, std::size_t slot) {
        KahanSum* s = sum.data() + slot * n_tau;
        KahanSum* s2 = sum_sq.data() + slot * n_tau;
        for (std::size_t i = begin; i < end; ++i) {
            RandomStream rng(derive_stream_seed(seed, i));
            double branch = rng.bernoulli(0.5) ? 1.0 : -1.0;
            double phase = 0.0;
            double t_prev = 0.0;
            double t_flip =
                gamma > 0.0 ? rng.exponential(gamma) : std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < n_tau; ++k) {
                const double tau = tau_grid[k];
                while (t_flip < tau) {
                    phase += branch * rate * (t_flip - t_prev);
                    t_prev = t_flip;
                    branch = -branch;
                    t_flip += rng.exponential(gamma);
                }
                const double c = std::cos(phase + branch * rate * (tau - t_prev));
                s[k].add(c);
                s2[k].add(c * c);
            }
        }
    });

    McCoherence out;
    out.n_traj = n_traj;
    out.tau.assign(tau_grid.begin(), tau_grid.end());
    out.mean.resize(n_tau);
    out.stderr_.resize(n_tau);
    const double inv_n = 1.0 / static_cast<double>(n_traj);
    for (std::size_t k = 0; k < n_tau; ++k) {
        KahanSum total, total_sq;
        for (std::size_t slot = 0; slot < slots; ++slot) {
            total.add(sum[slot * n_tau + k].value());
            total_sq.add(sum_sq[slot * n_tau + k].value());
        }
        const double m = total.value() * inv_n;
        const double var =
            std::max(0.0, (total_sq.value() - static_cast<double>(n_traj) * m * m) /
                              static_cast<double>(n_traj - 1));
        out.mean[k] = m;
        out.stderr_[k] = std::sqrt(var * inv_n);
    }
    return out;
}

double mc_decay_time(const McCoherence& trace, double gamma, double delta_omega_bar) {
    require(trace.tau.size() == trace.mean.size() && trace.tau.size() == trace.stderr_.size(),
            Errc::mismatched_axes, "inconsistent coherence trace");
    require(trace.tau.size() >= 8, Errc::invalid_params, "trace too short");
    require(gamma > 0.0 && delta_omega_bar >= 0.0, Errc::invalid_params,
            "need a positive flip rate");

    std::vector<double> ts, logs;
    const std::size_t n = trace.tau.size();
    if (gamma >= 0.5 * delta_omega_bar) {
        // Monotone envelope: regress log W over the mid range.
        for (std::size_t i = 0; i < n; ++i) {
            const double w = trace.mean[i];
            if (trace.tau[i] <= 0.0) continue;
            if (w < std::max(0.05, 6.0 * trace.stderr_[i]) || w > 0.9) continue;
            ts.push_back(trace.tau[i]);
            logs.push_back(std::log(w));
        }
    } else {
        // Oscillatory: regress log of local maxima of |W|.
        for (std::size_t i = 0; i < n; ++i) {
            const double w = std::abs(trace.mean[i]);
            if (w < std::max(0.02, 5.0 * trace.stderr_[i])) continue;
            const double left = i > 0 ? std::abs(trace.mean[i - 1]) : -1.0;
            const double right = i + 1 < n ? std::abs(trace.mean[i + 1]) : -1.0;
            if (w >= left && w >= right) {
                ts.push_back(trace.tau[i]);
                logs.push_back(std::log(w));
            }
        }
    }
    require(ts.size() >= 3, Errc::underdetermined,
            "too few usable envelope points for a decay estimate");
    const LinFit fit = linear_fit(ts, logs);
    require(fit.slope < 0.0, Errc::non_convergence, "envelope regression found no decay");
    return -1.0 / fit.slope;
}

NarrowingModel fit_narrowing_model(std::span<const NarrowingRow> rows, double lambda_nm,
                                   const PhysicalConstants& constants) {
    require(lambda_nm > 0.0, Errc::invalid_params, "lambda must be positive");
    constants.validate();
    std::vector<NarrowingRow> used;
    for (const NarrowingRow& r : rows) {
        if (r.excluded) continue;
        require(std::isfinite(r.B_T) && std::isfinite(r.v_s_nm_per_ns) && std::isfinite(r.T_ns),
                Errc::invalid_params, "non-finite narrowing row");
        require(r.B_T > 0.0 && r.v_s_nm_per_ns > 0.0 && r.T_ns > 0.0, Errc::invalid_params,
                "narrowing rows need positive B, v_S and T");
        used.push_back(r);
    }
    require(used.size() >= 3, Errc::underdetermined,
            "need >= 3 included rows to constrain the two-parameter model");

    const double omega_unit = constants.mu_B / constants.hbar; // rad/ns per (scale * B)
    // p = [ln q_v, ln scale]; relative residuals match multiplicative noise.
    const ResidualFn residuals = [&](const Eigen::VectorXd& p) {
        const double q = std::exp(p[0]);
        const double scale = std::exp(p[1]);
        Eigen::VectorXd r(static_cast<Eigen::Index>(used.size()));
        for (std::size_t i = 0; i < used.size(); ++i) {
            const double g = q * used[i].v_s_nm_per_ns / lambda_nm;
            const double dw = scale * omega_unit * used[i].B_T;
            r[static_cast<Eigen::Index>(i)] = (used[i].T_ns - decay_time(g, dw)) / used[i].T_ns;
        }
        return r;
    };

    LmOptions options;
    options.max_iterations = 300;
    LmResult best;
    best.sse = std::numeric_limits<double>::infinity();
    for (double q0 : {0.005, 0.02, 0.08}) {
        for (double s0 : {1.5e-4, 5.4e-4, 2e-3}) {
            Eigen::VectorXd p0(2);
            p0 << std::log(q0), std::log(s0);
            LmResult r = levenberg_marquardt(residuals, p0, options);
            if (std::isfinite(r.sse) && r.sse < best.sse) best = r;
        }
    }
    require(std::isfinite(best.sse), Errc::non_convergence, "narrowing model fit failed");

    NarrowingModel out;
    out.q_v = std::exp(best.params[0]);
    out.scale = std::exp(best.params[1]);
    out.lambda_nm = lambda_nm;
    out.residual_rms = best.residual_rms;
    out.iterations = best.iterations;
    if (best.covariance.rows() == 2) {
        const double v0 = best.covariance(0, 0);
        const double v1 = best.covariance(1, 1);
        out.q_v_stderr = v0 > 0.0 ? out.q_v * std::sqrt(v0) : 0.0;
        out.scale_stderr = v1 > 0.0 ? out.scale * std::sqrt(v1) : 0.0;
    }
    return out;
}

namespace {

SingletTrace run_event_sweep(const ShuttleSchedule& base, const ValleyLandscape& landscape,
                             const CouplingParams& coupling, const EventModelConfig& config,
                             TraceAxis axis, std::span<const double> abscissa,
                             const std::function<ShuttleSchedule(std::size_t)>& schedule_at,
                             int n_samples, uint64_t seed, double initial_excited_prob) {
    require(n_samples >= 1, Errc::invalid_params, "need at least one sample per point");
    require(initial_excited_prob >= 0.0 && initial_excited_prob <= 1.0, Errc::invalid_params,
            "initial excited-branch probability must be in [0, 1]");
    base.validate();
    coupling.validate();

    SingletTrace trace;
    trace.axis = axis;
    trace.abscissa.assign(abscissa.begin(), abscissa.end());
    trace.p_s.resize(abscissa.size());
    trace.B_T = base.B_T;
    trace.v_s_nm_per_ns = base.v_s();
    trace.d_nm = base.d_nm;
    trace.n_samples_per_point = n_samples;

    parallel_for(abscissa.size(), [&](std::size_t j) {
        const ShuttleSchedule schedule = schedule_at(j);
        KahanSum acc;
        for (int s = 0; s < n_samples; ++s) {
            const uint64_t idx = (static_cast<uint64_t>(j) << 32) | static_cast<uint64_t>(s);
            RandomStream rng(derive_stream_seed(seed, idx));
            const Valley v0 =
                rng.uniform() < initial_excited_prob ? Valley::plus : Valley::minus;
            const EventResult record =
                propagate_events(schedule, landscape, coupling, config, rng, v0);
            acc.add(singlet_return_probability(record, coupling));
        }
        trace.p_s[j] = acc.value() / static_cast<double>(n_samples);
    });
    return trace;
}

} // namespace

SingletTrace simulate_ps_vs_tau(const ShuttleSchedule& base, const ValleyLandscape& landscape,
                                const CouplingParams& coupling, const EventModelConfig& config,
                                int n_points, int n_samples, uint64_t seed,
                                double initial_excited_prob) {
    require(n_points >= 1, Errc::invalid_params, "need at least one trace point");
    std::vector<double> taus(static_cast<std::size_t>(n_points));
    for (int j = 0; j < n_points; ++j)
        taus[static_cast<std::size_t>(j)] = static_cast<double>(j + 1) * base.tau_s_ns;
    return run_event_sweep(
        base, landscape, coupling, config, TraceAxis::accumulated_tau, taus,
        [&](std::size_t j) {
            ShuttleSchedule s = base;
            s.n_rep = static_cast<int>(j) + 1;
            return s;
        },
        n_samples, seed, initial_excited_prob);
}

SingletTrace simulate_ps_vs_tau_s(const ShuttleSchedule& base, const ValleyLandscape& landscape,
                                  const CouplingParams& coupling, const EventModelConfig& config,
                                  std::span<const double> tau_s_grid, int n_samples,
                                  uint64_t seed, double initial_excited_prob) {
    require(!tau_s_grid.empty(), Errc::invalid_params, "empty tau_S grid");
    for (std::size_t i = 0; i < tau_s_grid.size(); ++i) {
        require(tau_s_grid[i] > 0.0, Errc::invalid_params, "tau_S must be positive");
        if (i > 0)
            require(tau_s_grid[i] > tau_s_grid[i - 1], Errc::invalid_params,
                    "tau_S grid must increase strictly");
    }
    return run_event_sweep(
        base, landscape, coupling, config, TraceAxis::tau_s_sweep, tau_s_grid,
        [&](std::size_t j) {
            ShuttleSchedule s = base;
            s.tau_s_ns = tau_s_grid[j];
            return s;
        },
        n_samples, seed, initial_excited_prob);
}

namespace {

const char* axis_name(TraceAxis a) {
    switch (a) {
        case TraceAxis::tau_s_sweep: return "tau_s_sweep";
        case TraceAxis::accumulated_tau: return "accumulated_tau";
        case TraceAxis::distance: return "distance";
    }
    return "accumulated_tau";
}

TraceAxis axis_from_name(const std::string& s) {
    if (s == "tau_s_sweep") return TraceAxis::tau_s_sweep;
    if (s == "accumulated_tau") return TraceAxis::accumulated_tau;
    if (s == "distance") return TraceAxis::distance;
    fail(Errc::io_error, "unknown trace axis '" + s + "'");
}

} // namespace

void save_trace(const std::filesystem::path& p, const SingletTrace& trace) {
    trace.validate();
    nlohmann::json header = {{"format", "shuttlesim-trace"},
                             {"version", 1},
                             {"axis", axis_name(trace.axis)},
                             {"B_T", trace.B_T},
                             {"v_s_nm_per_ns", trace.v_s_nm_per_ns},
                             {"d_nm", trace.d_nm},
                             {"path_id", trace.path_id},
                             {"n_samples_per_point", trace.n_samples_per_point}};
    Table body;
    body.columns = {"abscissa", "p_s"};
    for (std::size_t i = 0; i < trace.abscissa.size(); ++i)
        body.add_row({trace.abscissa[i], trace.p_s[i]});
    write_header_csv(p, header, body);
}

SingletTrace load_trace(const std::filesystem::path& p) {
    auto [header, body] = read_header_csv(p);
    require(header.value("format", "") == "shuttlesim-trace" && header.value("version", 0) == 1,
            Errc::io_error, "not a version-1 trace file: " + p.string());
    SingletTrace t;
    t.axis = axis_from_name(header.value("axis", ""));
    t.B_T = header.value("B_T", 0.0);
    t.v_s_nm_per_ns = header.value("v_s_nm_per_ns", 0.0);
    t.d_nm = header.value("d_nm", 0.0);
    t.path_id = header.value("path_id", "");
    t.n_samples_per_point = header.value("n_samples_per_point", 0);
    const auto ia = body.col_index("abscissa");
    const auto ip = body.col_index("p_s");
    for (const auto& row : body.rows) {
        t.abscissa.push_back(row[ia]);
        t.p_s.push_back(row[ip]);
    }
    t.validate();
    return t;
}

void save_spectrum(const std::filesystem::path& p, const StSpectrum& spectrum) {
    require(!spectrum.magnitude.empty() && spectrum.magnitude.size() == spectrum.d_nm.size(),
            Errc::invalid_params, "spectrum column count and d axis disagree");
    nlohmann::json header = {
        {"format", "shuttlesim-spectrum"}, {"version", 1}, {"d_nm", spectrum.d_nm}};
    Table body;
    body.columns = {"frequency_per_ns", "delta_g"};
    for (std::size_t c = 0; c < spectrum.d_nm.size(); ++c)
        body.columns.push_back("mag_" + std::to_string(c));
    for (std::size_t k = 0; k < spectrum.frequency_axis.size(); ++k) {
        std::vector<double> row = {spectrum.frequency_axis[k], spectrum.delta_g_axis[k]};
        for (const auto& col : spectrum.magnitude) row.push_back(col[k]);
        body.rows.push_back(std::move(row));
    }
    write_header_csv(p, header, body);
}

StSpectrum load_spectrum(const std::filesystem::path& p) {
    auto [header, body] = read_header_csv(p);
    require(header.value("format", "") == "shuttlesim-spectrum" && header.value("version", 0) == 1,
            Errc::io_error, "not a version-1 spectrum file: " + p.string());
    StSpectrum s;
    s.d_nm = header.value("d_nm", std::vector<double>{});
    require(body.columns.size() == s.d_nm.size() + 2, Errc::io_error,
            "spectrum body column count and header d axis disagree");
    s.magnitude.resize(s.d_nm.size());
    for (const auto& row : body.rows) {
        s.frequency_axis.push_back(row[0]);
        s.delta_g_axis.push_back(row[1]);
        for (std::size_t c = 0; c < s.d_nm.size(); ++c) s.magnitude[c].push_back(row[c + 2]);
    }
    return s;
}

} // namespace shuttlesim
