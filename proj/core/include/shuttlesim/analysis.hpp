#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shuttlesim/dynamics.hpp"
#include "shuttlesim/landscape.hpp"
#include "shuttlesim/units.hpp"

namespace shuttlesim {

enum class TraceAxis {
    tau_s_sweep,     // round-trip shuttle time at fixed d (ns)
    accumulated_tau, // total shuttle time n_rep * tau_S (ns)
    distance,        // total distance 2 * n_rep * d (nm)
};

struct SingletTrace {
    TraceAxis axis = TraceAxis::accumulated_tau;
    std::vector<double> abscissa; // ns (time axes) or nm (distance)
    std::vector<double> p_s;
    double B_T = 0.0;
    double v_s_nm_per_ns = 0.0;
    double d_nm = 0.0;
    std::string path_id;
    int n_samples_per_point = 0;
    void validate() const;
};

enum class DecayModel { gaussian_two_tone, exponential };

// gaussian_two_tone: P = A1 cos(w1 t + p1) exp(-(t/T)^2) + A2 cos(w2 t + p2) + 1/2 + eps
// exponential:       P = A1 cos(w1 t + p1) exp(-t/T) + 1/2 + eps
struct DecayFitResult {
    DecayModel model = DecayModel::exponential;
    double a1 = 0.0, omega1 = 0.0, phi1 = 0.0; // omega in rad/ns
    double a2 = 0.0, omega2 = 0.0, phi2 = 0.0; // second (undamped) tone, Eq.-5 model only
    double epsilon = 0.0;
    double decay_ns = 0.0; // T2* (gaussian) or T (exponential)
    double decay_stderr_ns = 0.0;
    double omega1_stderr = 0.0;
    double a1_stderr = 0.0;
    double residual_rms = 0.0;
    std::vector<int> excluded_indices;
    int iterations = 0;
};

DecayFitResult fit_gaussian_two_tone(const SingletTrace& trace);
DecayFitResult fit_exponential(const SingletTrace& trace, int exclude_first = 0);

struct StSpectrum {
    std::vector<double> d_nm;                   // one entry per column
    std::vector<double> delta_g_axis;           // f * h / (2 mu_B B)
    std::vector<double> frequency_axis;         // 1/ns, same bins
    std::vector<std::vector<double>> magnitude; // [column][bin]
};

// Per-column magnitude FFT along tau_S (mean removed, Hann window); all
// columns must share one uniform tau_S grid.
StSpectrum st_fft(const std::vector<SingletTrace>& columns, double B_T,
                  const PhysicalConstants& constants = {});

// Indices of local maxima above rel_threshold * max(magnitude), separated by
// at least min_separation bins.
std::vector<std::size_t> spectral_peaks(std::span<const double> magnitude, double rel_threshold,
                                        int min_separation = 2);

// Trapezoidal path average of g_L(static_valley) - (g0 + dg_mobile(x)) over
// x in [0, d].
double average_delta_g(const ValleyLandscape& landscape, const Path& path, double d_nm,
                       Valley static_valley, Valley mobile_valley,
                       const std::array<double, 2>& g_L);

// Symmetric random-telegraph dephasing: W(tau) =
// e^{-gamma tau} [cosh(mu tau) + (gamma/mu) sinh(mu tau)],
// mu = sqrt(gamma^2 - (dw/2)^2), analytically continued for gamma < dw/2.
// Units: any consistent pair (rate, rad/time, time).
double rtn_coherence(double gamma, double delta_omega_bar, double tau);

// Asymptotic-envelope 1/e time 1/(gamma - Re mu): equals 1/gamma for
// gamma <= dw/2 (exact slow-flip asymptote), 8*gamma/dw^2 for gamma >> dw
// (motional narrowing; prefactor 8 for this closed form), minimum 2/dw at
// gamma = dw/2.
double decay_time(double gamma, double delta_omega_bar);

struct McCoherence {
    std::vector<double> tau;
    std::vector<double> mean;   // <cos phi>
    std::vector<double> stderr_; // Monte-Carlo standard error per point
    std::size_t n_traj = 0;
};

// Poissonian telegraph oracle: flips at rate gamma, phase rate +-dw/2,
// equilibrium (50/50) starting branch. Deterministic for a given seed and
// independent of thread count.
McCoherence telegraph_mc(double gamma, double delta_omega_bar, std::size_t n_traj,
                         std::span<const double> tau_grid, uint64_t seed);

// Decay time extracted from an MC coherence trace: log-envelope regression
// (onto local maxima of |W| when the trace oscillates, i.e. gamma < dw/2).
double mc_decay_time(const McCoherence& trace, double gamma, double delta_omega_bar);

struct NarrowingRow {
    double B_T = 0.0;
    double v_s_nm_per_ns = 0.0;
    double T_ns = 0.0;
    bool excluded = false;
};

struct NarrowingModel {
    double q_v = 0.0;    // per-passage valley flip probability
    double scale = 0.0;  // delta_omega_bar / (mu_B B), dimensionless (energy via hbar)
    double lambda_nm = 280.0;
    double q_v_stderr = 0.0;
    double scale_stderr = 0.0;
    double residual_rms = 0.0;
    int iterations = 0;

    double gamma_per_ns(double v_s) const { return q_v * v_s / lambda_nm; }
    double delta_omega_per_ns(double B_T, const PhysicalConstants& c = {}) const {
        return scale * c.mu_B * B_T / c.hbar;
    }
    double model_T_ns(double B_T, double v_s, const PhysicalConstants& c = {}) const {
        return decay_time(gamma_per_ns(v_s), delta_omega_per_ns(B_T, c));
    }
};

// Least-squares fit of decay_time(q_v v/lambda, scale mu_B B / hbar) to T
// rows (relative residuals; rows flagged excluded are skipped).
NarrowingModel fit_narrowing_model(std::span<const NarrowingRow> rows, double lambda_nm,
                                   const PhysicalConstants& constants = {});

// Event-model trace synthesis (n_samples stochastic records per point,
// streams derived from seed; deterministic under any thread count).
// P_S versus accumulated shuttle time: n_rep = 1..n_points at fixed schedule.
SingletTrace simulate_ps_vs_tau(const ShuttleSchedule& base, const ValleyLandscape& landscape,
                                const CouplingParams& coupling, const EventModelConfig& config,
                                int n_points, int n_samples, uint64_t seed,
                                double initial_excited_prob = 0.0);

// P_S versus round-trip shuttle time tau_S at fixed d (n_rep = 1).
SingletTrace simulate_ps_vs_tau_s(const ShuttleSchedule& base, const ValleyLandscape& landscape,
                                  const CouplingParams& coupling, const EventModelConfig& config,
                                  std::span<const double> tau_s_grid, int n_samples,
                                  uint64_t seed, double initial_excited_prob = 0.0);

// Persistence (JSON header line + CSV body; 17 significant digits).
void save_trace(const std::filesystem::path& p, const SingletTrace& trace);
SingletTrace load_trace(const std::filesystem::path& p);
void save_spectrum(const std::filesystem::path& p, const StSpectrum& spectrum);
StSpectrum load_spectrum(const std::filesystem::path& p);

} // namespace shuttlesim
