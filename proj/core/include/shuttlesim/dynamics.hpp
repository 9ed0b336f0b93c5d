#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <vector>

#include "shuttlesim/landscape.hpp"
#include "shuttlesim/path.hpp"
#include "shuttlesim/rng.hpp"

namespace shuttlesim {

// One repetition = forward leg (tau_S/2), wait tau_W at x=d, return leg
// (tau_S/2); v_S = 2*d/tau_S. Drive amplitudes/offsets are stored metadata
// describing the gate waveform, not used by the physics.
struct ShuttleSchedule {
    double d_nm = 280.0;
    double tau_s_ns = 100.0; // round-trip shuttle time
    double tau_w_ns = 0.0;
    int n_rep = 1;
    double B_T = 0.02;
    double f_MHz = 0.0;      // drive frequency (metadata)
    double lambda_nm = 280.0;
    Path trajectory = Path::straight(0.0);
    std::array<double, 4> drive_amplitudes_mV{};
    std::array<double, 4> drive_offsets_mV{};

    double v_s() const { return 2.0 * d_nm / tau_s_ns; }
    double total_time_ns() const { return n_rep * (tau_s_ns + tau_w_ns); }
    double shuttle_time_ns() const { return n_rep * tau_s_ns; }
    double total_distance_nm() const { return 2.0 * n_rep * d_nm; }
    void validate() const;
};

struct CouplingParams {
    double delta_sv_ueV = 0.3;       // spin-valley flip coupling
    std::array<double, 2> g_L{2.0, 2.0}; // static-dot g-factor per valley {+,-}
    double t2_static_ns = 1500.0;    // static-dot Gaussian dephasing time
    double spam_epsilon = 0.0;       // constant readout offset added to P_S
    void validate() const;
};

// Basis order {|up,+>, |up,->, |down,+>, |down,->}; +/- are the bare valley
// states. "Valley branch" below always means the instantaneous eigenstates of
// the intervalley coupling block: Valley::plus = excited (+|delta|),
// Valley::minus = ground (-|delta|).
struct SpinValleyState {
    Eigen::Matrix4cd rho = Eigen::Matrix4cd::Zero();
    double x_nm = 0.0;
    double t_ns = 0.0;

    // (|up> + |down>)/sqrt(2) on the spin, valley ground branch at (x, y).
    static SpinValleyState spin_superposition_ground(const ValleyLandscape& landscape, double x,
                                                     double y);
    static SpinValleyState basis_state(int index, double x);

    double trace_error() const;
    // Mobile spin coherence 2*Tr_valley(<up|rho|down>); 1 for a fresh superposition.
    std::complex<double> spin_coherence() const;
    std::array<double, 2> valley_populations(const ValleyLandscape& landscape, double y) const;
};

enum class EventKind { resonance_crossing, valley_minimum };
enum class EventOutcome { none, flipped, not_flipped };

struct Event {
    EventKind kind = EventKind::resonance_crossing;
    int pass_index = 0; // one-way pass counter (2 per repetition)
    double x_nm = 0.0;
    double probability = 0.0;
    EventOutcome outcome = EventOutcome::none;
};
using EventLog = std::vector<Event>;

// P_svf of Landau-Zener: 1 - exp(-2 pi delta_sv^2 / (hbar * slope * v_S)).
double lz_flip_probability(double delta_sv_ueV, double slope_ueV_per_nm, double v_s_nm_per_ns,
                           const PhysicalConstants& constants = {});

// H(x, y) in ueV over the basis above: Zeeman term with per-branch g
// deviations (attached to the instantaneous valley eigenprojectors),
// intervalley coupling, and the single-channel spin-valley flip term
// 2*delta_sv(|up,-><down,+| + h.c.) whose avoided crossing has gap
// 2*delta_sv at E_Z = E_VS.
Eigen::Matrix4cd build_hamiltonian(const ValleyLandscape& landscape,
                                   const CouplingParams& coupling, double B_T, double x,
                                   double y);

struct PropagationResult {
    SpinValleyState state;
    EventLog log;
    int steps = 0;
};

// Time-ordered integration of rho under H(x(t)) with a 4th-order
// commutator-free exponential scheme; exactly unitary per step.
PropagationResult propagate_full(const SpinValleyState& initial, const ShuttleSchedule& schedule,
                                 const ValleyLandscape& landscape,
                                 const CouplingParams& coupling, double dt_max_ns);

enum class ValleyFlipMode {
    landscape, // per grid-edge Bernoulli with the logistic-in-E_VS map below
    periodic,  // opportunities every `period_nm` with constant probability q_v
};

struct EventModelConfig {
    ValleyFlipMode mode = ValleyFlipMode::landscape;
    double q_v = 0.023;            // periodic-mode per-opportunity probability
    double period_nm = 280.0;
    double q_max = 0.023;          // landscape-mode logistic cap
    double evs_midpoint_ueV = 5.0; // logistic midpoint
    double evs_width_ueV = 1.0;    // logistic width
    double record_threshold = 1e-6; // log valley events with q above this
};

/// Per-passage valley excitation probability as a function of local E_VS:
// q_max * logistic((midpoint - evs)/width).
double valley_flip_probability(const EventModelConfig& config, double evs_ueV);

struct EventResult {
    double mobile_phase_rad = 0.0; // integral of (g0 + dg_branch) mu_B B / hbar
    double static_phase_rad = 0.0; // g_L * mu_B B / hbar * elapsed
    double elapsed_ns = 0.0;
    int n_valley_flips = 0;
    int n_svf = 0;
    Valley final_valley = Valley::minus;
    EventLog log;
    bool coherent() const { return n_svf == 0; }
};

/// Classical stochastic record: Larmor phase accrues along the path for the
// current valley branch; spin-valley flips drawn at resonance crossings and
// valley flips at excitation opportunities.
EventResult propagate_events(const ShuttleSchedule& schedule, const ValleyLandscape& landscape,
                             const CouplingParams& coupling, const EventModelConfig& config,
                             RandomStream& rng, Valley initial_valley = Valley::minus);

// P_S = 1/2 (1 + V cos(phi_static - phi_mobile)) with V the static-dot
// Gaussian visibility, zeroed when a spin-valley flip destroyed the mobile
// coherence; clipped to [0, 1] after the SPAM offset.
double singlet_return_probability(const EventResult& record, const CouplingParams& coupling);

// Same observable from a full density-matrix propagation.
double singlet_return_probability(const SpinValleyState& state, const CouplingParams& coupling,
                                  double B_T, const PhysicalConstants& constants = {});

} // namespace shuttlesim
