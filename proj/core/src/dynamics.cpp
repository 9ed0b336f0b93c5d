#include "shuttlesim/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "shuttlesim/errors.hpp"

namespace shuttlesim {

namespace {

using Eigen::Matrix2cd;
using Eigen::Matrix4cd;
using Eigen::Vector4cd;
using cplx = std::complex<double>;

const cplx kI{0.0, 1.0};

// Valley eigenprojectors of (Re d tau_x + Im d tau_y): P(+|d|) and P(-|d|).
// At |d| = 0 the branch direction is taken along tau_x (arbitrary but fixed).
void valley_projectors(cplx delta, Matrix2cd& p_excited, Matrix2cd& p_ground) {
    double nx = delta.real(), ny = delta.imag();
    const double mod = std::hypot(nx, ny);
    if (mod > 0.0) {
        nx /= mod;
        ny /= mod;
    } else {
        nx = 1.0;
        ny = 0.0;
    }
    Matrix2cd n_tau;
    n_tau << 0.0, cplx(nx, -ny), cplx(nx, ny), 0.0;
    p_excited = 0.5 * (Matrix2cd::Identity() + n_tau);
    p_ground = 0.5 * (Matrix2cd::Identity() - n_tau);
}

Matrix4cd herm_exp(const Matrix4cd& h, double factor) {
    Eigen::SelfAdjointEigenSolver<Matrix4cd> es(h);
    Vector4cd phases;
    for (int i = 0; i < 4; ++i) phases[i] = std::exp(kI * (factor * es.eigenvalues()[i]));
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

double spectral_scale(const Matrix4cd& h) { return h.norm(); } // Frobenius upper bound

struct LegSampler {
    const ValleyLandscape* landscape;
    const Path* path;
    double x0, v; // x(t) = x0 + v * t (v signed)

    double x_at(double t) const { return x0 + v * t; }
    double evs(double t) const {
        const double x = x_at(t);
        return landscape->evs_at(x, path->y_at(x));
    }
};

} // namespace

void ShuttleSchedule::validate() const {
    require(d_nm > 0.0, Errc::invalid_config, "shuttle distance must be positive");
    require(tau_s_ns > 0.0, Errc::invalid_config, "tau_S must be positive");
    require(tau_w_ns >= 0.0, Errc::invalid_config, "tau_W must be non-negative");
    require(n_rep >= 1, Errc::invalid_config, "n_rep must be >= 1");
    require(B_T >= 0.0, Errc::invalid_config, "magnetic field must be non-negative");
    require(lambda_nm > 0.0, Errc::invalid_config, "drive period must be positive");
}

void CouplingParams::validate() const {
    require(delta_sv_ueV >= 0.0, Errc::invalid_config, "delta_sv must be non-negative");
    require(t2_static_ns > 0.0, Errc::invalid_config, "T2_static must be positive");
    require(spam_epsilon >= 0.0 && spam_epsilon < 0.5, Errc::invalid_config,
            "spam offset must lie in [0, 0.5)");
}

double lz_flip_probability(double delta_sv_ueV, double slope_ueV_per_nm, double v_s_nm_per_ns,
                           const PhysicalConstants& constants) {
    require(delta_sv_ueV >= 0.0 && slope_ueV_per_nm >= 0.0 && v_s_nm_per_ns >= 0.0,
            Errc::invalid_params, "negative Landau-Zener inputs");
    if (delta_sv_ueV == 0.0) return 0.0;
    const double sweep = slope_ueV_per_nm * v_s_nm_per_ns;
    if (sweep == 0.0)
        fail(Errc::zero_sweep_rate,
             "zero sweep rate with finite coupling: adiabatic limit, flip probability -> 1");
    return 1.0 - std::exp(-2.0 * kPi * delta_sv_ueV * delta_sv_ueV / (constants.hbar * sweep));
}

Eigen::Matrix4cd build_hamiltonian(const ValleyLandscape& landscape,
                                   const CouplingParams& coupling, double B_T, double x,
                                   double y) {
    require(B_T >= 0.0, Errc::invalid_params, "magnetic field must be non-negative");
    const auto& constants = landscape.config().constants;
    const cplx delta = landscape.delta_at(x, y);

    Matrix2cd p_e, p_g;
    valley_projectors(delta, p_e, p_g);
    const double dg_e = landscape.dg_at(x, y, Valley::plus);
    const double dg_g = landscape.dg_at(x, y, Valley::minus);
    const Matrix2cd g_block =
        constants.g0 * Matrix2cd::Identity() + dg_e * p_e + dg_g * p_g;

    Matrix2cd valley_block;
    valley_block << 0.0, cplx(delta.real(), -delta.imag()), delta, 0.0;

    Matrix4cd h = Matrix4cd::Zero();
    const double half_zeeman = 0.5 * constants.mu_B * B_T;
    h.block<2, 2>(0, 0) = half_zeeman * g_block + valley_block;
    h.block<2, 2>(2, 2) = -half_zeeman * g_block + valley_block;
    // Single flip channel |up,-><down,+|; bare matrix element 2*delta_sv so
    // the dressed avoided crossing at E_Z = E_VS has gap 2*delta_sv and the
    // Landau-Zener exponent carries delta_sv^2.
    h(1, 2) += 2.0 * coupling.delta_sv_ueV;
    h(2, 1) += 2.0 * coupling.delta_sv_ueV;
    return h;
}

SpinValleyState SpinValleyState::spin_superposition_ground(const ValleyLandscape& landscape,
                                                           double x, double y) {
    Matrix2cd p_e, p_g;
    valley_projectors(landscape.delta_at(x, y), p_e, p_g);
    Eigen::SelfAdjointEigenSolver<Matrix2cd> es(p_g);
    // Eigenvector with eigenvalue 1 of the ground projector.
    Eigen::Vector2cd g = es.eigenvectors().col(es.eigenvalues()[0] > 0.5 ? 0 : 1);
    Vector4cd psi;
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    psi << inv_sqrt2 * g[0], inv_sqrt2 * g[1], inv_sqrt2 * g[0], inv_sqrt2 * g[1];
    SpinValleyState s;
    s.rho = psi * psi.adjoint();
    s.x_nm = x;
    return s;
}

SpinValleyState SpinValleyState::basis_state(int index, double x) {
    require(index >= 0 && index < 4, Errc::invalid_params, "basis index out of range");
    SpinValleyState s;
    s.rho(index, index) = 1.0;
    s.x_nm = x;
    return s;
}

double SpinValleyState::trace_error() const { return std::abs(rho.trace().real() - 1.0); }

std::complex<double> SpinValleyState::spin_coherence() const {
    return 2.0 * (rho(0, 2) + rho(1, 3));
}

std::array<double, 2> SpinValleyState::valley_populations(const ValleyLandscape& landscape,
                                                          double y) const {
    Matrix2cd p_e, p_g;
    valley_projectors(landscape.delta_at(x_nm, y), p_e, p_g);
    Matrix4cd proj_e = Matrix4cd::Zero(), proj_g = Matrix4cd::Zero();
    proj_e.block<2, 2>(0, 0) = p_e;
    proj_e.block<2, 2>(2, 2) = p_e;
    proj_g.block<2, 2>(0, 0) = p_g;
    proj_g.block<2, 2>(2, 2) = p_g;
    return {(proj_e * rho).trace().real(), (proj_g * rho).trace().real()};
}

namespace {

// One moving leg of duration `duration`, x(t) = x0 + v t. CF4: two exact
// exponentials per step built from H at the two Gauss nodes.
void integrate_leg(SpinValleyState& state, const LegSampler& leg, double duration,
                   const ValleyLandscape& landscape, const CouplingParams& coupling, double B_T,
                   double dt_max, const Path& path, int& steps) {
    constexpr double c_node = 0.2886751345948129; // sqrt(3)/6
    constexpr double a_coef = 0.25 + c_node;
    constexpr double b_coef = 0.25 - c_node;
    const double hbar = landscape.config().constants.hbar;
    const double dx_cap = 0.5 * landscape.spacing();

    double t = 0.0;
    while (t < duration) {
        const double x_here = leg.x_at(t);
        const Matrix4cd h_here =
            build_hamiltonian(landscape, coupling, B_T, x_here, path.y_at(x_here));
        double dt = std::min(dt_max, 0.1 * hbar / std::max(spectral_scale(h_here), 1e-9));
        if (leg.v != 0.0) dt = std::min(dt, dx_cap / std::abs(leg.v));
        dt = std::min(dt, duration - t);

        const double t1 = t + (0.5 - c_node) * dt;
        const double t2 = t + (0.5 + c_node) * dt;
        const double x1 = leg.x_at(t1), x2 = leg.x_at(t2);
        const Matrix4cd h1 = build_hamiltonian(landscape, coupling, B_T, x1, path.y_at(x1));
        const Matrix4cd h2 = build_hamiltonian(landscape, coupling, B_T, x2, path.y_at(x2));
        const Matrix4cd u = herm_exp(b_coef * h1 + a_coef * h2, -dt / hbar) *
                            herm_exp(a_coef * h1 + b_coef * h2, -dt / hbar);
        state.rho = u * state.rho * u.adjoint();
        t += dt;
        ++steps;
    }
    state.t_ns += duration;
    state.x_nm = leg.x_at(duration);
}

// Record crossings/minima seen along a leg (diagnostic log; evolution itself
// is the unitary integration).
void log_leg_events(const ShuttleSchedule& schedule, const ValleyLandscape& landscape,
                    const CouplingParams& coupling, int pass_index, bool forward, EventLog& log) {
    const double e_z = landscape.config().constants.zeeman(schedule.B_T);
    const double dx = landscape.spacing();
    const int n = static_cast<int>(std::floor(schedule.d_nm / dx + 1e-9)) + 1;
    auto evs = [&](int k) {
        const double x = std::min(k * dx, schedule.d_nm);
        return landscape.evs_at(x, schedule.trajectory.y_at(x));
    };
    double prev = evs(0);
    for (int k = 0; k + 1 < n; ++k) {
        const double cur = evs(k + 1);
        if ((prev - e_z) * (cur - e_z) < 0.0) {
            Event e;
            e.kind = EventKind::resonance_crossing;
            e.pass_index = pass_index;
            const double t = (prev - e_z) / (prev - cur);
            e.x_nm = forward ? (k + t) * dx : schedule.d_nm - (k + t) * dx;
            const double slope = std::abs(cur - prev) / dx;
            e.probability =
                lz_flip_probability(coupling.delta_sv_ueV, std::max(slope, 1e-12),
                                    schedule.v_s(), landscape.config().constants);
            log.push_back(e);
        }
        prev = cur;
    }
}

} // namespace

PropagationResult propagate_full(const SpinValleyState& initial, const ShuttleSchedule& schedule,
                                 const ValleyLandscape& landscape,
                                 const CouplingParams& coupling, double dt_max_ns) {
    schedule.validate();
    coupling.validate();
    require(dt_max_ns > 0.0, Errc::invalid_params, "dt_max must be positive");
    require(schedule.d_nm <= landscape.extent_x() + 1e-9, Errc::out_of_bounds,
            "shuttle distance exceeds landscape extent");

    PropagationResult out;
    out.state = initial;
    const double leg_time = schedule.tau_s_ns / 2.0;
    const double v = schedule.d_nm / leg_time;

    for (int rep = 0; rep < schedule.n_rep; ++rep) {
        LegSampler fwd{&landscape, &schedule.trajectory, 0.0, v};
        integrate_leg(out.state, fwd, leg_time, landscape, coupling, schedule.B_T, dt_max_ns,
                      schedule.trajectory, out.steps);
        log_leg_events(schedule, landscape, coupling, 2 * rep, true, out.log);

        if (schedule.tau_w_ns > 0.0) {
            const double y_far = schedule.trajectory.y_at(schedule.d_nm);
            const Matrix4cd h =
                build_hamiltonian(landscape, coupling, schedule.B_T, schedule.d_nm, y_far);
            const Matrix4cd u =
                herm_exp(h, -schedule.tau_w_ns / landscape.config().constants.hbar);
            out.state.rho = u * out.state.rho * u.adjoint();
            out.state.t_ns += schedule.tau_w_ns;
            ++out.steps;
        }

        LegSampler bwd{&landscape, &schedule.trajectory, schedule.d_nm, -v};
        integrate_leg(out.state, bwd, leg_time, landscape, coupling, schedule.B_T, dt_max_ns,
                      schedule.trajectory, out.steps);
        log_leg_events(schedule, landscape, coupling, 2 * rep + 1, false, out.log);

        require(out.state.trace_error() < 1e-7, Errc::step_too_large,
                "unitarity violated during propagation");
    }
    return out;
}

double valley_flip_probability(const EventModelConfig& config, double evs_ueV) {
    require(config.q_max >= 0.0 && config.q_max <= 1.0, Errc::invalid_config,
            "q_max must be a probability");
    require(config.evs_width_ueV > 0.0, Errc::invalid_config, "logistic width must be positive");
    const double z = (config.evs_midpoint_ueV - evs_ueV) / config.evs_width_ueV;
    return config.q_max / (1.0 + std::exp(-z));
}

namespace {

struct EventWalker {
    const ShuttleSchedule* schedule = nullptr;
    const ValleyLandscape* landscape = nullptr;
    const CouplingParams* coupling = nullptr;
    const EventModelConfig* config = nullptr;
    RandomStream* rng = nullptr;
    EventResult* result = nullptr;

    double e_z = 0, dx = 0, seg_time = 0, rate_scale = 0; // rate_scale = mu_B B / hbar
    std::vector<double> evs, dgp, dgm;    // sampled along the path
    std::vector<double> opportunity_q;    // landscape mode: per segment
    std::vector<int> periodic_segment;    // periodic mode: segment index per opportunity

    void prepare() {
        const auto& c = landscape->config().constants;
        e_z = c.zeeman(schedule->B_T);
        rate_scale = c.mu_B * schedule->B_T / c.hbar;
        dx = landscape->spacing();
        const int n = static_cast<int>(std::floor(schedule->d_nm / dx + 1e-9)) + 1;
        evs.resize(n);
        dgp.resize(n);
        dgm.resize(n);
        for (int k = 0; k < n; ++k) {
            const double x = std::min(k * dx, schedule->d_nm);
            const double y = schedule->trajectory.y_at(x);
            evs[k] = landscape->evs_at(x, y);
            dgp[k] = landscape->dg_at(x, y, Valley::plus);
            dgm[k] = landscape->dg_at(x, y, Valley::minus);
        }
        seg_time = dx / schedule->v_s();
        if (config->mode == ValleyFlipMode::landscape) {
            opportunity_q.resize(n - 1);
            for (int k = 0; k + 1 < n; ++k)
                opportunity_q[k] = valley_flip_probability(*config, std::min(evs[k], evs[k + 1]));
        } else {
            for (double x = 0.5 * config->period_nm; x < schedule->d_nm;
                 x += config->period_nm)
                periodic_segment.push_back(static_cast<int>(x / dx));
        }
    }

    double dg_branch(int k, Valley v) const { return v == Valley::plus ? dgp[k] : dgm[k]; }

    // One one-way pass; k runs over segments in traversal order.
    void pass(int pass_index, bool forward, Valley& branch) {
        const int n_seg = static_cast<int>(evs.size()) - 1;
        for (int s = 0; s < n_seg; ++s) {
            const int k = forward ? s : n_seg - 1 - s;
            const int k_from = forward ? k : k + 1;
            const int k_to = forward ? k + 1 : k;

            // Phase accrual over the segment for the current branch (trapezoid).
            result->mobile_phase_rad += rate_scale * seg_time *
                                        (landscape->config().constants.g0 +
                                         0.5 * (dg_branch(k_from, branch) + dg_branch(k_to, branch)));

            // Spin-valley flip-flop at a resonance crossing inside the segment.
            if ((evs[k_from] - e_z) * (evs[k_to] - e_z) < 0.0) {
                const double slope = std::abs(evs[k + 1] - evs[k]) / dx;
                const double p = lz_flip_probability(coupling->delta_sv_ueV,
                                                     std::max(slope, 1e-12), schedule->v_s(),
                                                     landscape->config().constants);
                const bool flip = rng->bernoulli(p);
                Event e;
                e.kind = EventKind::resonance_crossing;
                e.pass_index = pass_index;
                e.x_nm = (k + 0.5) * dx;
                e.probability = p;
                e.outcome = flip ? EventOutcome::flipped : EventOutcome::not_flipped;
                result->log.push_back(e);
                if (flip) {
                    ++result->n_svf;
                    branch = (branch == Valley::plus) ? Valley::minus : Valley::plus;
                }
            }

            // Valley excitation opportunity.
            double q = 0.0;
            if (config->mode == ValleyFlipMode::landscape) {
                q = opportunity_q[k];
            } else {
                for (int seg : periodic_segment)
                    if (seg == k) q = std::max(q, config->q_v);
            }
            if (q > 0.0) {
                const bool flip = rng->bernoulli(q);
                if (q >= config->record_threshold) {
                    Event e;
                    e.kind = EventKind::valley_minimum;
                    e.pass_index = pass_index;
                    e.x_nm = (k + 0.5) * dx;
                    e.probability = q;
                    e.outcome = flip ? EventOutcome::flipped : EventOutcome::not_flipped;
                    result->log.push_back(e);
                }
                if (flip) {
                    ++result->n_valley_flips;
                    branch = (branch == Valley::plus) ? Valley::minus : Valley::plus;
                }
            }
        }
        result->elapsed_ns += n_seg * seg_time;
    }

    void wait(Valley branch) {
        if (schedule->tau_w_ns <= 0.0) return;
        const int k_far = static_cast<int>(evs.size()) - 1;
        result->mobile_phase_rad +=
            rate_scale * schedule->tau_w_ns *
            (landscape->config().constants.g0 + dg_branch(k_far, branch));
        result->elapsed_ns += schedule->tau_w_ns;
    }
};

} // namespace

EventResult propagate_events(const ShuttleSchedule& schedule, const ValleyLandscape& landscape,
                             const CouplingParams& coupling, const EventModelConfig& config,
                             RandomStream& rng, Valley initial_valley) {
    schedule.validate();
    coupling.validate();
    require(schedule.d_nm <= landscape.extent_x() + 1e-9, Errc::out_of_bounds,
            "shuttle distance exceeds landscape extent");

    EventResult result;
    EventWalker walker;
    walker.schedule = &schedule;
    walker.landscape = &landscape;
    walker.coupling = &coupling;
    walker.config = &config;
    walker.rng = &rng;
    walker.result = &result;
    walker.prepare();

    Valley branch = initial_valley;
    for (int rep = 0; rep < schedule.n_rep; ++rep) {
        walker.pass(2 * rep, true, branch);
        walker.wait(branch);
        walker.pass(2 * rep + 1, false, branch);
    }
    result.final_valley = branch;

    // The singlet phase compares against the static dot; use the + valley's
    // static g-factor by convention.
    const auto& c = landscape.config().constants;
    result.static_phase_rad =
        coupling.g_L[0] * c.mu_B * schedule.B_T / c.hbar * result.elapsed_ns;
    return result;
}

double singlet_return_probability(const EventResult& record, const CouplingParams& coupling) {
    const double tau = record.elapsed_ns;
    double visibility = std::exp(-(tau / coupling.t2_static_ns) * (tau / coupling.t2_static_ns));
    if (!record.coherent()) visibility = 0.0;
    const double phi = record.static_phase_rad - record.mobile_phase_rad;
    const double p = 0.5 * (1.0 + visibility * std::cos(phi)) + coupling.spam_epsilon;
    return std::clamp(p, 0.0, 1.0);
}

double singlet_return_probability(const SpinValleyState& state, const CouplingParams& coupling,
                                  double B_T, const PhysicalConstants& constants) {
    const double tau = state.t_ns;
    const double visibility =
        std::exp(-(tau / coupling.t2_static_ns) * (tau / coupling.t2_static_ns));
    const double static_phase = coupling.g_L[0] * constants.mu_B * B_T / constants.hbar * tau;
    const cplx rotated = std::exp(cplx(0.0, static_phase)) * state.spin_coherence();
    const double p = 0.5 + 0.5 * visibility * rotated.real() + coupling.spam_epsilon;
    return std::clamp(p, 0.0, 1.0);
}

} // namespace shuttlesim
