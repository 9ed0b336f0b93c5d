#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <vector>

#include "shuttlesim/dynamics.hpp"
#include "shuttlesim/errors.hpp"
#include "shuttlesim/landscape.hpp"
#include "shuttlesim/rng.hpp"
#include "shuttlesim/stats.hpp"

using namespace shuttlesim;

namespace {

// Uniform landscape: constant complex delta and per-valley dg offsets.
ValleyLandscape uniform_landscape(double extent_x, std::complex<double> delta, double dgp,
                                  double dgm) {
    LandscapeConfig cfg;
    cfg.extent_x_nm = extent_x;
    cfg.extent_y_nm = 2.0;
    cfg.grid_spacing_nm = 1.0;
    cfg.a_dot_nm = 3.0;
    const int nx = static_cast<int>(extent_x) + 1, ny = 3;
    std::vector<std::complex<double>> d(static_cast<std::size_t>(nx) * ny, delta);
    std::vector<double> p(d.size(), dgp), m(d.size(), dgm);
    return ValleyLandscape::from_fields(cfg, d, p, m);
}

// Coarse 5 nm grid keeps the megapass Monte-Carlo tests cheap.
ValleyLandscape coarse_landscape(std::complex<double> delta, double dgp, double dgm) {
    LandscapeConfig cfg;
    cfg.extent_x_nm = 360.0;
    cfg.extent_y_nm = 10.0;
    cfg.grid_spacing_nm = 5.0;
    cfg.a_dot_nm = 90.0;
    const int nx = 73, ny = 3;
    std::vector<std::complex<double>> d(static_cast<std::size_t>(nx) * ny, delta);
    std::vector<double> p(d.size(), dgp), m(d.size(), dgm);
    return ValleyLandscape::from_fields(cfg, d, p, m);
}

std::vector<double> eigenvalues(const Eigen::Matrix4cd& h) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(h);
    std::vector<double> ev(4);
    for (int i = 0; i < 4; ++i) ev[i] = es.eigenvalues()(i);
    return ev;
}

} // namespace

TEST_SUITE("dynamics") {

TEST_CASE("landau-zener flip probability anchors") {
    // closed-form evaluations with hbar = 0.658212 ueV ns
    CHECK(lz_flip_probability(0.3, 3.0, 2.8) ==
          doctest::Approx(0.09722040728840753).epsilon(1e-12));
    CHECK(lz_flip_probability(0.3, 3.0, 0.28) ==
          doctest::Approx(0.6404019457750394).epsilon(1e-12));
    CHECK(lz_flip_probability(0.0, 3.0, 2.8) == 0.0);
    CHECK_THROWS_AS((void)lz_flip_probability(0.3, 0.0, 2.8), SimError);

    double prev = 1.0;
    for (double v = 0.28; v < 30.0; v *= 1.5) { // diabatic trend
        const double p = lz_flip_probability(0.3, 3.0, v);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("hamiltonian: zeeman limit") {
    const auto land = uniform_landscape(12.0, {0.0, 0.0}, 0.0, 0.0);
    CouplingParams cp;
    cp.delta_sv_ueV = 0.0;
    const auto h = build_hamiltonian(land, cp, 1.0, 6.0, 0.0);
    CHECK((h - h.adjoint()).norm() == doctest::Approx(0.0));
    const auto ev = eigenvalues(h);
    CHECK(ev[1] - ev[0] == doctest::Approx(0.0).epsilon(1e-12)); // two degenerate doublets
    CHECK(ev[3] - ev[2] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(ev[2] - ev[1] == doctest::Approx(115.7676).epsilon(1e-10));
}

TEST_CASE("hamiltonian: pure valley splitting at B = 0") {
    const auto land = uniform_landscape(12.0, {50.0, 0.0}, 0.0, 0.0);
    CouplingParams cp;
    cp.delta_sv_ueV = 0.0;
    const auto ev = eigenvalues(build_hamiltonian(land, cp, 0.0, 6.0, 0.0));
    CHECK(ev[0] == doctest::Approx(-50.0));
    CHECK(ev[1] == doctest::Approx(-50.0));
    CHECK(ev[2] == doctest::Approx(50.0));
    CHECK(ev[3] == doctest::Approx(50.0));
    CHECK(land.evs_at(6.0, 0.0) == doctest::Approx(100.0)); // E_VS = 2|delta|
}

TEST_CASE("hamiltonian: spin-valley gap on and off resonance") {
    const auto land = uniform_landscape(12.0, {12.5, 0.0}, 0.0, 0.0); // E_VS = 25 ueV
    CouplingParams cp;                                                // delta_sv = 0.3
    const double b_res = 25.0 / 115.7676;
    const auto on = eigenvalues(build_hamiltonian(land, cp, b_res, 6.0, 0.0));
    CHECK(on[2] - on[1] == doctest::Approx(0.6).epsilon(1e-9));

    const double b_det = 35.0 / 115.7676; // E_Z - E_VS = 10 ueV
    const auto off = eigenvalues(build_hamiltonian(land, cp, b_det, 6.0, 0.0));
    CHECK(off[2] - off[1] == doctest::Approx(10.017983829094554).epsilon(1e-9));
}

TEST_CASE("hamiltonian: g deviations attach to valley branches") {
    const auto land = uniform_landscape(12.0, {12.5, 0.0}, 1e-3, -2e-3);
    CouplingParams cp;
    cp.delta_sv_ueV = 0.0;
    const auto ev = eigenvalues(build_hamiltonian(land, cp, 1.0, 6.0, 0.0));
    // spin splitting within each branch picks up that branch's deviation
    CHECK(ev[3] - ev[1] == doctest::Approx((2.0 + 1e-3) * 57.8838).epsilon(1e-12));
    CHECK(ev[2] - ev[0] == doctest::Approx((2.0 - 2e-3) * 57.8838).epsilon(1e-12));
}

TEST_CASE("hamiltonian: out-of-extent position fails") {
    const auto land = uniform_landscape(12.0, {12.5, 0.0}, 0.0, 0.0);
    CouplingParams cp;
    CHECK_THROWS_AS((void)build_hamiltonian(land, cp, 0.1, 13.5, 0.0), SimError);
}

TEST_CASE("state constructors") {
    const auto land = uniform_landscape(12.0, {12.5, 0.0}, 0.0, 0.0);
    const auto s = SpinValleyState::spin_superposition_ground(land, 3.0, 0.0);
    CHECK(s.trace_error() < 1e-12);
    CHECK(std::abs(s.spin_coherence() - 1.0) < 1e-12);
    const auto pops = s.valley_populations(land, 0.0);
    CHECK(pops[0] == doctest::Approx(0.0).epsilon(1e-12)); // excited branch empty
    CHECK(pops[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.x_nm == 3.0);

    const auto b2 = SpinValleyState::basis_state(2, 1.0);
    CHECK(b2.rho(2, 2).real() == doctest::Approx(1.0));
    CHECK(b2.trace_error() < 1e-15);
}

TEST_CASE("propagate_full: adiabatic constant landscape keeps the valley ground state") {
    const auto land = uniform_landscape(24.0, {100.0, 0.0}, 0.0, 0.0);
    CouplingParams cp;
    ShuttleSchedule sch;
    sch.d_nm = 20.0;
    sch.tau_s_ns = 10.0;
    sch.B_T = 0.04;
    const auto s0 = SpinValleyState::spin_superposition_ground(land, 0.0, 0.0);
    const auto res = propagate_full(s0, sch, land, cp, 5e-4);
    CHECK(res.state.trace_error() < 1e-7);
    CHECK(res.steps > 0);
    const auto pops = res.state.valley_populations(land, 0.0);
    CHECK(pops[0] < 1e-6); // excited-branch leakage
    CHECK(res.state.t_ns == doctest::Approx(sch.total_time_ns()));
    CHECK(res.state.x_nm == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("propagate_full: halving dt_max changes P_S by < 1e-4") {
    const auto land = uniform_landscape(60.0, {40.0, 0.0}, 2e-4, -8e-4);
    CouplingParams cp;
    ShuttleSchedule sch;
    sch.d_nm = 50.0;
    sch.tau_s_ns = 25.0;
    sch.tau_w_ns = 5.0;
    sch.B_T = 0.5;
    const auto s0 = SpinValleyState::spin_superposition_ground(land, 0.0, 0.0);
    const auto coarse = propagate_full(s0, sch, land, cp, 2e-3);
    const auto fine = propagate_full(s0, sch, land, cp, 1e-3);
    const double p_coarse = singlet_return_probability(coarse.state, cp, sch.B_T);
    const double p_fine = singlet_return_probability(fine.state, cp, sch.B_T);
    CHECK(std::abs(p_coarse - p_fine) < 1e-4);
}

TEST_CASE("full propagation agrees with the event model on a clean path") {
    // no resonance in range (E_Z = 28.9 ueV << E_VS = 80) and no low-E_VS spot
    const auto land = uniform_landscape(60.0, {40.0, 0.0}, 0.0, -1e-3);
    CouplingParams cp;
    EventModelConfig ev; // landscape mode; q ~ q_max e^-75 ~ 0
    RandomStream rng(3);
    for (double tau_s : {20.0, 40.0, 60.0, 80.0}) {
        ShuttleSchedule sch;
        sch.d_nm = 50.0;
        sch.tau_s_ns = tau_s;
        sch.B_T = 0.5;
        const auto s0 = SpinValleyState::spin_superposition_ground(land, 0.0, 0.0);
        const auto full = propagate_full(s0, sch, land, cp, 1e-3);
        const double p_full = singlet_return_probability(full.state, cp, sch.B_T);
        const auto rec = propagate_events(sch, land, cp, ev, rng);
        CHECK(rec.n_valley_flips == 0);
        CHECK(rec.n_svf == 0);
        const double p_event = singlet_return_probability(rec, cp);
        CHECK(std::abs(p_full - p_event) < 0.02);
    }
}

TEST_CASE("event model: deterministic phase in the event-free limit") {
    // dg_minus linear in x: exact phase integral in closed form
    LandscapeConfig cfg;
    cfg.extent_x_nm = 120.0;
    cfg.extent_y_nm = 2.0;
    cfg.grid_spacing_nm = 1.0;
    cfg.a_dot_nm = 3.0;
    const int nx = 121, ny = 3;
    const double alpha = 1e-5; // dg per nm
    std::vector<std::complex<double>> delta(static_cast<std::size_t>(nx) * ny, {40.0, 0.0});
    std::vector<double> dgp(delta.size(), 0.0), dgm(delta.size());
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) dgm[static_cast<std::size_t>(iy) * nx + ix] = alpha * ix;
    const auto land = ValleyLandscape::from_fields(cfg, delta, dgp, dgm);

    CouplingParams cp;
    cp.g_L = {2.0031, 2.0031};
    EventModelConfig evc;
    evc.mode = ValleyFlipMode::periodic;
    evc.q_v = 0.0;
    ShuttleSchedule sch;
    sch.d_nm = 100.0;
    sch.tau_s_ns = 50.0;
    sch.tau_w_ns = 7.0;
    sch.n_rep = 3;
    sch.B_T = 0.25;

    RandomStream rng(9);
    const auto rec = propagate_events(sch, land, cp, evc, rng);
    CHECK(rec.n_valley_flips == 0);
    CHECK(rec.n_svf == 0);
    CHECK(rec.final_valley == Valley::minus);
    CHECK(rec.elapsed_ns == doctest::Approx(sch.total_time_ns()).epsilon(1e-12));

    const double rate = 57.8838 * sch.B_T / 0.658212; // mu_B B / hbar per unit g
    // forward + return legs each integrate alpha*x over tau_S/2; wait sits at x=d
    const double dg_time_integral =
        sch.n_rep * alpha * sch.d_nm * (0.5 * sch.tau_s_ns + sch.tau_w_ns);
    const double expect_mobile =
        rate * (2.0 * sch.total_time_ns() + dg_time_integral); // g0 = 2
    CHECK(rec.mobile_phase_rad == doctest::Approx(expect_mobile).epsilon(1e-9));
    CHECK(rec.static_phase_rad ==
          doctest::Approx(rate * 2.0031 * sch.total_time_ns()).epsilon(1e-12));
}

TEST_CASE("event model: schedule metadata does not leak into the phase") {
    const auto land = uniform_landscape(60.0, {40.0, 0.0}, 1e-4, -1e-4);
    CouplingParams cp;
    EventModelConfig evc;
    evc.mode = ValleyFlipMode::periodic;
    evc.q_v = 0.0;
    ShuttleSchedule a;
    a.d_nm = 50.0;
    a.tau_s_ns = 40.0;
    a.B_T = 0.3;
    ShuttleSchedule b = a;
    b.f_MHz = 125.0; // metadata only
    b.drive_amplitudes_mV = {10.0, 20.0, 30.0, 40.0};
    b.drive_offsets_mV = {1.0, 2.0, 3.0, 4.0};
    RandomStream r1(5), r2(5);
    const auto ra = propagate_events(a, land, cp, evc, r1);
    const auto rb = propagate_events(b, land, cp, evc, r2);
    CHECK(std::abs(ra.mobile_phase_rad - rb.mobile_phase_rad) < 1e-9);
    CHECK(std::abs(ra.static_phase_rad - rb.static_phase_rad) < 1e-9);
}

TEST_CASE("event model: deterministic toggling at q_v = 1") {
    const auto land = coarse_landscape({40.0, 0.0}, 0.0, 0.0);
    CouplingParams cp;
    cp.delta_sv_ueV = 0.0;
    EventModelConfig evc;
    evc.mode = ValleyFlipMode::periodic;
    evc.q_v = 1.0;
    evc.period_nm = 280.0;
    ShuttleSchedule sch;
    sch.d_nm = 280.0;
    sch.tau_s_ns = 100.0;
    sch.n_rep = 2;
    RandomStream rng(1);
    const auto rec = propagate_events(sch, land, cp, evc, rng);
    CHECK(rec.n_valley_flips == 4); // one opportunity per one-way pass
    CHECK(rec.final_valley == Valley::minus);
    int logged = 0;
    for (const auto& e : rec.log)
        if (e.kind == EventKind::valley_minimum) {
            CHECK(e.probability == doctest::Approx(1.0));
            CHECK(e.outcome == EventOutcome::flipped);
            ++logged;
        }
    CHECK(logged == 4);
}

TEST_CASE("event model: empirical flip rate matches gamma = q_v v_s / lambda") {
    const auto land = coarse_landscape({40.0, 0.0}, 0.0, 0.0);
    CouplingParams cp;
    cp.delta_sv_ueV = 0.0;
    EventModelConfig evc;
    evc.mode = ValleyFlipMode::periodic;
    evc.q_v = 0.023;
    evc.period_nm = 280.0;
    evc.record_threshold = 1.0; // keep the log empty; only counters matter here
    ShuttleSchedule sch;
    sch.d_nm = 280.0;
    sch.tau_s_ns = 100.0; // v_s = 5.6 nm/ns
    sch.n_rep = 1000;
    RandomStream rng(17);
    long flips = 0;
    double elapsed = 0.0;
    for (int i = 0; i < 200; ++i) { // 4e5 one-way passes in total
        const auto rec = propagate_events(sch, land, cp, evc, rng);
        flips += rec.n_valley_flips;
        elapsed += rec.elapsed_ns;
    }
    const double gamma_hat = static_cast<double>(flips) / elapsed;
    CHECK(gamma_hat == doctest::Approx(0.023 * 5.6 / 280.0).epsilon(0.02));
}

TEST_CASE("event model: stochastic phase variance is diffusive in n_rep") {
    const auto land = coarse_landscape({40.0, 0.0}, 2e-4, 0.0);
    CouplingParams cp;
    cp.delta_sv_ueV = 0.0;
    EventModelConfig evc;
    evc.mode = ValleyFlipMode::periodic;
    evc.q_v = 0.023;
    evc.period_nm = 280.0;
    evc.record_threshold = 1.0;
    ShuttleSchedule sch;
    sch.d_nm = 280.0;
    sch.tau_s_ns = 100.0;
    sch.B_T = 0.5;

    auto phase_variance = [&](int n_rep, uint64_t seed) {
        sch.n_rep = n_rep;
        RandomStream rng(seed);
        std::vector<double> phases;
        for (int i = 0; i < 2500; ++i)
            phases.push_back(propagate_events(sch, land, cp, evc, rng).mobile_phase_rad);
        return variance(phases);
    };
    // gamma tau_rep = 0.046 per repetition; many repetitions reach diffusion
    const double v_half = phase_variance(150, 21);
    const double v_full = phase_variance(300, 22);
    CHECK(v_full / v_half == doctest::Approx(2.0).epsilon(0.20));
}

TEST_CASE("valley flip probability is the capped logistic") {
    EventModelConfig evc; // q_max 0.023, midpoint 5, width 1
    CHECK(valley_flip_probability(evc, 5.0) == doctest::Approx(0.5 * 0.023).epsilon(1e-12));
    CHECK(valley_flip_probability(evc, 0.0) ==
          doctest::Approx(0.023 / (1.0 + std::exp(-5.0))).epsilon(1e-12));
    CHECK(valley_flip_probability(evc, 40.0) < 1e-12);
    CHECK(valley_flip_probability(evc, 3.0) < valley_flip_probability(evc, 2.0));
}

TEST_CASE("singlet return probability from a record") {
    CouplingParams cp;
    cp.t2_static_ns = 1500.0;
    EventResult rec;
    rec.elapsed_ns = 0.0;
    CHECK(singlet_return_probability(rec, cp) == doctest::Approx(1.0));

    rec.elapsed_ns = 300.0;
    rec.static_phase_rad = 4.0;
    rec.mobile_phase_rad = 4.0 - kPi; // phi = pi
    const double v = std::exp(-std::pow(300.0 / 1500.0, 2));
    CHECK(singlet_return_probability(rec, cp) == doctest::Approx(0.5 * (1.0 - v)).epsilon(1e-12));

    rec.n_svf = 1; // flip destroys the mobile coherence
    CHECK(singlet_return_probability(rec, cp) == doctest::Approx(0.5));
    rec.n_svf = 0;

    cp.spam_epsilon = 0.02;
    CHECK(singlet_return_probability(rec, cp) ==
          doctest::Approx(0.5 * (1.0 - v) + 0.02).epsilon(1e-12));

    // clipping: phi = 0, visibility ~ 1, epsilon pushes past 1
    rec.mobile_phase_rad = rec.static_phase_rad;
    rec.elapsed_ns = 1.0;
    cp.spam_epsilon = 0.2;
    CHECK(singlet_return_probability(rec, cp) == doctest::Approx(1.0));
}

} // TEST_SUITE
