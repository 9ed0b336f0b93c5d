#include "doctest.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <filesystem>
#include <vector>

#include "shuttlesim/analysis.hpp"
#include "shuttlesim/errors.hpp"
#include "shuttlesim/io.hpp"
#include "shuttlesim/landscape.hpp"
#include "shuttlesim/units.hpp"

using namespace shuttlesim;
namespace fs = std::filesystem;

namespace {

template <typename Fn>
Errc thrown_code(Fn&& fn) {
    try {
        fn();
    } catch (const SimError& e) {
        return e.code();
    }
    FAIL("expected a SimError");
    return Errc::io_error;
}

ValleyLandscape flat_landscape(double dgp, double dgm) {
    LandscapeConfig cfg;
    cfg.extent_x_nm = 120.0;
    cfg.extent_y_nm = 2.0;
    cfg.grid_spacing_nm = 1.0;
    cfg.a_dot_nm = 3.0;
    const int nx = 121, ny = 3;
    std::vector<std::complex<double>> d(static_cast<std::size_t>(nx) * ny, {40.0, 0.0});
    std::vector<double> p(d.size(), dgp), m(d.size(), dgm);
    return ValleyLandscape::from_fields(cfg, d, p, m);
}

SingletTrace synth_trace(const std::vector<double>& t, const std::vector<double>& p) {
    SingletTrace tr;
    tr.axis = TraceAxis::accumulated_tau;
    tr.abscissa = t;
    tr.p_s = p;
    tr.B_T = 0.04;
    tr.v_s_nm_per_ns = 2.8;
    tr.d_nm = 140.0;
    tr.n_samples_per_point = 1;
    return tr;
}

} // namespace

TEST_SUITE("analysis") {

TEST_CASE("telegraph coherence closed form") {
    CHECK(rtn_coherence(1.0, 1.0, 0.0) == doctest::Approx(1.0));
    CHECK(rtn_coherence(1.0, 1.0, 0.7) == doctest::Approx(0.9599572393880099).epsilon(1e-12));
    CHECK(rtn_coherence(0.2, 2.0, 1.3) == doctest::Approx(0.3761925859709608).epsilon(1e-12));
    CHECK(rtn_coherence(5.0, 1.0, 0.4) == doctest::Approx(0.9924721394596913).epsilon(1e-12));
}

TEST_CASE("telegraph decay time: slow, fast, and critical flips") {
    CHECK(decay_time(0.05, 1.0) == doctest::Approx(20.0).epsilon(1e-12));     // 1/gamma
    CHECK(decay_time(0.3, 1.0) == doctest::Approx(1.0 / 0.3).epsilon(1e-12)); // 1/gamma
    CHECK(decay_time(0.5, 1.0) == doctest::Approx(2.0).epsilon(1e-12));       // 2/dw minimum
    CHECK(decay_time(10.0, 1.0) == doctest::Approx(79.94996871087226).epsilon(1e-12));
    CHECK(decay_time(50.0, 1.0) == doctest::Approx(399.98999975).epsilon(1e-9));
    // motional narrowing: ~ 8 gamma / dw^2 for gamma >> dw
    CHECK(decay_time(50.0, 1.0) == doctest::Approx(8.0 * 50.0).epsilon(1e-3));
    // longest-lived coherence at fixed dw sits away from gamma = dw/2
    CHECK(decay_time(0.5, 1.0) < decay_time(0.05, 1.0));
    CHECK(decay_time(0.5, 1.0) < decay_time(5.0, 1.0));
}

TEST_CASE("narrowing model evaluates decay_time on physical scales") {
    NarrowingModel m;
    m.q_v = 0.023;
    m.scale = 5.4e-4;
    m.lambda_nm = 280.0;
    CHECK(m.gamma_per_ns(22.4) == doctest::Approx(0.00184).epsilon(1e-12));
    CHECK(m.delta_omega_per_ns(0.04) == doctest::Approx(0.0018995248947).epsilon(1e-9));
    CHECK(m.model_T_ns(0.04, 22.4) == doctest::Approx(3786.8561686391076).epsilon(1e-9));
}

TEST_CASE("telegraph monte carlo agrees with the closed form") {
    const std::vector<double> tau{0.2, 0.5, 1.0, 2.0, 4.0};
    const auto mc = telegraph_mc(0.8, 2.0, 20000, tau, 99);
    REQUIRE(mc.tau.size() == tau.size());
    REQUIRE(mc.mean.size() == tau.size());
    CHECK(mc.n_traj == 20000);
    for (std::size_t i = 0; i < tau.size(); ++i) {
        CHECK(mc.stderr_[i] > 0.0);
        const double w = rtn_coherence(0.8, 2.0, tau[i]);
        CHECK(std::abs(mc.mean[i] - w) < 3.0 * mc.stderr_[i]);
    }
    const auto again = telegraph_mc(0.8, 2.0, 20000, tau, 99);
    for (std::size_t i = 0; i < tau.size(); ++i) CHECK(again.mean[i] == mc.mean[i]);
}

TEST_CASE("mc decay time matches the analytic fast-flip value") {
    std::vector<double> tau;
    for (int i = 1; i <= 60; ++i) tau.push_back(2.0 * i);
    const auto mc = telegraph_mc(5.0, 1.0, 40000, tau, 7);
    const double t_mc = mc_decay_time(mc, 5.0, 1.0);
    CHECK(t_mc == doctest::Approx(39.8997487421323).epsilon(0.10));
}

TEST_CASE("gaussian two-tone fit recovers noise-free parameters") {
    std::vector<double> t, p;
    for (int i = 0; i < 140; ++i) {
        const double ti = 5.0 * i;
        t.push_back(ti);
        p.push_back(0.25 * std::cos(0.8 * ti + 0.4) * std::exp(-std::pow(ti / 300.0, 2)) +
                    0.1 * std::cos(0.05 * ti + 1.1) + 0.5 + 0.01);
    }
    const auto fit = fit_gaussian_two_tone(synth_trace(t, p));
    CHECK(fit.model == DecayModel::gaussian_two_tone);
    CHECK(fit.decay_ns == doctest::Approx(300.0).epsilon(0.02));
    CHECK(fit.omega1 == doctest::Approx(0.8).epsilon(1e-3));
    CHECK(std::abs(fit.a1) == doctest::Approx(0.25).epsilon(0.02));
    CHECK(fit.omega2 == doctest::Approx(0.05).epsilon(0.02));
    CHECK(fit.epsilon == doctest::Approx(0.01).epsilon(0.5));
    CHECK(fit.residual_rms < 1e-6);
    CHECK(fit.decay_stderr_ns < 10.0);
}

TEST_CASE("exponential fit recovers noise-free parameters and honors exclusions") {
    std::vector<double> t, p;
    for (int i = 0; i < 120; ++i) {
        const double ti = 10.0 * i;
        t.push_back(ti);
        double v = 0.3 * std::cos(0.3 * ti + 1.0) * std::exp(-ti / 500.0) + 0.5 + 0.02;
        if (i < 3) v += 0.2; // corrupt the first points
        p.push_back(v);
    }
    const auto fit = fit_exponential(synth_trace(t, p), 3);
    CHECK(fit.model == DecayModel::exponential);
    REQUIRE(fit.excluded_indices.size() == 3);
    CHECK(fit.excluded_indices[0] == 0);
    CHECK(fit.excluded_indices[2] == 2);
    CHECK(fit.decay_ns == doctest::Approx(500.0).epsilon(0.02));
    CHECK(fit.omega1 == doctest::Approx(0.3).epsilon(1e-3));
    CHECK(std::abs(fit.a1) == doctest::Approx(0.3).epsilon(0.02));
    CHECK(fit.residual_rms < 1e-6);
}

TEST_CASE("st_fft: tone location, axis scaling, and amplitude ratio") {
    const double dt = 2.0;
    const int n = 256;
    const double df = 1.0 / (n * dt);
    const double f1 = 16 * df, f2 = 48 * df;
    std::vector<double> taus, p1, p2;
    for (int i = 0; i < n; ++i) {
        const double tau = dt * i;
        taus.push_back(tau);
        p1.push_back(0.5 + 0.4 * std::cos(2.0 * kPi * f1 * tau));
        p2.push_back(0.5 + 0.4 * std::cos(2.0 * kPi * f1 * tau) +
                     0.2 * std::cos(2.0 * kPi * f2 * tau));
    }
    SingletTrace c1 = synth_trace(taus, p1);
    c1.axis = TraceAxis::tau_s_sweep;
    c1.d_nm = 100.0;
    SingletTrace c2 = synth_trace(taus, p2);
    c2.axis = TraceAxis::tau_s_sweep;
    c2.d_nm = 200.0;

    const double B = 0.7;
    const auto spec = st_fft({c1, c2}, B);
    REQUIRE(spec.magnitude.size() == 2);
    REQUIRE(spec.d_nm == std::vector<double>{100.0, 200.0});
    REQUIRE(spec.frequency_axis.size() == spec.delta_g_axis.size());
    REQUIRE(spec.magnitude[0].size() == spec.frequency_axis.size());

    PhysicalConstants pc;
    for (std::size_t k = 0; k < spec.frequency_axis.size(); ++k) {
        if (k > 0) CHECK(spec.frequency_axis[k] > spec.frequency_axis[k - 1]);
        CHECK(spec.delta_g_axis[k] ==
              doctest::Approx(spec.frequency_axis[k] * pc.h() / (2.0 * pc.mu_B * B))
                  .epsilon(1e-12));
    }

    const auto& m1 = spec.magnitude[0];
    const std::size_t peak = std::max_element(m1.begin(), m1.end()) - m1.begin();
    CHECK(std::abs(spec.frequency_axis[peak] - f1) <= 1.5 * df); // within one bin

    // two tones with amplitude ratio 1:2 keep that ratio in magnitude
    const auto peaks = spectral_peaks(spec.magnitude[1], 0.2, 4);
    REQUIRE(peaks.size() == 2);
    const double ratio = spec.magnitude[1][peaks[1]] / spec.magnitude[1][peaks[0]];
    CHECK(ratio == doctest::Approx(0.5).epsilon(0.10));
}

TEST_CASE("st_fft: mean removal kills the dc component") {
    std::vector<double> taus, flat;
    for (int i = 0; i < 64; ++i) {
        taus.push_back(4.0 * i);
        flat.push_back(0.73);
    }
    SingletTrace c = synth_trace(taus, flat);
    c.axis = TraceAxis::tau_s_sweep;
    const auto spec = st_fft({c}, 0.1);
    for (double m : spec.magnitude[0]) CHECK(m < 1e-12);
}

TEST_CASE("st_fft input validation") {
    std::vector<double> taus{0.0, 2.0, 4.0, 7.0}; // non-uniform
    std::vector<double> p{0.5, 0.6, 0.4, 0.5};
    SingletTrace bad = synth_trace(taus, p);
    bad.axis = TraceAxis::tau_s_sweep;
    CHECK(thrown_code([&] { (void)st_fft({bad}, 0.1); }) == Errc::non_uniform_sampling);

    SingletTrace a = synth_trace({0.0, 2.0, 4.0, 6.0}, p);
    a.axis = TraceAxis::tau_s_sweep;
    SingletTrace b = synth_trace({0.0, 3.0, 6.0, 9.0}, p);
    b.axis = TraceAxis::tau_s_sweep;
    CHECK(thrown_code([&] { (void)st_fft({a, b}, 0.1); }) == Errc::mismatched_axes);
}

TEST_CASE("spectral_peaks thresholds and separation") {
    std::vector<double> mag(50, 0.01);
    mag[10] = 1.0;
    mag[30] = 0.5;
    mag[32] = 0.45; // shadowed by the peak at 30 within min_separation
    auto peaks = spectral_peaks(mag, 0.3, 4);
    REQUIRE(peaks.size() == 2);
    CHECK(peaks[0] == 10);
    CHECK(peaks[1] == 30);
    peaks = spectral_peaks(mag, 0.6, 4);
    REQUIRE(peaks.size() == 1);
    CHECK(peaks[0] == 10);
    // separation 1 admits the shoulder too
    peaks = spectral_peaks(mag, 0.3, 1);
    CHECK(peaks.size() == 3);
}

TEST_CASE("average_delta_g over uniform and linear fields") {
    const auto land = flat_landscape(2e-4, -1e-4);
    const std::array<double, 2> g_L{2.003, 2.001};
    CHECK(average_delta_g(land, Path::straight(0.0), 100.0, Valley::minus, Valley::minus, g_L) ==
          doctest::Approx(2.001 - (2.0 - 1e-4)).epsilon(1e-12));
    CHECK(average_delta_g(land, Path::straight(0.0), 100.0, Valley::plus, Valley::plus, g_L) ==
          doctest::Approx(2.003 - (2.0 + 2e-4)).epsilon(1e-12));

    // linear mobile field averages to its midpoint value
    LandscapeConfig cfg = land.config();
    const int nx = land.nx(), ny = land.ny();
    std::vector<std::complex<double>> d(static_cast<std::size_t>(nx) * ny, {40.0, 0.0});
    std::vector<double> p(d.size(), 0.0), m(d.size());
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) m[static_cast<std::size_t>(iy) * nx + ix] = 1e-5 * ix;
    const auto land2 = ValleyLandscape::from_fields(cfg, d, p, m);
    CHECK(average_delta_g(land2, Path::straight(0.0), 100.0, Valley::minus, Valley::minus,
                          {2.0, 2.0}) == doctest::Approx(-1e-5 * 50.0).epsilon(1e-9));
}

TEST_CASE("trace simulation is seed-deterministic with exact abscissae") {
    const auto land = flat_landscape(1e-4, -1e-4);
    CouplingParams cp;
    EventModelConfig evc;
    ShuttleSchedule sch;
    sch.d_nm = 100.0;
    sch.tau_s_ns = 50.0;
    sch.tau_w_ns = 10.0;
    sch.B_T = 0.1;
    const auto tr = simulate_ps_vs_tau(sch, land, cp, evc, 12, 40, 1234);
    REQUIRE(tr.abscissa.size() == 12);
    CHECK(tr.axis == TraceAxis::accumulated_tau);
    CHECK(tr.n_samples_per_point == 40);
    CHECK(tr.B_T == 0.1);
    for (int k = 0; k < 12; ++k)
        CHECK(tr.abscissa[k] == doctest::Approx((k + 1) * 60.0).epsilon(1e-12));
    const auto tr2 = simulate_ps_vs_tau(sch, land, cp, evc, 12, 40, 1234);
    CHECK(tr2.p_s == tr.p_s);
    const auto tr3 = simulate_ps_vs_tau(sch, land, cp, evc, 12, 40, 1235);
    CHECK(tr3.p_s != tr.p_s);

    const std::vector<double> grid{20.0, 30.0, 40.0};
    const auto ts = simulate_ps_vs_tau_s(sch, land, cp, evc, grid, 25, 77);
    CHECK(ts.axis == TraceAxis::tau_s_sweep);
    CHECK(ts.abscissa == grid);
    CHECK(ts.d_nm == 100.0);
    for (double v : ts.p_s) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("trace and spectrum files round trip") {
    const fs::path dir = fs::temp_directory_path() / "shuttlesim_analysis_rt";
    fs::remove_all(dir);
    fs::create_directories(dir);

    SingletTrace tr = synth_trace({0.0, 5.0, 10.0}, {0.9, 0.4, 0.6});
    tr.axis = TraceAxis::distance;
    tr.path_id = "y0";
    save_trace(dir / "t.csv", tr);
    const auto back = load_trace(dir / "t.csv");
    CHECK(back.axis == TraceAxis::distance);
    CHECK(back.abscissa == tr.abscissa);
    CHECK(back.p_s == tr.p_s);
    CHECK(back.B_T == tr.B_T);
    CHECK(back.v_s_nm_per_ns == tr.v_s_nm_per_ns);
    CHECK(back.d_nm == tr.d_nm);
    CHECK(back.path_id == "y0");
    CHECK(back.n_samples_per_point == 1);
    save_trace(dir / "t2.csv", back); // resave is byte-identical
    CHECK(checksum_file(dir / "t.csv") == checksum_file(dir / "t2.csv"));

    StSpectrum sp;
    sp.d_nm = {100.0, 200.0};
    sp.delta_g_axis = {0.0, 1e-4};
    sp.frequency_axis = {0.0, 0.01};
    sp.magnitude = {{0.1, 0.2}, {0.3, 0.4}};
    save_spectrum(dir / "s.csv", sp);
    const auto sp2 = load_spectrum(dir / "s.csv");
    CHECK(sp2.d_nm == sp.d_nm);
    CHECK(sp2.delta_g_axis == sp.delta_g_axis);
    CHECK(sp2.frequency_axis == sp.frequency_axis);
    CHECK(sp2.magnitude == sp.magnitude);
    fs::remove_all(dir);
}

TEST_CASE("trace validation rejects mismatched columns") {
    SingletTrace tr = synth_trace({0.0, 5.0}, {0.9});
    CHECK_THROWS_AS(tr.validate(), SimError);
}

} // TEST_SUITE
