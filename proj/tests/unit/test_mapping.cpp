#include "doctest.h"

#include <cmath>
#include <complex>
#include <filesystem>
#include <vector>

#include "shuttlesim/errors.hpp"
#include "shuttlesim/io.hpp"
#include "shuttlesim/landscape.hpp"
#include "shuttlesim/mapping.hpp"
#include "shuttlesim/units.hpp"

using namespace shuttlesim;
namespace fs = std::filesystem;

namespace {

ValleyLandscape const_evs_landscape(double evs, double extent_x = 260.0) {
    LandscapeConfig cfg;
    cfg.extent_x_nm = extent_x;
    cfg.extent_y_nm = 2.0;
    cfg.grid_spacing_nm = 1.0;
    cfg.a_dot_nm = 3.0;
    const int nx = static_cast<int>(extent_x) + 1, ny = 3;
    std::vector<std::complex<double>> d(static_cast<std::size_t>(nx) * ny, {0.5 * evs, 0.0});
    std::vector<double> g(d.size(), 0.0);
    return ValleyLandscape::from_fields(cfg, d, g, g);
}

std::vector<double> b_window(double lo, double step, int n) {
    std::vector<double> b(n);
    for (int i = 0; i < n; ++i) b[i] = lo + step * i;
    return b;
}

} // namespace

TEST_SUITE("mapping") {

TEST_CASE("wait-time schedule: anchor, monotonicity, zero field") {
    CHECK(tau_w_schedule(0.1, 2.0 * kPi, 2.0) ==
          doctest::Approx(0.3572388101169317).epsilon(1e-12));
    CHECK(tau_w_schedule(0.2, 2.0 * kPi, 2.0) < tau_w_schedule(0.1, 2.0 * kPi, 2.0));
    CHECK_THROWS_AS((void)tau_w_schedule(0.0, 2.0 * kPi, 2.0), SimError);
}

TEST_CASE("default B grid covers the published scan window") {
    const auto b = default_b_grid();
    REQUIRE(b.size() == 350);
    CHECK(b.front() == doctest::Approx(0.005));
    CHECK(b.back() == doctest::Approx(1.75));
    for (std::size_t i = 1; i < b.size(); ++i)
        CHECK(b[i] - b[i - 1] == doctest::Approx(0.005).epsilon(1e-9));
}

TEST_CASE("scan config validation") {
    ScanConfig c;
    CHECK_NOTHROW(c.validate());
    c.delta_g_eff = 0.0;
    CHECK_THROWS_AS(c.validate(), SimError);
    c = {};
    c.max_tau_w_ns = -1.0;
    CHECK_THROWS_AS(c.validate(), SimError);
}

TEST_CASE("scan simulation: deterministic, well-formed patches") {
    const auto land = const_evs_landscape(20.0);
    CouplingParams cp;
    const auto B = b_window(0.10, 0.005, 40);
    const std::vector<double> d{40.0, 80.0, 120.0};
    const auto patch = simulate_ps_scan(land, cp, 0.0, B, d, 200, 42);
    CHECK_NOTHROW(patch.validate());
    CHECK(patch.B_T == B);
    CHECK(patch.d_nm == d);
    CHECK(patch.n_samples == 200);
    CHECK(patch.seed == 42);
    CHECK_FALSE(patch.normalized);
    CHECK(patch.b_step() == doctest::Approx(0.005).epsilon(1e-9));
    REQUIRE(patch.tau_w_ns.size() == B.size());
    ScanConfig sc;
    for (std::size_t i = 0; i < B.size(); ++i) {
        const double want =
            std::min(tau_w_schedule(B[i], sc.phase_budget_rad, sc.g_ref) / sc.delta_g_eff,
                     sc.max_tau_w_ns);
        CHECK(patch.tau_w_ns[i] == doctest::Approx(want).epsilon(1e-12));
    }

    const auto again = simulate_ps_scan(land, cp, 0.0, B, d, 200, 42);
    CHECK(again.p_s == patch.p_s);
    const auto other = simulate_ps_scan(land, cp, 0.0, B, d, 200, 43);
    CHECK(other.p_s != patch.p_s);
}

TEST_CASE("linewise normalization: zero row means, idempotent, shape-preserving") {
    const auto land = const_evs_landscape(20.0);
    CouplingParams cp;
    ScanConfig sc;
    sc.row_offset_rms = 0.05; // nuisance offsets for the normalizer to remove
    const auto raw =
        simulate_ps_scan(land, cp, 0.0, b_window(0.10, 0.005, 30),
                         std::vector<double>{40.0, 80.0, 120.0}, 500, 7, sc);
    const auto norm = normalize_linewise(raw);
    CHECK(norm.normalized);
    for (std::size_t i = 0; i < norm.p_s.size(); ++i) {
        double m = 0.0;
        for (double v : norm.p_s[i]) m += v;
        CHECK(std::abs(m / norm.p_s[i].size()) < 1e-12);
        for (std::size_t j = 1; j < norm.p_s[i].size(); ++j)
            CHECK(norm.p_s[i][j] - norm.p_s[i][0] ==
                  doctest::Approx(raw.p_s[i][j] - raw.p_s[i][0]).epsilon(1e-9));
    }
    const auto twice = normalize_linewise(norm);
    for (std::size_t i = 0; i < norm.p_s.size(); ++i)
        for (std::size_t j = 0; j < norm.p_s[i].size(); ++j)
            CHECK(twice.p_s[i][j] == doctest::Approx(norm.p_s[i][j]).epsilon(1e-12));
}

TEST_CASE("ridge extraction recovers a flat valley splitting, endpoints included") {
    const auto land = const_evs_landscape(20.0);
    CouplingParams cp;
    // resonance at B = 20/115.7676 = 0.1728 T, inside the window
    const auto B = b_window(0.10, 0.0025, 60);
    std::vector<double> d;
    for (int k = 0; k < 12; ++k) d.push_back(30.0 + 20.0 * k);
    const auto patch = normalize_linewise(simulate_ps_scan(land, cp, 0.0, B, d, 4000, 11));
    const auto est = extract_ridge(patch, cp);

    REQUIRE(est.d_nm == d);
    CHECK(est.n_missing() == 0);
    CHECK_FALSE(est.low_coverage);
    for (std::size_t j = 0; j < d.size(); ++j) {
        CHECK(est.evs_ueV[j] == doctest::Approx(20.0).epsilon(0.08));
        CHECK(est.confidence_ueV[j] > 0.0);
    }
    // regression guard: the final column used to evaluate to zero at the
    // spline's right endpoint
    CHECK(est.evs_ueV.back() > 15.0);
}

TEST_CASE("ridge extraction reports missing columns when no resonance is in window") {
    const auto land = const_evs_landscape(200.0); // resonance needs B = 1.7 T
    CouplingParams cp;
    const auto patch = normalize_linewise(
        simulate_ps_scan(land, cp, 0.0, b_window(0.10, 0.0025, 60),
                         std::vector<double>{40.0, 80.0, 120.0}, 400, 13));
    const auto est = extract_ridge(patch, cp);
    CHECK(est.n_missing() == 3);
    CHECK(est.low_coverage);
}

TEST_CASE("ridge extraction demands a normalized patch") {
    const auto land = const_evs_landscape(20.0);
    CouplingParams cp;
    const auto patch =
        simulate_ps_scan(land, cp, 0.0, b_window(0.10, 0.0025, 60),
                         std::vector<double>{40.0, 80.0}, 200, 3);
    CHECK_THROWS_AS((void)extract_ridge(patch, cp), SimError);
}

TEST_CASE("map assembly interpolates linearly between rows") {
    EvsTraceEstimate a, b;
    a.d_nm = {10.0, 20.0, 30.0};
    a.evs_ueV = {10.0, 12.0, 14.0};
    a.confidence_ueV = {1.0, 1.0, 1.0};
    a.missing = {0, 0, 0};
    a.y_nm = 0.0;
    b = a;
    b.evs_ueV = {22.0, 24.0, 26.0};
    b.y_nm = 12.0;

    const auto map = assemble_map({a, b}, 6.0);
    REQUIRE(map.y_nm == std::vector<double>{0.0, 6.0, 12.0});
    REQUIRE(map.d_nm == a.d_nm);
    CHECK(map.evs_ueV[0][0] == doctest::Approx(10.0));
    CHECK(map.evs_ueV[1][0] == doctest::Approx(16.0)); // midpoint row
    CHECK(map.evs_ueV[2][2] == doctest::Approx(26.0));
    CHECK(map.value_at(20.0, 6.0) == doctest::Approx(18.0));
    CHECK(map.value_at(15.0, 0.0) == doctest::Approx(11.0));

    const auto exact_rows = assemble_map({a, b}, 0.0);
    CHECK(exact_rows.y_nm == std::vector<double>{0.0, 12.0});

    CHECK_THROWS_AS((void)assemble_map({a}, 0.0), SimError);
}

TEST_CASE("measurement-time budget: integer-exact arithmetic") {
    TimeEstimateParams p; // 2 us, 600 fields, 100 shots, 10 um x 40 nm at 5 nm
    const auto est = estimate_measurement_time(p);
    CHECK(est.n_x == 2000);
    CHECK(est.n_y == 8);
    CHECK(est.sampling_seconds == 1920.0); // exact
    CHECK(est.total_seconds == 2520.0);    // exact, including 600 s of field ramps

    p.l_x_nm = 20000.0; // doubled extent doubles the sampling term only
    const auto est2 = estimate_measurement_time(p);
    CHECK(est2.n_x == 4000);
    CHECK(est2.total_seconds == 4440.0);

    p = {};
    p.l_x_nm = 10001.0; // not a multiple of the 5 nm step
    CHECK_THROWS_AS((void)estimate_measurement_time(p), SimError);

    p = {};
    p.tau_ss_s = 1.5e-9; // fractional nanosecond per shot
    CHECK_THROWS_AS((void)estimate_measurement_time(p), SimError);

    p = {};
    p.n_B = 1000000000000LL;
    p.n_samples = 100000000LL; // pushes the product past the overflow guard
    CHECK_THROWS_AS((void)estimate_measurement_time(p), SimError);
}

TEST_CASE("patch and trace-estimate files round trip") {
    const fs::path dir = fs::temp_directory_path() / "shuttlesim_map_rt";
    fs::remove_all(dir);
    fs::create_directories(dir);

    const auto land = const_evs_landscape(20.0);
    CouplingParams cp;
    const auto patch = normalize_linewise(
        simulate_ps_scan(land, cp, 0.0, b_window(0.10, 0.005, 20),
                         std::vector<double>{40.0, 80.0}, 50, 5));
    save_patch(patch, (dir / "p.csv").string());
    const auto back = load_patch((dir / "p.csv").string());
    CHECK(back.B_T == patch.B_T);
    CHECK(back.d_nm == patch.d_nm);
    CHECK(back.p_s == patch.p_s);
    CHECK(back.tau_w_ns == patch.tau_w_ns);
    CHECK(back.y_nm == patch.y_nm);
    CHECK(back.n_samples == patch.n_samples);
    CHECK(back.seed == patch.seed);
    CHECK(back.normalized == patch.normalized);
    save_patch(back, (dir / "p2.csv").string());
    CHECK(checksum_file(dir / "p.csv") == checksum_file(dir / "p2.csv"));

    EvsTraceEstimate t;
    t.d_nm = {10.0, 20.0};
    t.evs_ueV = {5.0, 0.0};
    t.confidence_ueV = {0.5, 0.0};
    t.missing = {0, 1};
    t.y_nm = -3.0;
    t.low_coverage = true;
    save_trace_estimate(t, (dir / "t.csv").string());
    const auto t2 = load_trace_estimate((dir / "t.csv").string());
    CHECK(t2.d_nm == t.d_nm);
    CHECK(t2.evs_ueV == t.evs_ueV);
    CHECK(t2.confidence_ueV == t.confidence_ueV);
    CHECK(t2.missing == t.missing);
    CHECK(t2.y_nm == -3.0);
    CHECK(t2.low_coverage);
    CHECK(t2.n_missing() == 1);
    fs::remove_all(dir);
}

} // TEST_SUITE
