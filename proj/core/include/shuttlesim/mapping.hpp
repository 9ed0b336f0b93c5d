#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shuttlesim/dynamics.hpp"
#include "shuttlesim/landscape.hpp"
#include "shuttlesim/units.hpp"

namespace shuttlesim {

// Spectroscopy scan model: shuttle to d, wait tau_W(B), return. During the
// wait the mobile spin's Larmor rate carries the dispersive shift
// sign(delta) (sqrt(delta^2 + 4 delta_sv^2) - |delta|) / (2 hbar),
// delta = E_Z - E_VS(d); P_S is estimated from n_samples Bernoulli draws.
struct ScanConfig {
    double phase_budget_rad = 2.0 * kPi;
    double g_ref = 2.0;
    double delta_g_eff = 5e-3;  // effective contrast scale dividing tau_W
    double max_tau_w_ns = 5000.0;
    double v_s_nm_per_ns = 2.8;
    double row_offset_rms = 0.0; // additive per-B-row nuisance offset
    void validate() const;
};

struct PsScanPatch {
    std::vector<double> B_T;              // ascending, uniform step
    std::vector<double> d_nm;             // ascending
    std::vector<std::vector<double>> p_s; // [iB][id]
    std::vector<double> tau_w_ns;         // wait time used per B row
    double y_nm = 0.0;
    std::string id;
    int n_samples = 0;
    uint64_t seed = 0;
    bool normalized = false;
    void validate() const;
    double b_step() const;
};

struct EvsTraceEstimate {
    std::vector<double> d_nm;
    std::vector<double> evs_ueV;
    std::vector<double> confidence_ueV;
    std::vector<uint8_t> missing; // 1 = no usable ridge in this column
    double y_nm = 0.0;
    bool low_coverage = false; // ridge found in < 80% of columns
    std::size_t n_missing() const;
};

struct EvsMap {
    std::vector<double> d_nm;
    std::vector<double> y_nm;
    std::vector<std::vector<double>> evs_ueV;        // [iy][ix]
    std::vector<std::vector<double>> confidence_ueV; // [iy][ix]
    std::vector<std::vector<uint8_t>> missing;       // [iy][ix]
    double value_at(double d, double y) const;       // bilinear on resolved cells
};

struct TimeEstimateParams {
    double tau_ss_s = 2e-6;
    long long n_B = 600;
    long long n_samples = 100;
    double l_x_nm = 10000.0;
    double delta_x_nm = 5.0;
    double l_y_nm = 40.0;
    double delta_y_nm = 5.0;
    double tau_B_s = 600.0;
};

struct TimeEstimate {
    double tau_ss_s = 0.0;
    long long n_B = 0;
    long long n_samples = 0;
    long long n_x = 0;
    long long n_y = 0;
    double l_x_nm = 0.0, delta_x_nm = 0.0;
    double l_y_nm = 0.0, delta_y_nm = 0.0;
    double tau_B_s = 0.0;
    double sampling_seconds = 0.0; // tau_ss * n_B * n_samples * n_x * n_y
    double total_seconds = 0.0;    // sampling_seconds + tau_B
};

// tau_W = phase_budget * hbar / (g_ref * mu_B * B); strictly decreasing in B.
double tau_w_schedule(double B_T, double phase_budget_rad, double g_ref,
                      const PhysicalConstants& constants = {});

std::vector<double> default_b_grid(double B_min_T = 0.005, double B_max_T = 1.75,
                                   double step_T = 0.005);

PsScanPatch simulate_ps_scan(const ValleyLandscape& landscape, const CouplingParams& coupling,
                             double y_nm, std::span<const double> B_grid,
                             std::span<const double> d_grid, int n_samples, uint64_t seed,
                             const ScanConfig& config = {});

// Subtracts the per-B-row mean; idempotent, preserves column differences.
PsScanPatch normalize_linewise(PsScanPatch patch);

struct RidgeOptions {
    double smoothing_nm = 4.0;       // spline knot spacing; wider knots smear sharp dips
    double significance = 5.0;       // matched-filter peak z-score threshold
    int max_gap_columns = 3;         // longer gaps stay missing
    double ambiguity_ratio = 0.8;    // secondary peak ratio that inflates confidence
};

// Per d column: matched filter against the dispersive lineshape over B,
// E_VS = g0 mu_B B_res; smoothing spline with the configured knot spacing.
// Columns without a significant response are recorded missing (not fatal).
EvsTraceEstimate extract_ridge(const PsScanPatch& patch, const CouplingParams& coupling,
                               const RidgeOptions& options = {},
                               const PhysicalConstants& constants = {});

// Linear interpolation in y between traces; exact at trace rows. y_step <= 0
// keeps exactly the trace rows.
EvsMap assemble_map(const std::vector<EvsTraceEstimate>& traces, double y_step_nm = 0.0);

// Exact integer-nanosecond evaluation of the sampling-time budget.
TimeEstimate estimate_measurement_time(const TimeEstimateParams& params);

// Patch files: JSON header (axes, schedule, y offset) + CSV matrix.
void save_patch(const PsScanPatch& patch, const std::string& path);
PsScanPatch load_patch(const std::string& path);

void save_trace_estimate(const EvsTraceEstimate& trace, const std::string& path);
EvsTraceEstimate load_trace_estimate(const std::string& path);

// Map files: CSV {d_nm, y_nm, evs_ueV, confidence_ueV}; missing cells omitted.
void save_map(const EvsMap& map, const std::string& path);

} // namespace shuttlesim
