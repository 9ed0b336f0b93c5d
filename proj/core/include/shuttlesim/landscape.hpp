#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "shuttlesim/path.hpp"
#include "shuttlesim/units.hpp"

namespace shuttlesim {

enum class Valley { plus, minus };

// Disorder landscape over a shuttling channel: complex intervalley coupling
// delta(x, y) (ueV; valley splitting E_VS = 2|delta|) plus per-valley g-factor
// deviation fields dg_+(x, y), dg_-(x, y) (dimensionless).
//
// Grid frame: x in [0, extent_x], y in [-extent_y/2, +extent_y/2], uniform
// spacing on both axes.
struct LandscapeConfig {
    double extent_x_nm = 392.0;
    double extent_y_nm = 36.0;
    double grid_spacing_nm = 1.0;
    double a_dot_nm = 17.3;       // lateral dot size = disorder correlation scale
    double rice_nu_ueV = 0.0;     // Rice noncentrality of the E_VS marginal
    double rice_sigma_ueV = 61.4; // Rice scale of the E_VS marginal
    double g_dev_rms = 2.7e-4;    // RMS of each per-valley dg field
    uint64_t seed = 1;
    double max_grid_points = 1.0e7; // memory budget guard
    PhysicalConstants constants{};

    void validate() const;
};

class ValleyLandscape {
public:
    static ValleyLandscape generate(const LandscapeConfig& config);

    // Construct from explicit fields (tests, file loading). Vectors are
    // row-major [iy * nx + ix] with nx/ny implied by config.
    static ValleyLandscape from_fields(const LandscapeConfig& config,
                                       std::vector<std::complex<double>> delta,
                                       std::vector<double> dg_plus,
                                       std::vector<double> dg_minus);

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    double spacing() const { return config_.grid_spacing_nm; }
    double extent_x() const { return (nx_ - 1) * spacing(); }
    double y_min() const { return -0.5 * (ny_ - 1) * spacing(); }
    double y_max() const { return +0.5 * (ny_ - 1) * spacing(); }
    const LandscapeConfig& config() const { return config_; }

    // Valley splitting 2|delta|, bilinear on the sampled modulus (exact at
    // nodes; the midpoint of two nodes is their average).
    double evs_at(double x, double y) const;
    // Complex coupling, bilinear on Re/Im separately (phase-continuous; used
    // by the Hamiltonian).
    std::complex<double> delta_at(double x, double y) const;
    double dg_at(double x, double y, Valley v) const;

    double evs_node(int ix, int iy) const { return evs_[idx(ix, iy)]; }
    std::complex<double> delta_node(int ix, int iy) const { return delta_[idx(ix, iy)]; }
    double dg_node(int ix, int iy, Valley v) const {
        return (v == Valley::plus ? dg_plus_ : dg_minus_)[idx(ix, iy)];
    }

    // E_VS values of grid row iy (y = y_min + iy*spacing), length nx.
    std::span<const double> evs_row(int iy) const;

    // E_VS at nodes subsampled with stride >= min_spacing_nm on both axes
    // (decorrelated draws for distribution tests).
    std::vector<double> decorrelated_evs(double min_spacing_nm) const;

private:
    std::size_t idx(int ix, int iy) const { return static_cast<std::size_t>(iy) * nx_ + ix; }
    void locate(double x, double y, int& ix, int& iy, double& fx, double& fy) const;
    double bilinear(const std::vector<double>& f, double x, double y) const;

    LandscapeConfig config_;
    int nx_ = 0, ny_ = 0;
    std::vector<std::complex<double>> delta_;
    std::vector<double> evs_;
    std::vector<double> dg_plus_, dg_minus_;
};

// Gaussian smoothing-kernel width (nm) such that a field synthesized by
// convolving white noise with that kernel reproduces the target correlation
// length a_dot when measured through the standard acf fit. Monte-Carlo
// bisection with fixed internal seeds; deterministic; results are memoized
// per (a_dot, grid_spacing).
double calibrate_correlation_kernel(double a_dot_nm, double grid_spacing_nm);

// Kernel width for the (Gaussian) dg fields: closed form, chosen so the field
// acf is exp(-d^2/((4-pi) a_dot^2)).
double g_dev_kernel_width(double a_dot_nm);

struct RiceFit {
    double nu = 0.0;
    double sigma = 0.0;
    double nu_stderr = 0.0;
    double sigma_stderr = 0.0;
    double log_likelihood = 0.0;
    std::size_t n = 0;
};

// Maximum-likelihood Rice fit; standard errors from the observed information
// matrix, with a profile-likelihood fallback for nu when the information
// matrix is not positive definite (which happens legitimately at nu ~ 0).
RiceFit fit_rice(std::span<const double> samples);

struct AcfResult {
    double spacing = 0.0;
    std::vector<double> lags;       // nm, starting at 0
    std::vector<double> acf_values; // normalized, acf_values[0] = 1
    double fitted_a_dot = 0.0;      // filled by fit_acf
    double fit_residual = 0.0;      // rms of fit residuals
};

// Normalized mean-subtracted autocorrelation of a uniformly sampled trace.
AcfResult autocorrelation(std::span<const double> trace, double spacing, int max_lag = -1);

// acf(d) = exp(-d^2 / ((4-pi) a^2)) least-squares fit over the window from lag
// zero to the first lag where acf drops below 0.05. Fills fitted_a_dot and
// fit_residual_rms on the argument and returns a_dot.
double fit_acf(AcfResult& result);

// acf of E_VS along x averaged over all grid rows.
AcfResult averaged_row_acf(const ValleyLandscape& landscape, int max_lag = -1);

struct LowSpot {
    double x_nm = 0.0;
    double evs_ueV = 0.0;
    double slope_left = 0.0;  // dE_VS/dx at the left flank (ueV/nm)
    double slope_right = 0.0; // dE_VS/dx at the right flank
};

// Local minima of E_VS along a path that lie below `threshold_ueV`.
std::vector<LowSpot> find_low_evs_spots(const ValleyLandscape& landscape, const Path& path,
                                        double threshold_ueV);

struct Crossing {
    double x_nm = 0.0;
    double slope_abs = 0.0; // |dE_VS/dx| at the crossing (ueV/nm)
};

// Positions along the path where E_VS crosses the Zeeman energy g0*mu_B*B.
std::vector<Crossing> resonance_crossings(const ValleyLandscape& landscape, const Path& path,
                                          double B_T);

void save_landscape(const std::filesystem::path& file, const ValleyLandscape& landscape);
ValleyLandscape load_landscape(const std::filesystem::path& file);

} // namespace shuttlesim
