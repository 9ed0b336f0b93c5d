#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "shuttlesim/manifest.hpp"

namespace shuttlesim {

// Panel ids accepted by emit_figure_data, in emission order.
const std::vector<std::string>& figure_ids();

// Projects files referenced by the bundle at bundle_dir into plot-ready CSVs
// under out_dir (one CSV per panel; no plotting). Returns the written paths.
//
//   1d  P_S scan patch            {B_T, d_nm, p_s}            <- kind "psscan"
//   1e  extracted E_VS trace      {d_nm, evs_ueV, confidence_ueV} <- "evstrace"
//   2b  E_VS histogram + fit      {evs_ueV, density, rice_fit}    <- "evs-hist"
//   2c  row-averaged acf + fit    {lag_nm, acf, acf_fit}          <- "acf"
//   2d  assembled 2D map          {d_nm, y_nm, evs_ueV}           <- "map"
//   3b-3d  P_S(d, tau_S) panels   {d_nm, tau_s_ns, p_s}   <- "st-trace" grouped
//          by B (ascending); panel index = id - 'b'
//   3e-3g  FFT spectra            {d_nm, delta_g, magnitude}      <- "spectrum"
//          in bundle order; panel index = id - 'e'
//   4b/4d/4f  P_S decay panels    {B_T, tau_ns, p_s}    <- "decay-trace" grouped
//          by velocity (ascending); panel index = position in {b, d, f}
//   4g  narrowing model vs fits   {gamma_per_s, B_T, T_model_us, T_fit_us}
//                                                       <- "narrowing-summary"
//   4h  fidelity vs distance      {distance_nm, B_T, v_s_nm_per_ns, fidelity}
//                                                       <- "narrowing-summary"
//
// Unknown id or missing kind -> SimError(missing_runs).
std::vector<std::filesystem::path> emit_figure_data(const std::filesystem::path& bundle_dir,
                                                    const std::string& figure_id,
                                                    const std::filesystem::path& out_dir);

} // namespace shuttlesim
