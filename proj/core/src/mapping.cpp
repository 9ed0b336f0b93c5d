#include "shuttlesim/mapping.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "shuttlesim/errors.hpp"
#include "shuttlesim/io.hpp"
#include "shuttlesim/parallel.hpp"
#include "shuttlesim/rng.hpp"
#include "shuttlesim/stats.hpp"

namespace shuttlesim {

namespace {

double dispersive_shift_rad_per_ns(double delta_ueV, double delta_sv_ueV, double hbar) {
    if (delta_sv_ueV <= 0.0) return 0.0;
    const double repulsion =
        0.5 * (std::hypot(delta_ueV, 2.0 * delta_sv_ueV) - std::abs(delta_ueV));
    if (delta_ueV == 0.0) return 0.0;
    return std::copysign(repulsion / hbar, delta_ueV);
}

// Least-squares cubic B-spline smoother with uniform clamped knots.
class CubicSpline {
public:
    CubicSpline(double a, double b, double knot_spacing, std::span<const double> x,
                std::span<const double> y, std::span<const double> w) {
        const std::size_t n = x.size();
        auto m = static_cast<std::size_t>(std::max(1.0, std::round((b - a) / knot_spacing)));
        // Keep the fit overdetermined.
        while (m + 3 > n && m > 1) m /= 2;
        const double h = (b - a) / static_cast<double>(m);
        knots_.assign(3, a);
        for (std::size_t i = 0; i <= m; ++i) knots_.push_back(a + h * static_cast<double>(i));
        knots_.insert(knots_.end(), 3, b);
        n_basis_ = m + 3;

        Eigen::MatrixXd A(n, n_basis_);
        Eigen::VectorXd rhs(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n_basis_; ++j)
                A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    std::sqrt(w[i]) * basis(j, x[i]);
            rhs[static_cast<Eigen::Index>(i)] = std::sqrt(w[i]) * y[i];
        }
        Eigen::MatrixXd normal = A.transpose() * A;
        normal.diagonal().array() += 1e-9 * (normal.trace() / static_cast<double>(n_basis_));
        coeffs_ = normal.ldlt().solve(A.transpose() * rhs);
    }

    double operator()(double x) const {
        double v = 0.0;
        for (std::size_t j = 0; j < n_basis_; ++j) v += coeffs_[static_cast<Eigen::Index>(j)] * basis(j, x);
        return v;
    }

private:
    // Cox-de Boor, degree 3, half-open convention with the last span closed.
    double basis(std::size_t j, double x, int degree = 3) const {
        const double lo = knots_[j];
        const double hi = knots_[j + static_cast<std::size_t>(degree) + 1];
        if (degree == 0) {
            // Close the right end on the last span of positive width; the
            // repeated boundary knots also form zero-width spans ending at b
            // and those must stay open or the endpoint double-counts.
            const bool closes_right = lo < hi && hi >= knots_.back();
            return (x >= lo && (x < hi || (closes_right && x <= hi))) ? 1.0 : 0.0;
        }
        double left = 0.0, right = 0.0;
        const double dl = knots_[j + static_cast<std::size_t>(degree)] - lo;
        if (dl > 0.0) left = (x - lo) / dl * basis(j, x, degree - 1);
        const double dr = hi - knots_[j + 1];
        if (dr > 0.0) right = (hi - x) / dr * basis(j + 1, x, degree - 1);
        return left + right;
    }

    std::vector<double> knots_;
    std::size_t n_basis_ = 0;
    Eigen::VectorXd coeffs_;
};

} // namespace

void ScanConfig::validate() const {
    require(phase_budget_rad > 0.0, Errc::invalid_config, "phase budget must be positive");
    require(g_ref > 0.0, Errc::invalid_config, "reference g-factor must be positive");
    require(delta_g_eff > 0.0, Errc::invalid_config, "effective delta-g must be positive");
    require(max_tau_w_ns > 0.0, Errc::invalid_config, "tau_W cap must be positive");
    require(v_s_nm_per_ns > 0.0, Errc::invalid_config, "scan velocity must be positive");
    require(row_offset_rms >= 0.0, Errc::invalid_config, "offset rms must be non-negative");
}

void PsScanPatch::validate() const {
    require(!B_T.empty() && !d_nm.empty(), Errc::invalid_params, "empty patch axes");
    require(p_s.size() == B_T.size(), Errc::mismatched_axes, "P_S rows must match the B axis");
    require(tau_w_ns.size() == B_T.size(), Errc::mismatched_axes,
            "tau_W schedule must match the B axis");
    for (std::size_t i = 0; i < B_T.size(); ++i) {
        require(B_T[i] > 0.0, Errc::invalid_params, "B axis must be positive");
        if (i > 0)
            require(B_T[i] > B_T[i - 1], Errc::invalid_params, "B axis must increase strictly");
        require(p_s[i].size() == d_nm.size(), Errc::mismatched_axes,
                "P_S columns must match the d axis");
        for (double p : p_s[i]) {
            require(std::isfinite(p), Errc::invalid_params, "non-finite P_S");
            if (!normalized)
                require(p >= 0.0 && p <= 1.0, Errc::invalid_params, "P_S outside [0, 1]");
        }
    }
    for (std::size_t i = 1; i < d_nm.size(); ++i)
        require(d_nm[i] > d_nm[i - 1], Errc::invalid_params, "d axis must increase strictly");
}

double PsScanPatch::b_step() const {
    require(B_T.size() >= 2, Errc::invalid_params, "need at least two B rows");
    const double step = (B_T.back() - B_T.front()) / static_cast<double>(B_T.size() - 1);
    for (std::size_t i = 1; i < B_T.size(); ++i)
        require(std::abs(B_T[i] - B_T[i - 1] - step) <= 1e-9 * step, Errc::non_uniform_sampling,
                "B axis must be uniform");
    return step;
}

std::size_t EvsTraceEstimate::n_missing() const {
    std::size_t n = 0;
    for (uint8_t m : missing) n += m ? 1 : 0;
    return n;
}

double tau_w_schedule(double B_T, double phase_budget_rad, double g_ref,
                      const PhysicalConstants& constants) {
    require(B_T > 0.0, Errc::zero_field, "wait-time schedule requires B > 0");
    require(phase_budget_rad > 0.0 && g_ref > 0.0, Errc::invalid_params,
            "phase budget and reference g-factor must be positive");
    constants.validate();
    return phase_budget_rad * constants.hbar / (g_ref * constants.mu_B * B_T);
}

std::vector<double> default_b_grid(double B_min_T, double B_max_T, double step_T) {
    require(B_min_T > 0.0 && step_T > 0.0 && B_max_T >= B_min_T, Errc::invalid_params,
            "malformed B grid request");
    std::vector<double> grid;
    const auto n = static_cast<std::size_t>(std::floor((B_max_T - B_min_T) / step_T + 1e-9)) + 1;
    grid.reserve(n);
    for (std::size_t i = 0; i < n; ++i) grid.push_back(B_min_T + step_T * static_cast<double>(i));
    return grid;
}

PsScanPatch simulate_ps_scan(const ValleyLandscape& landscape, const CouplingParams& coupling,
                             double y_nm, std::span<const double> B_grid,
                             std::span<const double> d_grid, int n_samples, uint64_t seed,
                             const ScanConfig& config) {
    coupling.validate();
    config.validate();
    require(n_samples >= 1, Errc::invalid_params, "need at least one sample per point");
    require(!B_grid.empty() && !d_grid.empty(), Errc::invalid_params, "empty scan grids");
    require(y_nm >= landscape.y_min() - 1e-9 && y_nm <= landscape.y_max() + 1e-9,
            Errc::out_of_bounds, "scan row outside the landscape");
    for (double d : d_grid)
        require(d >= 0.0 && d <= landscape.extent_x() + 1e-9, Errc::out_of_bounds,
                "scan distance outside the landscape");

    const PhysicalConstants& pc = landscape.config().constants;
    const double g0 = pc.g0;
    const double g_static = coupling.g_L[1]; // static dot sits in its valley ground state
    const double rate_unit = pc.mu_B / pc.hbar;

    PsScanPatch patch;
    patch.B_T.assign(B_grid.begin(), B_grid.end());
    patch.d_nm.assign(d_grid.begin(), d_grid.end());
    patch.y_nm = y_nm;
    patch.n_samples = n_samples;
    patch.seed = seed;
    patch.id = "y" + format_g17(y_nm);
    patch.tau_w_ns.resize(B_grid.size());
    patch.p_s.assign(B_grid.size(), std::vector<double>(d_grid.size(), 0.0));

    // Prefix integral of the mobile ground-branch delta-g along the scan row,
    // sampled on the landscape grid (linear interpolation in between).
    const double dx = landscape.spacing();
    const double d_max = *std::max_element(d_grid.begin(), d_grid.end());
    const auto n_seg = static_cast<std::size_t>(std::ceil(d_max / dx - 1e-9));
    std::vector<double> dg_node(n_seg + 1), dg_prefix(n_seg + 1, 0.0);
    for (std::size_t i = 0; i <= n_seg; ++i)
        dg_node[i] = landscape.dg_at(std::min(d_max, static_cast<double>(i) * dx), y_nm,
                                     Valley::minus);
    for (std::size_t i = 1; i <= n_seg; ++i) {
        const double step = std::min(d_max, static_cast<double>(i) * dx) -
                            std::min(d_max, static_cast<double>(i - 1) * dx);
        dg_prefix[i] = dg_prefix[i - 1] + 0.5 * (dg_node[i - 1] + dg_node[i]) * step;
    }
    const auto dg_integral = [&](double d) {
        const double u = std::min(d, d_max) / dx;
        const auto k = std::min(static_cast<std::size_t>(u), n_seg > 0 ? n_seg - 1 : 0);
        const double t = u - static_cast<double>(k);
        return dg_prefix[k] + t * (dg_prefix[std::min(k + 1, n_seg)] - dg_prefix[k]);
    };

    std::vector<double> evs_d(d_grid.size()), dg_d(d_grid.size());
    for (std::size_t j = 0; j < d_grid.size(); ++j) {
        evs_d[j] = landscape.evs_at(d_grid[j], y_nm);
        dg_d[j] = landscape.dg_at(d_grid[j], y_nm, Valley::minus);
    }

    parallel_for(B_grid.size(), [&](std::size_t ib) {
        const double B = patch.B_T[ib];
        const double tau_w = std::min(
            tau_w_schedule(B, config.phase_budget_rad, config.g_ref, pc) / config.delta_g_eff,
            config.max_tau_w_ns);
        patch.tau_w_ns[ib] = tau_w;
        double row_offset = 0.0;
        if (config.row_offset_rms > 0.0) {
            RandomStream offset_rng(derive_stream_seed(seed, (uint64_t{1} << 48) + ib));
            row_offset = config.row_offset_rms * offset_rng.normal();
        }
        const double e_zeeman = g0 * pc.mu_B * B;
        for (std::size_t jd = 0; jd < d_grid.size(); ++jd) {
            const double d = patch.d_nm[jd];
            const double travel_ns = 2.0 * d / config.v_s_nm_per_ns;
            const double delta = e_zeeman - evs_d[jd];
            const double shift = dispersive_shift_rad_per_ns(delta, coupling.delta_sv_ueV,
                                                             pc.hbar);
            const double phi_travel =
                rate_unit * B * ((g_static - g0) * travel_ns - 2.0 * dg_integral(d) /
                                                                   config.v_s_nm_per_ns);
            const double phi_wait =
                (rate_unit * B * (g_static - g0 - dg_d[jd]) - shift) * tau_w;
            double visibility = 1.0;
            if (coupling.t2_static_ns > 0.0) {
                const double u = (travel_ns + tau_w) / coupling.t2_static_ns;
                visibility = std::exp(-u * u);
            }
            const double p_true =
                std::clamp(0.5 * (1.0 + visibility * std::cos(phi_travel + phi_wait)) +
                               row_offset + coupling.spam_epsilon,
                           0.0, 1.0);
            RandomStream rng(derive_stream_seed(
                seed, ib * d_grid.size() + jd));
            int hits = 0;
            for (int s = 0; s < n_samples; ++s)
                if (rng.bernoulli(p_true)) ++hits;
            patch.p_s[ib][jd] = static_cast<double>(hits) / static_cast<double>(n_samples);
        }
    });
    patch.validate();
    return patch;
}

PsScanPatch normalize_linewise(PsScanPatch patch) {
    patch.validate();
    for (auto& row : patch.p_s) {
        const double m = mean(row);
        for (double& p : row) p -= m;
    }
    patch.normalized = true;
    return patch;
}

EvsTraceEstimate extract_ridge(const PsScanPatch& patch, const CouplingParams& coupling,
                               const RidgeOptions& options, const PhysicalConstants& constants) {
    patch.validate();
    coupling.validate();
    constants.validate();
    require(patch.normalized, Errc::invalid_params,
            "ridge extraction expects a linewise-normalized patch");
    require(coupling.delta_sv_ueV > 0.0, Errc::invalid_params,
            "matched filter needs a nonzero spin-valley coupling");
    require(options.smoothing_nm > 0.0 && options.significance > 0.0 &&
                options.max_gap_columns >= 0 && options.ambiguity_ratio > 0.0,
            Errc::invalid_config, "malformed ridge options");
    const double b_step = patch.b_step();
    const double gmu = constants.g0 * constants.mu_B;
    const std::size_t n_b = patch.B_T.size();
    const std::size_t n_d = patch.d_nm.size();

    // Matched-filter template: the dispersive repulsion magnitude versus
    // detuning, zero-meaned over its support.
    const double dsv = coupling.delta_sv_ueV;
    const auto half_width = static_cast<std::size_t>(
        std::clamp(std::ceil(6.0 * dsv / (gmu * b_step)), 2.0, 25.0));
    require(n_b > 2 * half_width + 2, Errc::invalid_params,
            "B axis too short for the matched-filter template");
    std::vector<double> tmpl(2 * half_width + 1);
    for (std::size_t j = 0; j < tmpl.size(); ++j) {
        const double e = gmu * b_step *
                         (static_cast<double>(j) - static_cast<double>(half_width));
        tmpl[j] = 0.5 * (std::hypot(e, 2.0 * dsv) - std::abs(e)) / dsv;
    }
    const double tmpl_mean = mean(tmpl);
    for (double& t : tmpl) t -= tmpl_mean;

    EvsTraceEstimate out;
    out.d_nm = patch.d_nm;
    out.y_nm = patch.y_nm;
    out.evs_ueV.assign(n_d, 0.0);
    out.confidence_ueV.assign(n_d, 0.0);
    out.missing.assign(n_d, 1);
    const double base_conf = 0.5 * b_step * gmu;

    parallel_for(n_d, [&](std::size_t col) {
        std::vector<double> response(n_b);
        for (std::size_t i = 0; i < n_b; ++i) response[i] = std::abs(patch.p_s[i][col]);
        const std::size_t r_lo = half_width;
        const std::size_t r_hi = n_b - half_width - 1;
        std::vector<double> score(n_b, 0.0);
        for (std::size_t r = r_lo; r <= r_hi; ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < tmpl.size(); ++j)
                s += tmpl[j] * response[r - half_width + j];
            score[r] = s;
        }
        std::vector<double> interior(score.begin() + static_cast<std::ptrdiff_t>(r_lo),
                                     score.begin() + static_cast<std::ptrdiff_t>(r_hi) + 1);
        std::vector<double> sorted = interior;
        std::sort(sorted.begin(), sorted.end());
        const double med = sorted[sorted.size() / 2];
        std::vector<double> dev(sorted.size());
        for (std::size_t i = 0; i < sorted.size(); ++i) dev[i] = std::abs(sorted[i] - med);
        std::sort(dev.begin(), dev.end());
        const double mad = 1.4826 * dev[dev.size() / 2];

        std::size_t best = r_lo;
        for (std::size_t r = r_lo; r <= r_hi; ++r)
            if (score[r] > score[best]) best = r;
        if (mad <= 0.0 || (score[best] - med) / mad < options.significance) return;

        // Secondary, well-separated response → ambiguous column.
        double second = -std::numeric_limits<double>::infinity();
        for (std::size_t r = r_lo; r <= r_hi; ++r) {
            if (static_cast<std::size_t>(std::llabs(static_cast<long long>(r) -
                                                    static_cast<long long>(best))) <=
                2 * half_width)
                continue;
            second = std::max(second, score[r]);
        }
        const bool ambiguous =
            std::isfinite(second) && (second - med) > options.ambiguity_ratio * (score[best] - med);

        double frac = 0.0;
        if (best > r_lo && best < r_hi) {
            const double denom = score[best - 1] - 2.0 * score[best] + score[best + 1];
            if (denom < 0.0) frac = std::clamp(0.5 * (score[best - 1] - score[best + 1]) / denom,
                                               -0.5, 0.5);
        }
        const double b_res = patch.B_T[best] + frac * b_step;
        out.evs_ueV[col] = gmu * b_res;
        out.confidence_ueV[col] = base_conf * (ambiguous ? 3.0 : 1.0);
        out.missing[col] = 0;
    });

    const std::size_t found = n_d - out.n_missing();
    out.low_coverage = found * 5 < n_d * 4; // < 80 % of columns

    // Short gaps are bridged from their resolved flanks; longer gaps stay
    // missing (mirrors re-measuring instead of inventing data).
    std::size_t col = 0;
    while (col < n_d) {
        if (!out.missing[col]) {
            ++col;
            continue;
        }
        std::size_t gap_end = col;
        while (gap_end < n_d && out.missing[gap_end]) ++gap_end;
        const std::size_t gap = gap_end - col;
        if (col > 0 && gap_end < n_d && gap <= static_cast<std::size_t>(options.max_gap_columns)) {
            const double e0 = out.evs_ueV[col - 1], e1 = out.evs_ueV[gap_end];
            const double c0 = out.confidence_ueV[col - 1], c1 = out.confidence_ueV[gap_end];
            for (std::size_t k = col; k < gap_end; ++k) {
                const double t = (out.d_nm[k] - out.d_nm[col - 1]) /
                                 (out.d_nm[gap_end] - out.d_nm[col - 1]);
                out.evs_ueV[k] = e0 + t * (e1 - e0);
                out.confidence_ueV[k] = std::max(c0, c1) * (1.0 + static_cast<double>(gap));
                out.missing[k] = 0;
            }
        }
        col = gap_end;
    }

    // Smoothing spline over the resolved columns.
    std::vector<double> xs, ys, ws;
    for (std::size_t k = 0; k < n_d; ++k) {
        if (out.missing[k]) continue;
        xs.push_back(out.d_nm[k]);
        ys.push_back(out.evs_ueV[k]);
        ws.push_back(1.0 / (out.confidence_ueV[k] * out.confidence_ueV[k]));
    }
    if (xs.size() >= 8) {
        CubicSpline spline(xs.front(), xs.back(), options.smoothing_nm, xs, ys, ws);
        for (std::size_t k = 0; k < n_d; ++k) {
            if (out.missing[k]) continue;
            if (out.d_nm[k] < xs.front() || out.d_nm[k] > xs.back()) continue;
            out.evs_ueV[k] = std::max(0.0, spline(out.d_nm[k]));
        }
    }
    return out;
}

double EvsMap::value_at(double d, double y) const {
    if (d_nm.empty() || y_nm.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto locate = [](const std::vector<double>& axis, double v, std::size_t& k, double& t) {
        k = 0;
        while (k + 2 < axis.size() && v >= axis[k + 1]) ++k;
        const double w = axis[k + 1] - axis[k];
        t = std::clamp((v - axis[k]) / w, 0.0, 1.0);
    };
    if (y_nm.size() == 1 || d_nm.size() == 1) {
        // Degenerate axes fall back to nearest-row/column lookups.
        std::size_t iy = 0, ix = 0;
        double ty = 0.0, tx = 0.0;
        if (y_nm.size() > 1) locate(y_nm, y, iy, ty), iy += ty > 0.5 ? 1 : 0;
        if (d_nm.size() > 1) locate(d_nm, d, ix, tx), ix += tx > 0.5 ? 1 : 0;
        return missing[iy][ix] ? std::numeric_limits<double>::quiet_NaN() : evs_ueV[iy][ix];
    }
    std::size_t ix = 0, iy = 0;
    double tx = 0.0, ty = 0.0;
    locate(d_nm, d, ix, tx);
    locate(y_nm, y, iy, ty);
    double value = 0.0, weight = 0.0;
    for (int dy = 0; dy < 2; ++dy) {
        for (int dxi = 0; dxi < 2; ++dxi) {
            const std::size_t r = iy + static_cast<std::size_t>(dy);
            const std::size_t c = ix + static_cast<std::size_t>(dxi);
            if (missing[r][c]) continue;
            const double w = (dy ? ty : 1.0 - ty) * (dxi ? tx : 1.0 - tx);
            value += w * evs_ueV[r][c];
            weight += w;
        }
    }
    if (weight <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return value / weight;
}

EvsMap assemble_map(const std::vector<EvsTraceEstimate>& traces, double y_step_nm) {
    require(traces.size() >= 2, Errc::invalid_params, "map assembly needs >= 2 traces");
    std::vector<const EvsTraceEstimate*> sorted;
    for (const auto& t : traces) sorted.push_back(&t);
    std::sort(sorted.begin(), sorted.end(),
              [](const auto* a, const auto* b) { return a->y_nm < b->y_nm; });
    const auto& d0 = sorted.front()->d_nm;
    for (const auto* t : sorted) {
        require(t->d_nm.size() == d0.size(), Errc::mismatched_axes,
                "traces must share one d axis");
        for (std::size_t i = 0; i < d0.size(); ++i)
            require(std::abs(t->d_nm[i] - d0[i]) <= 1e-9, Errc::mismatched_axes,
                    "traces must share one d axis");
        require(t->evs_ueV.size() == d0.size() && t->confidence_ueV.size() == d0.size() &&
                    t->missing.size() == d0.size(),
                Errc::mismatched_axes, "trace columns inconsistent");
    }
    for (std::size_t i = 1; i < sorted.size(); ++i)
        require(sorted[i]->y_nm > sorted[i - 1]->y_nm + 1e-12, Errc::invalid_params,
                "trace y offsets must be distinct");

    EvsMap map;
    map.d_nm = d0;
    if (y_step_nm <= 0.0) {
        for (const auto* t : sorted) map.y_nm.push_back(t->y_nm);
    } else {
        const double y0 = sorted.front()->y_nm;
        const double y1 = sorted.back()->y_nm;
        const auto n = static_cast<std::size_t>(std::floor((y1 - y0) / y_step_nm + 1e-9)) + 1;
        for (std::size_t i = 0; i < n; ++i)
            map.y_nm.push_back(y0 + y_step_nm * static_cast<double>(i));
        if (std::abs(map.y_nm.back() - y1) > 1e-9) map.y_nm.push_back(y1);
    }

    for (double y : map.y_nm) {
        std::size_t hi = 1;
        while (hi + 1 < sorted.size() && y > sorted[hi]->y_nm) ++hi;
        const auto* lo_t = sorted[hi - 1];
        const auto* hi_t = sorted[hi];
        const double t = std::clamp((y - lo_t->y_nm) / (hi_t->y_nm - lo_t->y_nm), 0.0, 1.0);
        std::vector<double> evs(d0.size(), 0.0), conf(d0.size(), 0.0);
        std::vector<uint8_t> miss(d0.size(), 0);
        for (std::size_t i = 0; i < d0.size(); ++i) {
            if (t <= 0.0 + 1e-12 && !lo_t->missing[i]) {
                evs[i] = lo_t->evs_ueV[i];
                conf[i] = lo_t->confidence_ueV[i];
            } else if (t >= 1.0 - 1e-12 && !hi_t->missing[i]) {
                evs[i] = hi_t->evs_ueV[i];
                conf[i] = hi_t->confidence_ueV[i];
            } else if (!lo_t->missing[i] && !hi_t->missing[i]) {
                evs[i] = (1.0 - t) * lo_t->evs_ueV[i] + t * hi_t->evs_ueV[i];
                conf[i] = (1.0 - t) * lo_t->confidence_ueV[i] + t * hi_t->confidence_ueV[i];
            } else {
                miss[i] = 1;
            }
        }
        map.evs_ueV.push_back(std::move(evs));
        map.confidence_ueV.push_back(std::move(conf));
        map.missing.push_back(std::move(miss));
    }
    return map;
}

TimeEstimate estimate_measurement_time(const TimeEstimateParams& params) {
    require(params.tau_ss_s > 0.0 && params.tau_B_s >= 0.0, Errc::invalid_params,
            "times must be positive");
    require(params.n_B > 0 && params.n_samples > 0, Errc::invalid_params,
            "counts must be positive");
    require(params.l_x_nm > 0.0 && params.delta_x_nm > 0.0 && params.l_y_nm > 0.0 &&
                params.delta_y_nm > 0.0,
            Errc::invalid_params, "lengths and steps must be positive");

    const auto exact_count = [](double l, double delta, const char* axis) {
        const double ratio = l / delta;
        const auto n = static_cast<long long>(std::llround(ratio));
        require(n > 0 && std::abs(ratio - static_cast<double>(n)) < 1e-9 * ratio + 1e-12,
                Errc::invalid_params,
                std::string("extent must be an integer multiple of the step along ") + axis);
        return n;
    };
    const auto exact_ns = [](double seconds, const char* name) {
        const double ns = seconds * 1e9;
        const auto v = static_cast<long long>(std::llround(ns));
        require(std::abs(ns - static_cast<double>(v)) < 1e-3,
                Errc::invalid_params,
                std::string(name) + " must be representable in whole nanoseconds");
        return v;
    };

    TimeEstimate out;
    out.tau_ss_s = params.tau_ss_s;
    out.n_B = params.n_B;
    out.n_samples = params.n_samples;
    out.l_x_nm = params.l_x_nm;
    out.delta_x_nm = params.delta_x_nm;
    out.l_y_nm = params.l_y_nm;
    out.delta_y_nm = params.delta_y_nm;
    out.tau_B_s = params.tau_B_s;
    out.n_x = exact_count(params.l_x_nm, params.delta_x_nm, "x");
    out.n_y = exact_count(params.l_y_nm, params.delta_y_nm, "y");

    const long long tau_ss_ns = exact_ns(params.tau_ss_s, "tau_ss");
    const long long tau_b_ns = exact_ns(params.tau_B_s, "tau_B");
    unsigned __int128 sampling = static_cast<unsigned __int128>(tau_ss_ns);
    for (long long f : {out.n_B, out.n_samples, out.n_x, out.n_y}) {
        sampling *= static_cast<unsigned __int128>(f);
        require(sampling < (static_cast<unsigned __int128>(1) << 62), Errc::invalid_params,
                "time budget overflows the integer-nanosecond accumulator");
    }
    const auto sampling_ns = static_cast<unsigned long long>(sampling);
    const unsigned long long total_ns = sampling_ns + static_cast<unsigned long long>(tau_b_ns);
    const auto to_seconds = [](unsigned long long ns) {
        return static_cast<double>(ns / 1000000000ULL) +
               static_cast<double>(ns % 1000000000ULL) * 1e-9;
    };
    out.sampling_seconds = to_seconds(sampling_ns);
    out.total_seconds = to_seconds(total_ns);
    return out;
}

void save_patch(const PsScanPatch& patch, const std::string& path) {
    patch.validate();
    nlohmann::json header;
    header["format"] = "shuttlesim-psscan";
    header["version"] = 1;
    header["y_nm"] = patch.y_nm;
    header["id"] = patch.id;
    header["n_samples"] = patch.n_samples;
    header["seed"] = patch.seed;
    header["normalized"] = patch.normalized;
    header["d_nm"] = patch.d_nm;
    header["units"] = {{"B", "T"}, {"d", "nm"}, {"tau_w", "ns"}};
    Table body;
    body.columns = {"B_T", "tau_w_ns"};
    for (std::size_t j = 0; j < patch.d_nm.size(); ++j)
        body.columns.push_back("p_" + std::to_string(j));
    for (std::size_t i = 0; i < patch.B_T.size(); ++i) {
        std::vector<double> row{patch.B_T[i], patch.tau_w_ns[i]};
        row.insert(row.end(), patch.p_s[i].begin(), patch.p_s[i].end());
        body.rows.push_back(std::move(row));
    }
    write_header_csv(path, header, body);
}

PsScanPatch load_patch(const std::string& path) {
    auto [header, body] = read_header_csv(path);
    require(header.value("format", "") == "shuttlesim-psscan", Errc::io_error,
            "not a scan-patch file");
    require(header.value("version", 0) == 1, Errc::io_error, "unsupported scan-patch version");
    PsScanPatch patch;
    patch.y_nm = header.at("y_nm").get<double>();
    patch.id = header.value("id", "");
    patch.n_samples = header.at("n_samples").get<int>();
    patch.seed = header.at("seed").get<uint64_t>();
    patch.normalized = header.at("normalized").get<bool>();
    patch.d_nm = header.at("d_nm").get<std::vector<double>>();
    require(body.columns.size() == patch.d_nm.size() + 2, Errc::io_error,
            "scan-patch column count mismatch");
    for (const auto& row : body.rows) {
        patch.B_T.push_back(row[0]);
        patch.tau_w_ns.push_back(row[1]);
        patch.p_s.emplace_back(row.begin() + 2, row.end());
    }
    patch.validate();
    return patch;
}

void save_trace_estimate(const EvsTraceEstimate& trace, const std::string& path) {
    nlohmann::json header;
    header["format"] = "shuttlesim-evstrace";
    header["version"] = 1;
    header["y_nm"] = trace.y_nm;
    header["low_coverage"] = trace.low_coverage;
    header["units"] = {{"d", "nm"}, {"evs", "ueV"}, {"confidence", "ueV"}};
    Table body;
    body.columns = {"d_nm", "evs_ueV", "confidence_ueV", "missing"};
    for (std::size_t i = 0; i < trace.d_nm.size(); ++i)
        body.add_row({trace.d_nm[i], trace.evs_ueV[i], trace.confidence_ueV[i],
                      static_cast<double>(trace.missing[i])});
    write_header_csv(path, header, body);
}

EvsTraceEstimate load_trace_estimate(const std::string& path) {
    auto [header, body] = read_header_csv(path);
    require(header.value("format", "") == "shuttlesim-evstrace", Errc::io_error,
            "not a ridge-trace file");
    require(header.value("version", 0) == 1, Errc::io_error, "unsupported ridge-trace version");
    EvsTraceEstimate trace;
    trace.y_nm = header.at("y_nm").get<double>();
    trace.low_coverage = header.value("low_coverage", false);
    const auto id = body.col_index("d_nm");
    const auto ie = body.col_index("evs_ueV");
    const auto ic = body.col_index("confidence_ueV");
    const auto im = body.col_index("missing");
    for (const auto& row : body.rows) {
        trace.d_nm.push_back(row[id]);
        trace.evs_ueV.push_back(row[ie]);
        trace.confidence_ueV.push_back(row[ic]);
        trace.missing.push_back(row[im] != 0.0 ? 1 : 0);
    }
    return trace;
}

void save_map(const EvsMap& map, const std::string& path) {
    Table body;
    body.columns = {"d_nm", "y_nm", "evs_ueV", "confidence_ueV"};
    for (std::size_t iy = 0; iy < map.y_nm.size(); ++iy)
        for (std::size_t ix = 0; ix < map.d_nm.size(); ++ix)
            if (!map.missing[iy][ix])
                body.add_row({map.d_nm[ix], map.y_nm[iy], map.evs_ueV[iy][ix],
                              map.confidence_ueV[iy][ix]});
    write_text_file(path, table_to_csv(body));
}

} // namespace shuttlesim
