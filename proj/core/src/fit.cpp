#include "shuttlesim/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "shuttlesim/errors.hpp"

namespace shuttlesim {

namespace {

Eigen::MatrixXd forward_jacobian(const ResidualFn& residuals, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& r0, double rel_step) {
    const auto n = r0.size();
    const auto p = x.size();
    Eigen::MatrixXd J(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double h = rel_step * std::max(std::abs(x[j]), 1.0);
        Eigen::VectorXd xp = x;
        xp[j] += h;
        J.col(j) = (residuals(xp) - r0) / h;
    }
    return J;
}

} // namespace

LmResult levenberg_marquardt(const ResidualFn& residuals, const Eigen::VectorXd& x0,
                             const LmOptions& options) {
    LmResult out;
    Eigen::VectorXd x = x0;
    Eigen::VectorXd r = residuals(x);
    require(r.size() > 0, Errc::degenerate_samples, "levenberg_marquardt: empty residual");
    double sse = r.squaredNorm();
    double lambda = options.lambda0;

    const auto p = x.size();
    Eigen::MatrixXd J;
    bool need_jacobian = true;

    int it = 0;
    for (; it < options.max_iterations; ++it) {
        if (need_jacobian) {
            J = forward_jacobian(residuals, x, r, options.jacobian_step);
            need_jacobian = false;
        }
        Eigen::MatrixXd JtJ = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;

        // First-order optimality: at a least-squares minimum J^T r vanishes
        // even when the residual itself does not.
        if (g.lpNorm<Eigen::Infinity>() <= options.gtol * (1.0 + sse)) {
            out.converged = true;
            break;
        }

        // Scaled damping (Marquardt): lambda on the diagonal magnitudes.
        Eigen::MatrixXd A = JtJ;
        for (Eigen::Index k = 0; k < p; ++k)
            A(k, k) += lambda * std::max(JtJ(k, k), 1e-12);

        const Eigen::VectorXd step = A.ldlt().solve(-g);
        if (!step.allFinite()) {
            lambda *= 10.0;
            if (lambda > 1e12) break;
            continue;
        }

        const Eigen::VectorXd x_try = x + step;
        Eigen::VectorXd r_try = residuals(x_try);
        const double sse_try = r_try.squaredNorm();

        if (std::isfinite(sse_try) && sse_try < sse) {
            const double rel_improve = (sse - sse_try) / std::max(sse, 1e-300);
            const double rel_step = step.norm() / std::max(x.norm(), 1e-12);
            x = x_try;
            r = std::move(r_try);
            sse = sse_try;
            lambda = std::max(lambda * 0.3, 1e-12);
            need_jacobian = true;
            if (rel_improve < options.ftol || rel_step < options.xtol) {
                out.converged = true;
                ++it;
                break;
            }
        } else {
            lambda *= 10.0;
            if (lambda > 1e12) {
                // Damping exhausted. At a stationary point that is ordinary
                // convergence (descent steps stop improving at roundoff).
                out.converged = g.lpNorm<Eigen::Infinity>() <= 1e-6 * (1.0 + sse);
                break;
            }
        }
    }

    // Covariance from the (undamped) Gauss-Newton approximation at the optimum.
    J = forward_jacobian(residuals, x, r, options.jacobian_step);
    const auto nres = r.size();
    const double dof = static_cast<double>(nres > p ? nres - p : 1);
    const double s2 = sse / dof;
    Eigen::MatrixXd JtJ = J.transpose() * J;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(JtJ);
    if (lu.isInvertible()) {
        out.covariance = s2 * lu.inverse();
    } else {
        out.covariance = Eigen::MatrixXd::Constant(p, p, std::numeric_limits<double>::quiet_NaN());
    }

    out.params = x;
    out.sse = sse;
    out.residual_rms = std::sqrt(sse / static_cast<double>(nres));
    out.iterations = it;
    return out;
}

NmResult nelder_mead(const ScalarFn& objective, const Eigen::VectorXd& x0,
                     const NmOptions& options) {
    const auto n = x0.size();
    require(n >= 1, Errc::invalid_params, "nelder_mead: empty parameter vector");

    std::vector<Eigen::VectorXd> pts;
    std::vector<double> vals;
    pts.reserve(n + 1);
    pts.push_back(x0);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd p = x0;
        const double h = options.initial_step * std::max(std::abs(x0[i]), 1.0);
        p[i] += h;
        pts.push_back(p);
    }
    for (const auto& p : pts) vals.push_back(objective(p));

    auto order = [&] {
        std::vector<std::size_t> idx(pts.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        std::vector<Eigen::VectorXd> p2;
        std::vector<double> v2;
        for (auto i : idx) {
            p2.push_back(pts[i]);
            v2.push_back(vals[i]);
        }
        pts = std::move(p2);
        vals = std::move(v2);
    };

    NmResult out;
    int it = 0;
    for (; it < options.max_iterations; ++it) {
        order();
        if (std::abs(vals.back() - vals.front()) <=
            options.ftol * (std::abs(vals.front()) + 1e-30) + 1e-300) {
            out.converged = true;
            break;
        }
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) centroid += pts[i];
        centroid /= static_cast<double>(n);

        const Eigen::VectorXd refl = centroid + (centroid - pts.back());
        const double frefl = objective(refl);
        if (frefl < vals.front()) {
            const Eigen::VectorXd expd = centroid + 2.0 * (centroid - pts.back());
            const double fexpd = objective(expd);
            if (fexpd < frefl) {
                pts.back() = expd;
                vals.back() = fexpd;
            } else {
                pts.back() = refl;
                vals.back() = frefl;
            }
        } else if (frefl < vals[vals.size() - 2]) {
            pts.back() = refl;
            vals.back() = frefl;
        } else {
            const Eigen::VectorXd contr = centroid + 0.5 * (pts.back() - centroid);
            const double fcontr = objective(contr);
            if (fcontr < vals.back()) {
                pts.back() = contr;
                vals.back() = fcontr;
            } else {
                for (std::size_t i = 1; i < pts.size(); ++i) {
                    pts[i] = pts.front() + 0.5 * (pts[i] - pts.front());
                    vals[i] = objective(pts[i]);
                }
            }
        }
    }
    order();
    out.params = pts.front();
    out.value = vals.front();
    out.iterations = it;
    return out;
}

Eigen::MatrixXd numeric_hessian(const ScalarFn& f, const Eigen::VectorXd& x, double step) {
    const auto n = x.size();
    Eigen::MatrixXd H(n, n);
    const double f0 = f(x);
    std::vector<double> h(n);
    for (Eigen::Index i = 0; i < n; ++i) h[i] = step * std::max(std::abs(x[i]), 1.0);

    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            if (i == j) {
                Eigen::VectorXd xp = x, xm = x;
                xp[i] += h[i];
                xm[i] -= h[i];
                H(i, i) = (f(xp) - 2.0 * f0 + f(xm)) / (h[i] * h[i]);
            } else {
                Eigen::VectorXd xpp = x, xpm = x, xmp = x, xmm = x;
                xpp[i] += h[i]; xpp[j] += h[j];
                xpm[i] += h[i]; xpm[j] -= h[j];
                xmp[i] -= h[i]; xmp[j] += h[j];
                xmm[i] -= h[i]; xmm[j] -= h[j];
                H(i, j) = H(j, i) =
                    (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * h[i] * h[j]);
            }
        }
    }
    return H;
}

} // namespace shuttlesim
