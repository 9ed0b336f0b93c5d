#pragma once

#include <Eigen/Dense>
#include <functional>

namespace shuttlesim {

// Small dense solvers for the curve fits in this library (<= 8 parameters).

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using ScalarFn = std::function<double(const Eigen::VectorXd&)>;

struct LmOptions {
    int max_iterations = 400;
    double ftol = 1e-12;        // relative SSE improvement
    double xtol = 1e-11;        // relative step size
    double gtol = 1e-10;        // gradient infinity norm, scaled by (1 + SSE)
    double lambda0 = 1e-3;      // initial damping
    double jacobian_step = 1e-6;
};

struct LmResult {
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;  // sigma^2 (J^T J)^-1, sigma^2 = SSE/(n-p)
    double sse = 0.0;
    double residual_rms = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Damped least squares (Levenberg-style trust region) with forward-difference
// Jacobian. Throws SimError(non_convergence) only if the residual function
// itself fails; an exhausted iteration budget is reported via `converged`.
LmResult levenberg_marquardt(const ResidualFn& residuals, const Eigen::VectorXd& x0,
                             const LmOptions& options = {});

struct NmOptions {
    int max_iterations = 2000;
    double ftol = 1e-12;
    double initial_step = 0.25; // relative simplex size (absolute if param ~ 0)
};

struct NmResult {
    Eigen::VectorXd params;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Nelder-Mead simplex minimizer (used to seed/robustify likelihood optima).
NmResult nelder_mead(const ScalarFn& objective, const Eigen::VectorXd& x0,
                     const NmOptions& options = {});

// Forward-difference Hessian of a scalar function (observed information when
// applied to a negative log-likelihood at its minimum).
Eigen::MatrixXd numeric_hessian(const ScalarFn& f, const Eigen::VectorXd& x,
                                double step = 1e-4);

} // namespace shuttlesim
