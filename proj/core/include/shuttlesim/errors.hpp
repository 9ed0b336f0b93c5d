#pragma once

#include <stdexcept>
#include <string>

namespace shuttlesim {

// Error taxonomy. "validation" errors indicate unusable inputs/configs (CLI exit
// code 2); the rest are runtime model failures (CLI exit code 3).
enum class Errc {
    invalid_config,
    invalid_params,
    out_of_bounds,
    mismatched_axes,
    degenerate_samples,
    zero_variance,
    non_uniform_sampling,
    underdetermined,
    ill_conditioned,
    non_convergence,
    step_too_large,
    zero_sweep_rate,
    zero_field,
    zero_distance,
    negative_weight,
    no_ridge_found,
    no_path,
    missing_runs,
    io_error,
};

constexpr const char* errc_name(Errc c) {
    switch (c) {
        case Errc::invalid_config: return "InvalidConfig";
        case Errc::invalid_params: return "InvalidParams";
        case Errc::out_of_bounds: return "OutOfBounds";
        case Errc::mismatched_axes: return "MismatchedAxes";
        case Errc::degenerate_samples: return "DegenerateSamples";
        case Errc::zero_variance: return "ZeroVariance";
        case Errc::non_uniform_sampling: return "NonUniformSampling";
        case Errc::underdetermined: return "Underdetermined";
        case Errc::ill_conditioned: return "IllConditioned";
        case Errc::non_convergence: return "NonConvergence";
        case Errc::step_too_large: return "StepTooLarge";
        case Errc::zero_sweep_rate: return "ZeroSweepRate";
        case Errc::zero_field: return "ZeroField";
        case Errc::zero_distance: return "ZeroDistance";
        case Errc::negative_weight: return "NegativeWeight";
        case Errc::no_ridge_found: return "NoRidgeFound";
        case Errc::no_path: return "NoPath";
        case Errc::missing_runs: return "MissingRuns";
        case Errc::io_error: return "IoError";
    }
    return "UnknownError";
}

constexpr bool errc_is_validation(Errc c) {
    switch (c) {
        case Errc::invalid_config:
        case Errc::invalid_params:
        case Errc::mismatched_axes:
        case Errc::non_uniform_sampling:
        case Errc::negative_weight:
        case Errc::missing_runs:
            return true;
        default:
            return false;
    }
}

class SimError : public std::runtime_error {
public:
    SimError(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
    throw SimError(code, message);
}

inline void require(bool cond, Errc code, const std::string& message) {
    if (!cond) fail(code, message);
}

} // namespace shuttlesim
