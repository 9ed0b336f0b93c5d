#pragma once

// Unit conventions used throughout the library:
//   length  nm, time  ns, energy  ueV, magnetic field  T.
// Velocities are nm/ns (numerically equal to m/s), rates 1/ns and angular
// frequencies rad/ns. Conversions to seconds happen only at I/O boundaries.

#include <numbers>
#include <stdexcept>

namespace shuttlesim {

inline constexpr double kPi = std::numbers::pi;

struct PhysicalConstants {
    double mu_B = 57.8838;    // Bohr magneton, ueV/T
    double hbar = 0.658212;   // reduced Planck constant, ueV*ns
    double g0 = 2.0;          // baseline electron g-factor

    // Planck constant, ueV*ns
    double h() const { return 2.0 * kPi * hbar; }

    // Zeeman splitting g0*mu_B*B in ueV
    double zeeman(double B_T) const { return g0 * mu_B * B_T; }

    void validate() const {
        if (mu_B <= 0.0 || hbar <= 0.0 || g0 <= 0.0)
            throw std::invalid_argument("PhysicalConstants: all constants must be positive");
    }
};

} // namespace shuttlesim
