#pragma once

namespace cavloss {

// CODATA 2018 values, SI units.
inline constexpr double kHbar = 1.054571817e-34;      // J s
inline constexpr double kMu0 = 1.25663706212e-6;      // N / A^2
inline constexpr double kSpeedOfLight = 299792458.0;  // m / s
inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;

}  // namespace cavloss
