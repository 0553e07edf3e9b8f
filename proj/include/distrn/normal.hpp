#pragma once

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace distrn::normal {

inline double pdf(double z) noexcept
{
    if (!std::isfinite(z))
        return 0.0;
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

/// Lower tail P(Z <= z).
inline double cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Upper tail P(Z > z).
inline double ccdf(double z) noexcept { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

/// P(a < Z <= b), evaluated on whichever tail keeps full relative precision.
inline double mass(double a, double b) noexcept
{
    if (!(b > a))
        return 0.0;
    if (a >= 0.0)
        return ccdf(a) - ccdf(b);
    if (b <= 0.0)
        return cdf(b) - cdf(a);
    return 1.0 - cdf(a) - ccdf(b);
}

/// Inverse of cdf for p in (0, 1).
inline double quantile(double p) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p); }

/// Inverse of ccdf for q in (0, 1).
inline double upper_quantile(double q) { return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q); }

} // namespace distrn::normal
