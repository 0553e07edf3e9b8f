#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "distrn/epidemic.hpp"
#include "distrn/normal.hpp"
#include "distrn/rng.hpp"

namespace distrn {

struct Interval {
    double lower = 0.0;
    double upper = 14.0;

    [[nodiscard]] double width() const noexcept { return upper - lower; }
    bool operator==(const Interval&) const = default;
};

/// Parameters of TrunG(mu, sigma, lower, upper), supported on (lower, upper].
struct TruncGaussParams {
    double mu = 0.0;
    double sigma = 1.0;
    double lower = 0.0;
    double upper = 1.0;

    /// Standardized lower bound (lower - mu) / sigma.
    [[nodiscard]] double alpha() const noexcept { return (lower - mu) / sigma; }
    /// Standardized upper bound (upper - mu) / sigma.
    [[nodiscard]] double beta() const noexcept { return (upper - mu) / sigma; }

    void validate() const
    {
        if (!(sigma > 0.0) || !std::isfinite(sigma))
            throw ConfigError("truncated Gaussian sigma must be positive and finite");
        if (!(lower < upper) || !std::isfinite(lower) || !std::isfinite(upper))
            throw ConfigError("truncated Gaussian bounds must be finite with lower < upper");
        if (!(mu >= lower && mu <= upper))
            throw ConfigError("truncated Gaussian center " + std::to_string(mu) + " outside [" +
                              std::to_string(lower) + ", " + std::to_string(upper) + "]");
    }
};

/// Below this acceptance probability the sampler switches from rejection to
/// inverse-CDF sampling.
inline constexpr double kRejectionAcceptanceFloor = 0.05;

/// Draws one sample from TrunG(params). The result always lies in (lower, upper].
inline double trunc_gauss_sample(const TruncGaussParams& p, Stream& stream)
{
    p.validate();
    const double a = p.alpha();
    const double b = p.beta();
    const double acceptance = normal::mass(a, b);

    if (acceptance >= kRejectionAcceptanceFloor) {
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (;;) {
            const double z = p.mu + p.sigma * gauss(stream);
            if (z > p.lower && z <= p.upper)
                return z;
        }
    }

    // Inverse CDF on the tail that keeps precision.
    const double u = stream.uniform_open_closed();
    double z;
    if (a >= 0.0) {
        const double qa = normal::ccdf(a);
        const double qb = normal::ccdf(b);
        z = normal::upper_quantile(qa - u * (qa - qb));
    } else {
        const double pa = normal::cdf(a);
        const double pb = normal::cdf(b);
        z = normal::quantile(pa + u * (pb - pa));
    }
    double v = p.mu + p.sigma * z;
    if (!(v > p.lower))
        v = std::nextafter(p.lower, p.upper);
    return std::min(v, p.upper);
}

struct Moments {
    double mean = 0.0;
    double variance = 0.0;
};

/// Closed-form mean and variance of TrunG(params).
inline Moments trunc_gauss_moments(const TruncGaussParams& p)
{
    p.validate();
    const double a = p.alpha();
    const double b = p.beta();
    const double z = normal::mass(a, b);
    if (!(z >= 1e-15))
        throw NumericError("degenerate truncation window: normal mass " + std::to_string(z) +
                           " below 1e-15");
    const double pa = normal::pdf(a);
    const double pb = normal::pdf(b);
    const double ratio = (pa - pb) / z;
    // x * pdf(x) vanishes at infinite bounds; guard the 0 * inf case.
    const double apa = std::isfinite(a) ? a * pa : 0.0;
    const double bpb = std::isfinite(b) ? b * pb : 0.0;
    Moments m;
    m.mean = p.mu + p.sigma * ratio;
    m.variance = p.sigma * p.sigma * (1.0 - (bpb - apa) / z - ratio * ratio);
    m.variance = std::max(m.variance, 0.0);
    return m;
}

// ---------------------------------------------------------------------------
// Noise calibration for the bounded Gaussian mechanism
// ---------------------------------------------------------------------------

namespace detail {

inline Interval bound_for(std::span<const Interval> bounds, std::size_t r)
{
    if (bounds.size() == 1)
        return bounds[0];
    return bounds[r];
}

inline void check_bounds(std::span<const Interval> bounds, std::size_t m)
{
    if (bounds.size() != 1 && bounds.size() != m)
        throw ConfigError("expected 1 or " + std::to_string(m) + " entry bounds, got " +
                          std::to_string(bounds.size()));
    for (const Interval& b : bounds)
        if (!(b.lower < b.upper) || !std::isfinite(b.lower) || !std::isfinite(b.upper))
            throw ConfigError("entry bounds must be finite with lower < upper");
}

// log of one factor of the normalizing-constant ratio Delta C.
inline double log_offset_factor(double width, double offset, double sigma)
{
    const double num = normal::mass(-offset / sigma, (width - offset) / sigma);
    const double den = normal::mass(0.0, width / sigma);
    return std::log(num) - std::log(den);
}

// Maximizes f on [lo, hi] for unimodal f.
template <class F>
double golden_section_max(F&& f, double lo, double hi, int iterations = 90)
{
    constexpr double inv_phi = 0.6180339887498949;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = f(x1);
    double f2 = f(x2);
    for (int it = 0; it < iterations && hi - lo > 0.0; ++it) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    const double mid = 0.5 * (lo + hi);
    return mid;
}

} // namespace detail

/// log Delta C(sigma, c): sum over active entries of the log ratio between the
/// offset and unshifted normal masses of each entry's window.
inline double log_delta_c(double sigma, const Vector& offset, std::span<const Interval> bounds,
                          const std::vector<bool>& active)
{
    double total = 0.0;
    for (std::size_t r = 0; r < active.size(); ++r)
        if (active[r])
            total += detail::log_offset_factor(detail::bound_for(bounds, r).width(),
                                               offset(static_cast<Eigen::Index>(r)), sigma);
    return total;
}

/// Offset vector c >= 0 with ||c||_2 <= k maximizing Delta C(sigma, c).
///
/// Each factor is log-concave in its offset and increasing up to half the
/// window width, so the maximizer solves the stationarity condition of the
/// Lagrangian sum_r log f_r(c_r) - lambda * c_r^2. Coordinates are maximized by
/// golden-section search for fixed lambda, and lambda is bisected until the
/// norm constraint is active.
inline Vector worst_case_offset(double sigma, double k, std::span<const Interval> bounds,
                                const std::vector<bool>& active)
{
    const auto m = static_cast<Eigen::Index>(active.size());
    Vector c = Vector::Zero(m);
    std::vector<std::size_t> idx;
    for (std::size_t r = 0; r < active.size(); ++r)
        if (active[r])
            idx.push_back(r);
    if (idx.empty())
        return c;

    Vector cap = Vector::Zero(m);
    double cap_norm2 = 0.0;
    bool equal_widths = true;
    const double w0 = detail::bound_for(bounds, idx.front()).width();
    for (std::size_t r : idx) {
        const double w = detail::bound_for(bounds, r).width();
        equal_widths = equal_widths && w == w0;
        cap(static_cast<Eigen::Index>(r)) = std::min(k, 0.5 * w);
        cap_norm2 += cap(static_cast<Eigen::Index>(r)) * cap(static_cast<Eigen::Index>(r));
    }
    if (cap_norm2 <= k * k)
        return cap;

    if (equal_widths) {
        // Symmetric concave problem: the maximizer spreads the budget evenly.
        const double share = std::min(k / std::sqrt(static_cast<double>(idx.size())), 0.5 * w0);
        for (std::size_t r : idx)
            c(static_cast<Eigen::Index>(r)) = share;
        return c;
    }

    auto solve = [&](double lambda) {
        Vector out = Vector::Zero(m);
        for (std::size_t r : idx) {
            const double w = detail::bound_for(bounds, r).width();
            const auto rr = static_cast<Eigen::Index>(r);
            out(rr) = detail::golden_section_max(
                [&](double v) { return detail::log_offset_factor(w, v, sigma) - lambda * v * v; },
                0.0, cap(rr));
        }
        return out;
    };

    double lo = 0.0;
    double hi = 1.0 / (sigma * k);
    while (solve(hi).norm() > k)
        hi *= 4.0;
    for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (solve(mid).norm() > k)
            lo = mid;
        else
            hi = mid;
    }
    c = solve(hi);
    const double norm = c.norm();
    if (norm > 0.0)
        c *= k / norm;
    return c;
}

/// Right-hand side of the sigma calibration inequality
///   sigma^2 >= k (k/2 + sqrt(sum_active width^2)) / (eps0 - log Delta C),
/// or +infinity when the denominator is not positive.
inline double calibration_rhs(double sigma, const Vector& offset, double epsilon0, double k,
                              std::span<const Interval> bounds, const std::vector<bool>& active)
{
    double width_sq = 0.0;
    for (std::size_t r = 0; r < active.size(); ++r)
        if (active[r]) {
            const double w = detail::bound_for(bounds, r).width();
            width_sq += w * w;
        }
    const double denom = epsilon0 - log_delta_c(sigma, offset, bounds, active);
    if (!(denom > 0.0))
        return std::numeric_limits<double>::infinity();
    return k * (0.5 * k + std::sqrt(width_sq)) / denom;
}

/// Whether sigma satisfies the calibration inequality at its worst-case offset.
inline bool sigma_feasible(double sigma, double epsilon0, double k, std::span<const Interval> bounds,
                           const std::vector<bool>& active)
{
    const Vector c = worst_case_offset(sigma, k, bounds, active);
    return sigma * sigma >= calibration_rhs(sigma, c, epsilon0, k, bounds, active);
}

struct Calibration {
    double sigma = 0.0;
    Vector offset;
    double log_delta_c = 0.0;
    /// The offset comes from a numeric search, not a closed form.
    bool offset_approximate = true;
};

/// Smallest sigma (relative precision 1e-9) satisfying the calibration
/// inequality for the given active entries, searched geometrically in
/// [1e-8 k, 10 max width].
inline Calibration calibrate_sigma(double epsilon0, double k, std::span<const Interval> bounds,
                                   const std::vector<bool>& active)
{
    if (!(epsilon0 > 0.0) || !std::isfinite(epsilon0))
        throw ConfigError("epsilon0 must be positive and finite");
    if (!(k > 0.0) || !std::isfinite(k))
        throw ConfigError("adjacency radius k must be positive and finite");
    detail::check_bounds(bounds, active.size());
    if (std::find(active.begin(), active.end(), true) == active.end())
        throw ConfigError("calibration needs at least one positive entry");

    double max_width = 0.0;
    for (std::size_t r = 0; r < active.size(); ++r)
        max_width = std::max(max_width, detail::bound_for(bounds, r).width());

    double lo = 1e-8 * k;
    double hi = 10.0 * max_width;
    if (!sigma_feasible(hi, epsilon0, k, bounds, active))
        throw CalibrationError("no sigma up to " + std::to_string(hi) +
                               " satisfies the privacy calibration; increase epsilon0 or decrease k");
    if (sigma_feasible(lo, epsilon0, k, bounds, active))
        hi = lo;
    while (hi / lo - 1.0 > 1e-9) {
        const double mid = std::sqrt(lo * hi);
        if (sigma_feasible(mid, epsilon0, k, bounds, active))
            hi = mid;
        else
            lo = mid;
    }

    Calibration cal;
    cal.sigma = hi;
    cal.offset = worst_case_offset(hi, k, bounds, active);
    cal.log_delta_c = log_delta_c(hi, cal.offset, bounds, active);
    if (!(hi * hi >= calibration_rhs(hi, cal.offset, epsilon0, k, bounds, active)))
        throw NumericError("calibrated sigma fails re-substitution");
    return cal;
}

/// Bounded Gaussian local randomizer: zero entries stay exactly zero, positive
/// entries are replaced by TrunG(value, sigma, lower, upper) draws.
inline Vector bounded_gaussian_randomize(const Vector& zeta, std::span<const Interval> bounds,
                                         double sigma, Stream& stream)
{
    detail::check_bounds(bounds, static_cast<std::size_t>(zeta.size()));
    Vector out(zeta.size());
    for (Eigen::Index r = 0; r < zeta.size(); ++r) {
        const double v = zeta(r);
        if (v == 0.0) {
            out(r) = 0.0;
            continue;
        }
        const Interval b = detail::bound_for(bounds, static_cast<std::size_t>(r));
        if (!(v > 0.0) || v < b.lower || v > b.upper)
            throw ConfigError("mechanism input entry " + std::to_string(r) + " = " +
                              std::to_string(v) + " outside its bounds; clamp before randomizing");
        out(r) = trunc_gauss_sample({v, sigma, b.lower, b.upper}, stream);
    }
    return out;
}

/// Uniform random permutation (Fisher-Yates).
template <class T>
std::vector<T> shuffle(std::vector<T> items, Stream& stream)
{
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(stream.below(i));
        std::swap(items[i - 1], items[j]);
    }
    return items;
}

/// Whether the shuffle amplification bound applies: delta in (0,1) and
/// eps0 <= ln(cluster_size / (8 ln(2/delta)) - 1).
inline bool amplification_applies(double epsilon0, double delta, std::size_t cluster_size) noexcept
{
    if (!(delta > 0.0 && delta < 1.0) || cluster_size == 0 || !(epsilon0 > 0.0))
        return false;
    const double arg = static_cast<double>(cluster_size) / (8.0 * std::log(2.0 / delta)) - 1.0;
    return arg > 0.0 && epsilon0 <= std::log(arg);
}

/// Central epsilon after shuffling the reports of `cluster_size` eps0-private
/// local randomizers.
inline double amplified_epsilon(double epsilon0, double delta, std::size_t cluster_size)
{
    if (!(delta > 0.0 && delta < 1.0))
        throw ConfigError("delta must lie in (0,1)");
    if (!(epsilon0 > 0.0) || !std::isfinite(epsilon0))
        throw ConfigError("epsilon0 must be positive and finite");
    if (!amplification_applies(epsilon0, delta, cluster_size))
        throw ConfigError("shuffle amplification needs eps0 <= ln(n/(8 ln(2/delta)) - 1); eps0=" +
                          std::to_string(epsilon0) + ", n=" + std::to_string(cluster_size));
    const double n = static_cast<double>(cluster_size);
    const double spread = 4.0 * std::sqrt(2.0 * std::log(4.0 / delta)) /
                              std::sqrt((std::exp(epsilon0) + 1.0) * n) +
                          4.0 / n;
    return std::log1p(std::expm1(epsilon0) * spread);
}

/// Privacy configuration shared by all local authorities.
struct PrivacySpec {
    double epsilon0 = 1.0;
    double delta = 0.01;
    double k = 1e-5;
    /// One interval for every entry, or one per cluster column.
    std::vector<Interval> bounds{Interval{0.0, 14.0}};
    /// Fixed noise scale that bypasses calibration.
    std::optional<double> sigma_override;

    bool operator==(const PrivacySpec&) const = default;
};

} // namespace distrn
