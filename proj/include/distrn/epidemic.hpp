#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "distrn/errors.hpp"

namespace distrn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ModelKind { SIS, SIR };

inline std::string_view to_string(ModelKind kind) noexcept
{
    return kind == ModelKind::SIS ? "SIS" : "SIR";
}

inline ModelKind model_kind_from_string(std::string_view name)
{
    if (name == "SIS" || name == "sis")
        return ModelKind::SIS;
    if (name == "SIR" || name == "sir")
        return ModelKind::SIR;
    throw ConfigError("unknown model kind '" + std::string(name) + "' (expected SIS or SIR)");
}

namespace detail {

// Breadth-first reachability over the nonzero pattern of `adj`, following
// edges j -> i when `reverse` is false (entry (i, j) nonzero) and i -> j otherwise.
inline bool reaches_all(const Matrix& adj, bool reverse)
{
    const Eigen::Index n = adj.rows();
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<Eigen::Index> frontier{0};
    seen[0] = 1;
    Eigen::Index count = 1;
    while (!frontier.empty()) {
        const Eigen::Index u = frontier.back();
        frontier.pop_back();
        for (Eigen::Index v = 0; v < n; ++v) {
            const double w = reverse ? adj(u, v) : adj(v, u);
            if (w != 0.0 && !seen[static_cast<std::size_t>(v)]) {
                seen[static_cast<std::size_t>(v)] = 1;
                ++count;
                frontier.push_back(v);
            }
        }
    }
    return count == n;
}

} // namespace detail

/// True when the directed graph induced by the nonzero entries of `adj` is
/// strongly connected.
inline bool strongly_connected(const Matrix& adj)
{
    if (adj.rows() != adj.cols())
        return false;
    if (adj.rows() <= 1)
        return true;
    return detail::reaches_all(adj, false) && detail::reaches_all(adj, true);
}

/// Spreading network: entry (i, j) of the transmission matrix is the rate at
/// which infections in node j infect node i. Immutable after construction.
class TransmissionNetwork {
public:
    TransmissionNetwork(Matrix transmission, Vector recovery)
        : beta_(std::move(transmission)), gamma_(std::move(recovery))
    {
        if (beta_.rows() == 0 || beta_.rows() != beta_.cols())
            throw ConfigError("transmission matrix must be square and non-empty");
        if (gamma_.size() != beta_.rows())
            throw ConfigError("recovery vector length " + std::to_string(gamma_.size()) +
                              " does not match node count " + std::to_string(beta_.rows()));
        for (Eigen::Index i = 0; i < beta_.rows(); ++i) {
            for (Eigen::Index j = 0; j < beta_.cols(); ++j) {
                const double b = beta_(i, j);
                if (!(b >= 0.0 && b <= 1.0))
                    throw ConfigError("transmission rate (" + std::to_string(i) + "," +
                                      std::to_string(j) + ") outside [0,1]");
            }
            if (!(gamma_(i) > 0.0 && gamma_(i) <= 1.0))
                throw ConfigError("recovery rate " + std::to_string(i) + " outside (0,1]");
        }
        if (!strongly_connected(beta_))
            throw ConfigError("transmission graph is not strongly connected");
    }

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(beta_.rows()); }
    [[nodiscard]] const Matrix& transmission() const noexcept { return beta_; }
    [[nodiscard]] const Vector& recovery() const noexcept { return gamma_; }
    [[nodiscard]] double beta(std::size_t i, std::size_t j) const
    {
        return beta_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    [[nodiscard]] double gamma(std::size_t i) const { return gamma_(static_cast<Eigen::Index>(i)); }

    /// Largest inbound transmission row sum; bounds the spectral radius of B.
    [[nodiscard]] double max_row_sum() const { return beta_.rowwise().sum().maxCoeff(); }

private:
    Matrix beta_;
    Vector gamma_;
};

/// Susceptible / infected / recovered fractions of every node at time t.
struct EpidemicState {
    double t = 0.0;
    Vector s;
    Vector x;
    Vector r;

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(x.size()); }

    /// Builds a state with r = 0 and s = 1 - x.
    static EpidemicState from_infected(Vector infected, double time = 0.0)
    {
        EpidemicState st;
        st.t = time;
        st.s = Vector::Ones(infected.size()) - infected;
        st.r = Vector::Zero(infected.size());
        st.x = std::move(infected);
        st.validate();
        return st;
    }

    /// Throws ConfigError unless all fractions lie in [0,1] and each node's
    /// triple sums to one within `tol`.
    void validate(double tol = 1e-9) const
    {
        const auto n = x.size();
        if (s.size() != n || r.size() != n)
            throw ConfigError("state vectors s, x, r differ in length");
        for (Eigen::Index i = 0; i < n; ++i) {
            for (double v : {s(i), x(i), r(i)}) {
                if (!(v >= 0.0 && v <= 1.0))
                    throw ConfigError("state fraction of node " + std::to_string(i) +
                                      " outside [0,1]");
            }
            if (std::abs(s(i) + x(i) + r(i) - 1.0) > tol)
                throw ConfigError("state fractions of node " + std::to_string(i) +
                                  " do not sum to 1");
        }
    }

    /// Largest |s_i + x_i + r_i - 1| over nodes.
    [[nodiscard]] double conservation_error() const
    {
        return ((s + x + r).array() - 1.0).abs().maxCoeff();
    }
};

struct StateDerivative {
    Vector ds;
    Vector dx;
    Vector dr;
};

/// Right-hand side of the network SIS / SIR equations.
inline StateDerivative derivative(const TransmissionNetwork& net, const EpidemicState& state,
                                  ModelKind kind)
{
    const auto n = static_cast<Eigen::Index>(net.size());
    if (state.x.size() != n || state.s.size() != n || state.r.size() != n)
        throw ConfigError("state dimension " + std::to_string(state.x.size()) +
                          " does not match network size " + std::to_string(n));

    const Vector infection = state.s.cwiseProduct(net.transmission() * state.x);
    const Vector recovery = net.recovery().cwiseProduct(state.x);

    StateDerivative d;
    d.dx = infection - recovery;
    if (kind == ModelKind::SIS) {
        d.ds = -d.dx;
        d.dr = Vector::Zero(n);
    } else {
        d.ds = -infection;
        d.dr = recovery;
    }
    return d;
}

namespace detail {

// Clamps negative round-off to zero and renormalizes triples that drift from 1.
inline void normalize(EpidemicState& st)
{
    for (Eigen::Index i = 0; i < st.x.size(); ++i) {
        double& s = st.s(i);
        double& x = st.x(i);
        double& r = st.r(i);
        if (!std::isfinite(s) || !std::isfinite(x) || !std::isfinite(r))
            throw NumericError("non-finite state at t=" + std::to_string(st.t) +
                               "; reduce the step size");
        s = std::max(s, 0.0);
        x = std::max(x, 0.0);
        r = std::max(r, 0.0);
        const double total = s + x + r;
        if (std::abs(total - 1.0) > 1e-12) {
            s /= total;
            x /= total;
            r /= total;
        }
    }
}

} // namespace detail

/// Largest step size that passes the stability heuristic.
inline double recommended_max_step(const TransmissionNetwork& net)
{
    const double rate = net.max_row_sum();
    return rate > 0.0 ? 0.1 / rate : std::numeric_limits<double>::infinity();
}

/// Fixed-step classical RK4 trajectory of `steps` steps starting at `initial`;
/// the result holds steps + 1 states. A warning is written to `warn` (when
/// non-null) if dt exceeds recommended_max_step.
inline std::vector<EpidemicState> integrate(const TransmissionNetwork& net,
                                            const EpidemicState& initial, ModelKind kind,
                                            double dt, std::size_t steps,
                                            std::ostream* warn = nullptr)
{
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw ConfigError("integration step must be positive and finite");
    if (initial.size() != net.size())
        throw ConfigError("initial state dimension does not match network size");
    initial.validate();
    if (warn != nullptr && dt > recommended_max_step(net))
        *warn << "warning: dt=" << dt << " exceeds 0.1/max_i sum_j beta_ij = "
              << recommended_max_step(net) << "; results may be unstable\n";

    std::vector<EpidemicState> out;
    out.reserve(steps + 1);
    out.push_back(initial);
    if (kind == ModelKind::SIS)
        out.back().r.setZero();

    auto shifted = [](const EpidemicState& base, const StateDerivative& d, double h) {
        EpidemicState st;
        st.t = base.t + h;
        st.s = base.s + h * d.ds;
        st.x = base.x + h * d.dx;
        st.r = base.r + h * d.dr;
        return st;
    };

    for (std::size_t k = 0; k < steps; ++k) {
        const EpidemicState& cur = out.back();
        const StateDerivative k1 = derivative(net, cur, kind);
        const StateDerivative k2 = derivative(net, shifted(cur, k1, dt / 2), kind);
        const StateDerivative k3 = derivative(net, shifted(cur, k2, dt / 2), kind);
        const StateDerivative k4 = derivative(net, shifted(cur, k3, dt), kind);

        EpidemicState next;
        next.t = initial.t + static_cast<double>(k + 1) * dt;
        next.s = cur.s + (dt / 6) * (k1.ds + 2 * k2.ds + 2 * k3.ds + k4.ds);
        next.x = cur.x + (dt / 6) * (k1.dx + 2 * k2.dx + 2 * k3.dx + k4.dx);
        next.r = cur.r + (dt / 6) * (k1.dr + 2 * k2.dr + 2 * k3.dr + k4.dr);
        detail::normalize(next);
        out.push_back(std::move(next));
    }
    return out;
}

} // namespace distrn
