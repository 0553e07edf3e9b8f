#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "distrn/epidemic.hpp"

namespace distrn {

/// Options shared by every effective reproduction number computation.
///
/// Infected fractions are floored before use so that the infection ratios
/// x_j / x_i are always defined. With `populations` set, the floor of node i is
/// one infected individual, 1 / population_i; otherwise `infection_floor`.
struct RnOptions {
    bool floor_enabled = true;
    double infection_floor = 1e-9;
    std::optional<Vector> populations;

    bool clamp = false;
    double clamp_lower = 0.0;
    double clamp_upper = 14.0;
};

/// Infected fractions after applying the configured floor.
inline Vector floored_infections(const EpidemicState& state, const RnOptions& opts = {})
{
    Vector x = state.x;
    if (opts.populations && opts.populations->size() != x.size())
        throw ConfigError("population vector length does not match node count");
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (opts.floor_enabled) {
            const double floor = opts.populations ? 1.0 / (*opts.populations)(i) : opts.infection_floor;
            x(i) = std::max(x(i), floor);
        } else if (!(x(i) > 0.0)) {
            throw NumericError("infected fraction of node " + std::to_string(i) +
                               " is zero; infection ratio undefined");
        }
    }
    return x;
}

/// State quantities every authority may read: recovery rates, susceptible
/// fractions and floored infected fractions.
struct PublicData {
    double t = 0.0;
    Vector gamma;
    Vector s;
    Vector x;
};

inline PublicData public_data(const TransmissionNetwork& net, const EpidemicState& state,
                              const RnOptions& opts = {})
{
    if (state.size() != net.size())
        throw ConfigError("state dimension does not match network size");
    return PublicData{state.t, net.recovery(), state.s, floored_infections(state, opts)};
}

namespace detail {

inline double clamp_rn(double v, const RnOptions& opts)
{
    return opts.clamp ? std::clamp(v, opts.clamp_lower, opts.clamp_upper) : v;
}

// R̄_ij = (s_i beta_ij / gamma_i) * (x_j / x_i). Every effective quantity goes
// through this one expression so that row sums and aggregates agree bitwise.
inline double effective_entry(double s_i, double beta_ij, double gamma_i, double x_i, double x_j,
                              const RnOptions& opts)
{
    return clamp_rn(s_i * beta_ij / gamma_i * (x_j / x_i), opts);
}

// Sum that does not depend on the order of the inputs.
inline double order_insensitive_sum(std::vector<double> values)
{
    std::sort(values.begin(), values.end());
    double total = 0.0;
    for (double v : values)
        total += v;
    return total;
}

} // namespace detail

/// Local distributed effective reproduction number from node j into node i.
inline double local_distributed_ern(const TransmissionNetwork& net, const EpidemicState& state,
                                    std::size_t i, std::size_t j, const RnOptions& opts = {})
{
    if (i >= net.size() || j >= net.size())
        throw ConfigError("node index out of range");
    const Vector x = floored_infections(state, opts);
    const auto ii = static_cast<Eigen::Index>(i);
    const auto jj = static_cast<Eigen::Index>(j);
    return detail::effective_entry(state.s(ii), net.beta(i, j), net.gamma(i), x(ii), x(jj), opts);
}

enum class RnKind { Basic, PseudoEffective, Effective };

inline std::string_view to_string(RnKind kind) noexcept
{
    switch (kind) {
    case RnKind::Basic: return "basic";
    case RnKind::PseudoEffective: return "pseudo";
    case RnKind::Effective: return "effective";
    }
    return "?";
}

inline RnKind rn_kind_from_string(std::string_view name)
{
    if (name == "basic")
        return RnKind::Basic;
    if (name == "pseudo")
        return RnKind::PseudoEffective;
    if (name == "effective")
        return RnKind::Effective;
    throw ConfigError("unknown reproduction matrix kind '" + std::string(name) + "'");
}

/// n×n matrix of local distributed reproduction numbers.
struct LocalRnMatrix {
    RnKind kind = RnKind::Basic;
    Matrix values;
    std::optional<double> t;
};

/// Builds the basic (beta_ij / gamma_i), pseudo-effective (s_i beta_ij / gamma_i)
/// or effective (pseudo-effective times x_j / x_i) matrix. `state` is ignored
/// for the basic kind.
inline LocalRnMatrix build_matrix(const TransmissionNetwork& net, RnKind kind,
                                  const EpidemicState& state, const RnOptions& opts = {})
{
    const auto n = static_cast<Eigen::Index>(net.size());
    LocalRnMatrix out{kind, Matrix(n, n), std::nullopt};
    if (kind == RnKind::Basic) {
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                out.values(i, j) = detail::clamp_rn(net.transmission()(i, j) / net.recovery()(i), opts);
        return out;
    }
    if (state.size() != net.size())
        throw ConfigError("state dimension does not match network size");
    out.t = state.t;
    if (kind == RnKind::PseudoEffective) {
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                out.values(i, j) = detail::clamp_rn(
                    state.s(i) * net.transmission()(i, j) / net.recovery()(i), opts);
        return out;
    }
    const Vector x = floored_infections(state, opts);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            out.values(i, j) = detail::effective_entry(state.s(i), net.transmission()(i, j),
                                                       net.recovery()(i), x(i), x(j), opts);
    return out;
}

inline LocalRnMatrix basic_matrix(const TransmissionNetwork& net, const RnOptions& opts = {})
{
    const auto n = static_cast<Eigen::Index>(net.size());
    EpidemicState unused{0.0, Vector::Ones(n), Vector::Zero(n), Vector::Zero(n)};
    return build_matrix(net, RnKind::Basic, unused, opts);
}

namespace detail {

inline double lern_from(const TransmissionNetwork& net, const Vector& s, const Vector& x,
                        std::size_t i, const RnOptions& opts)
{
    const auto ii = static_cast<Eigen::Index>(i);
    double total = 0.0;
    for (std::size_t j = 0; j < net.size(); ++j)
        total += effective_entry(s(ii), net.beta(i, j), net.gamma(i), x(ii),
                                 x(static_cast<Eigen::Index>(j)), opts);
    return total;
}

} // namespace detail

/// Local effective reproduction number of node i: row sum of the effective matrix.
inline double lern(const TransmissionNetwork& net, const EpidemicState& state, std::size_t i,
                   const RnOptions& opts = {})
{
    if (i >= net.size())
        throw ConfigError("node index out of range");
    if (state.size() != net.size())
        throw ConfigError("state dimension does not match network size");
    return detail::lern_from(net, state.s, floored_infections(state, opts), i, opts);
}

/// Local effective reproduction numbers of all nodes.
inline Vector lerns(const TransmissionNetwork& net, const EpidemicState& state,
                    const RnOptions& opts = {})
{
    if (state.size() != net.size())
        throw ConfigError("state dimension does not match network size");
    const Vector x = floored_infections(state, opts);
    Vector out(static_cast<Eigen::Index>(net.size()));
    for (std::size_t i = 0; i < net.size(); ++i)
        out(static_cast<Eigen::Index>(i)) = detail::lern_from(net, state.s, x, i, opts);
    return out;
}

/// Local basic reproduction number of node i.
inline double lbrn(const TransmissionNetwork& net, std::size_t i)
{
    if (i >= net.size())
        throw ConfigError("node index out of range");
    double total = 0.0;
    for (std::size_t j = 0; j < net.size(); ++j)
        total += net.beta(i, j) / net.gamma(i);
    return total;
}

struct SpectralOptions {
    double tolerance = 1e-12;
    int max_iterations = 10000;
};

/// Perron root of a square nonnegative matrix by power iteration.
///
/// Iterates on M + aI with a > 0 so the Perron root is strictly dominant even
/// for periodic matrices, starting from the all-ones vector. Stops when the
/// Collatz-Wielandt bounds min_i (Mv)_i/v_i <= rho <= max_i (Mv)_i/v_i meet
/// within the tolerance, or, for reducible inputs whose bounds never meet,
/// once the iterate direction is stationary.
inline double spectral_radius(const Matrix& m, const SpectralOptions& opts = {})
{
    if (m.rows() != m.cols() || m.rows() == 0)
        throw ConfigError("spectral radius needs a non-empty square matrix");
    if (!m.allFinite() || (m.array() < 0.0).any())
        throw ConfigError("spectral radius needs a finite nonnegative matrix");

    const Eigen::Index n = m.rows();
    const double mean_row = m.sum() / static_cast<double>(n);
    if (mean_row == 0.0)
        return 0.0;
    const double shift = 0.5 * mean_row;

    Vector v = Vector::Ones(n);
    double previous = -1.0;
    for (int it = 0; it < opts.max_iterations; ++it) {
        Vector w = m * v;
        double lo = std::numeric_limits<double>::infinity();
        double hi = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double ratio = w(i) / v(i);
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
        }
        if (hi - lo <= opts.tolerance * hi)
            return 0.5 * (lo + hi);

        w += shift * v;
        const double scale = w.maxCoeff();
        w /= scale;
        const double estimate = scale / v.maxCoeff() - shift;
        const double moved = (w - v / v.maxCoeff()).cwiseAbs().maxCoeff();
        if (moved <= 1e-15 && std::abs(estimate - previous) <= opts.tolerance * std::abs(estimate))
            return estimate;
        previous = estimate;
        v = std::move(w);
    }
    throw NumericError("power iteration did not converge in " +
                       std::to_string(opts.max_iterations) + " iterations");
}

/// Network-level basic reproduction number rho(Gamma^-1 B).
inline double network_reproduction(const TransmissionNetwork& net)
{
    return spectral_radius(basic_matrix(net).values);
}

/// Network-level effective reproduction number rho(diag(s) Gamma^-1 B).
inline double network_reproduction(const TransmissionNetwork& net, const EpidemicState& state)
{
    return spectral_radius(build_matrix(net, RnKind::PseudoEffective, state).values);
}

/// Disjoint, exhaustive assignment of n nodes to m non-empty clusters.
class Partition {
public:
    /// `assignment[i]` is the zero-based cluster of node i; cluster ids must
    /// cover 0..m-1.
    static Partition from_assignment(std::vector<std::size_t> assignment)
    {
        if (assignment.empty())
            throw ConfigError("partition must cover at least one node");
        const std::size_t m = *std::max_element(assignment.begin(), assignment.end()) + 1;
        std::vector<std::vector<std::size_t>> members(m);
        for (std::size_t i = 0; i < assignment.size(); ++i)
            members[assignment[i]].push_back(i);
        for (std::size_t q = 0; q < m; ++q)
            if (members[q].empty())
                throw ConfigError("partition cluster " + std::to_string(q) + " is empty");
        return Partition(std::move(assignment), std::move(members));
    }

    /// Builds from explicit member lists; rejects overlapping, missing, empty
    /// or out-of-range entries.
    static Partition from_clusters(std::size_t n, const std::vector<std::vector<std::size_t>>& clusters)
    {
        constexpr std::size_t unset = static_cast<std::size_t>(-1);
        std::vector<std::size_t> assignment(n, unset);
        for (std::size_t q = 0; q < clusters.size(); ++q) {
            if (clusters[q].empty())
                throw ConfigError("partition cluster " + std::to_string(q) + " is empty");
            for (std::size_t i : clusters[q]) {
                if (i >= n)
                    throw ConfigError("partition cluster " + std::to_string(q) + " names node " +
                                      std::to_string(i) + " outside 0.." + std::to_string(n - 1));
                if (assignment[i] != unset)
                    throw ConfigError("partition clusters overlap: node " + std::to_string(i) +
                                      " is in clusters " + std::to_string(assignment[i]) + " and " +
                                      std::to_string(q));
                assignment[i] = q;
            }
        }
        for (std::size_t i = 0; i < n; ++i)
            if (assignment[i] == unset)
                throw ConfigError("partition does not cover node " + std::to_string(i));
        return from_assignment(std::move(assignment));
    }

    static Partition singletons(std::size_t n)
    {
        std::vector<std::size_t> a(n);
        for (std::size_t i = 0; i < n; ++i)
            a[i] = i;
        return from_assignment(std::move(a));
    }

    static Partition whole(std::size_t n) { return from_assignment(std::vector<std::size_t>(n, 0)); }

    [[nodiscard]] std::size_t node_count() const noexcept { return assignment_.size(); }
    [[nodiscard]] std::size_t cluster_count() const noexcept { return members_.size(); }
    [[nodiscard]] std::size_t cluster_of(std::size_t node) const { return assignment_.at(node); }
    [[nodiscard]] const std::vector<std::size_t>& members(std::size_t q) const { return members_.at(q); }
    [[nodiscard]] const std::vector<std::size_t>& assignment() const noexcept { return assignment_; }
    [[nodiscard]] const std::vector<std::vector<std::size_t>>& clusters() const noexcept { return members_; }

    /// Coarser partition obtained by sending fine cluster q to `mapping[q]`.
    [[nodiscard]] Partition merged(const std::vector<std::size_t>& mapping) const
    {
        validate_mapping(mapping);
        std::vector<std::size_t> a(assignment_.size());
        for (std::size_t i = 0; i < a.size(); ++i)
            a[i] = mapping[assignment_[i]];
        return from_assignment(std::move(a));
    }

    /// Number of coarse clusters named by `mapping`; throws unless the mapping
    /// covers every fine cluster and is onto 0..m'-1.
    std::size_t validate_mapping(const std::vector<std::size_t>& mapping) const
    {
        if (mapping.size() != cluster_count())
            throw ConfigError("cluster mapping has " + std::to_string(mapping.size()) +
                              " entries for " + std::to_string(cluster_count()) + " clusters");
        const std::size_t coarse = *std::max_element(mapping.begin(), mapping.end()) + 1;
        std::vector<char> hit(coarse, 0);
        for (std::size_t c : mapping)
            hit[c] = 1;
        if (std::find(hit.begin(), hit.end(), 0) != hit.end())
            throw ConfigError("cluster mapping is not onto its coarse index range");
        return coarse;
    }

    friend bool operator==(const Partition& a, const Partition& b) { return a.assignment_ == b.assignment_; }

private:
    Partition(std::vector<std::size_t> assignment, std::vector<std::vector<std::size_t>> members)
        : assignment_(std::move(assignment)), members_(std::move(members))
    {
    }

    std::vector<std::size_t> assignment_;
    std::vector<std::vector<std::size_t>> members_;
};

/// m×m matrix of cluster distributed effective reproduction numbers.
struct ClusterRnMatrix {
    Matrix values;
    double t = 0.0;
    bool is_private = false;
};

namespace detail {

inline double recovery_flux(const PublicData& pub, const std::vector<std::size_t>& members)
{
    double total = 0.0;
    for (std::size_t k : members) {
        const auto kk = static_cast<Eigen::Index>(k);
        total += pub.gamma(kk) * pub.x(kk);
    }
    return total;
}

inline void check_partition(const TransmissionNetwork& net, const Partition& partition)
{
    if (partition.node_count() != net.size())
        throw ConfigError("partition covers " + std::to_string(partition.node_count()) +
                          " nodes but the network has " + std::to_string(net.size()));
}

} // namespace detail

/// Local aggregated ERN vector of node i: entry r is
/// gamma_i x_i * sum over k in cluster r of R̄_ik.
///
/// Reads only node i's inbound transmission row plus public data.
inline Vector aggregated_row(std::size_t i, const Eigen::Ref<const Eigen::RowVectorXd>& inbound,
                             const PublicData& pub, const Partition& partition,
                             const RnOptions& opts = {})
{
    const auto ii = static_cast<Eigen::Index>(i);
    if (inbound.size() != pub.x.size() || partition.node_count() != static_cast<std::size_t>(pub.x.size()))
        throw ConfigError("inbound row, public data and partition disagree on node count");
    Vector zeta(static_cast<Eigen::Index>(partition.cluster_count()));
    const double flux = pub.gamma(ii) * pub.x(ii);
    for (std::size_t r = 0; r < partition.cluster_count(); ++r) {
        double sum = 0.0;
        for (std::size_t k : partition.members(r)) {
            const auto kk = static_cast<Eigen::Index>(k);
            sum += detail::effective_entry(pub.s(ii), inbound(kk), pub.gamma(ii), pub.x(ii), pub.x(kk), opts);
        }
        zeta(static_cast<Eigen::Index>(r)) = flux * sum;
    }
    return zeta;
}

/// Cluster effective reproduction number: gamma x weighted mean of member LERNs.
inline double cern(const TransmissionNetwork& net, const EpidemicState& state,
                   const Partition& partition, std::size_t q, const RnOptions& opts = {})
{
    detail::check_partition(net, partition);
    if (q >= partition.cluster_count())
        throw ConfigError("cluster index out of range");
    const PublicData pub = public_data(net, state, opts);
    double num = 0.0;
    for (std::size_t i : partition.members(q)) {
        const auto ii = static_cast<Eigen::Index>(i);
        num += pub.gamma(ii) * pub.x(ii) * detail::lern_from(net, pub.s, pub.x, i, opts);
    }
    return num / detail::recovery_flux(pub, partition.members(q));
}

inline std::vector<double> cerns(const TransmissionNetwork& net, const EpidemicState& state,
                                 const Partition& partition, const RnOptions& opts = {})
{
    std::vector<double> out(partition.cluster_count());
    for (std::size_t q = 0; q < out.size(); ++q)
        out[q] = cern(net, state, partition, q, opts);
    return out;
}

/// Divides each column of the summed member rows by the cluster's recovery
/// flux. Shared by the exact matrix and the aggregation protocol.
inline Vector assemble_cluster_row(const std::vector<Vector>& member_rows,
                                   const PublicData& pub, const std::vector<std::size_t>& members)
{
    if (member_rows.empty())
        throw ProtocolError("cannot assemble a cluster row from zero reports");
    const Eigen::Index m = member_rows.front().size();
    const double flux = detail::recovery_flux(pub, members);
    Vector row(m);
    std::vector<double> column(member_rows.size());
    for (Eigen::Index r = 0; r < m; ++r) {
        for (std::size_t k = 0; k < member_rows.size(); ++k) {
            if (member_rows[k].size() != m)
                throw ProtocolError("reports disagree on cluster count");
            column[k] = member_rows[k](r);
        }
        row(r) = detail::order_insensitive_sum(column) / flux;
    }
    return row;
}

/// Cluster distributed ERN matrix; row q sums to cern(q).
inline ClusterRnMatrix cluster_matrix(const TransmissionNetwork& net, const EpidemicState& state,
                                      const Partition& partition, const RnOptions& opts = {})
{
    detail::check_partition(net, partition);
    const PublicData pub = public_data(net, state, opts);
    const auto m = static_cast<Eigen::Index>(partition.cluster_count());
    ClusterRnMatrix out{Matrix(m, m), state.t, false};
    for (std::size_t q = 0; q < partition.cluster_count(); ++q) {
        std::vector<Vector> rows;
        for (std::size_t i : partition.members(q))
            rows.push_back(aggregated_row(i, net.transmission().row(static_cast<Eigen::Index>(i)), pub,
                                          partition, opts));
        out.values.row(static_cast<Eigen::Index>(q)) = assemble_cluster_row(rows, pub, partition.members(q)).transpose();
    }
    return out;
}

/// CERNs of a coarser partition computed from the fine-partition CERNs and
/// their recovery-flux weights. `mapping[q]` is the coarse cluster of fine
/// cluster q.
inline std::vector<double> coarsen(const TransmissionNetwork& net, const EpidemicState& state,
                                   const Partition& fine, const std::vector<std::size_t>& mapping,
                                   const RnOptions& opts = {})
{
    detail::check_partition(net, fine);
    const std::size_t coarse = fine.validate_mapping(mapping);
    const PublicData pub = public_data(net, state, opts);
    const std::vector<double> fine_cerns = cerns(net, state, fine, opts);

    std::vector<double> num(coarse, 0.0);
    std::vector<double> den(coarse, 0.0);
    for (std::size_t q = 0; q < fine.cluster_count(); ++q) {
        const double weight = detail::recovery_flux(pub, fine.members(q));
        num[mapping[q]] += weight * fine_cerns[q];
        den[mapping[q]] += weight;
    }
    for (std::size_t o = 0; o < coarse; ++o)
        num[o] /= den[o];
    return num;
}

} // namespace distrn
