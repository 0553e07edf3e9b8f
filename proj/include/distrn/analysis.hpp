#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "distrn/protocol.hpp"

namespace distrn {

/// One member's contribution to a private cluster entry: its exact aggregated
/// value and, when the value is positive and privatized, the noise law.
struct EntryNoise {
    double value = 0.0;
    std::optional<TruncGaussParams> noise;
};

/// Mean and variance of the private cluster entry (q, r), by linearity over the
/// assembly sum with independent per-authority noise. `members` follows the
/// order of partition.members(q).
inline Moments private_entry_moments(const Partition& partition, std::size_t q, const PublicData& pub,
                                     std::span<const EntryNoise> members)
{
    if (q >= partition.cluster_count())
        throw ConfigError("cluster index out of range");
    const auto& ids = partition.members(q);
    if (members.size() != ids.size())
        throw ConfigError("expected one noise description per cluster member");
    double mean = 0.0;
    double var = 0.0;
    for (const EntryNoise& e : members) {
        if (e.noise) {
            const Moments tg = trunc_gauss_moments(*e.noise);
            mean += tg.mean;
            var += tg.variance;
        } else {
            mean += e.value;
        }
    }
    const double flux = detail::recovery_flux(pub, ids);
    return {mean / flux, var / (flux * flux)};
}

struct MomentMatrices {
    Matrix mean;
    Matrix variance;
};

/// Analytic moments of every private cluster entry produced by `pipeline`.
inline MomentMatrices pipeline_moments(const Pipeline& pipeline)
{
    const Partition& part = pipeline.partition();
    const auto m = static_cast<Eigen::Index>(part.cluster_count());
    MomentMatrices out{Matrix(m, m), Matrix(m, m)};
    const auto& cfg = pipeline.config();
    for (std::size_t q = 0; q < part.cluster_count(); ++q) {
        for (std::size_t r = 0; r < part.cluster_count(); ++r) {
            std::vector<EntryNoise> members;
            for (std::size_t i : part.members(q)) {
                const LocalAuthority& a = pipeline.authorities()[i];
                const double v = a.exact().entries(static_cast<Eigen::Index>(r));
                EntryNoise e{v, std::nullopt};
                if (cfg.privacy_on && a.sigma() && v > 0.0) {
                    const Interval b = detail::bound_for(cfg.privacy.bounds, r);
                    e.noise = TruncGaussParams{v, *a.sigma(), b.lower, b.upper};
                }
                members.push_back(e);
            }
            const Moments mo = private_entry_moments(part, q, pipeline.public_info(), members);
            out.mean(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(r)) = mo.mean;
            out.variance(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(r)) = mo.variance;
        }
    }
    return out;
}

struct AccuracyConfig {
    std::vector<double> eps_grid{1.0};
    std::size_t trials = 100;
    std::size_t sample_every = 1;
    std::uint64_t master_seed = 0;
    /// Privacy settings, reproduction options and clamping; epsilon0 is replaced
    /// by each grid value and privacy is forced on.
    PipelineConfig base;
};

struct AccuracyRow {
    std::size_t epoch = 0;
    double t = 0.0;
    double eps = 0.0;
    std::size_t q = 0;
    std::size_t r = 0;
    double exact = 0.0;
    double mean_private = 0.0;
    double var_private = 0.0;
    double rmse = 0.0;
    double pct_error = 0.0;
};

struct EpsilonSummary {
    double eps = 0.0;
    /// Set when calibration failed for this epsilon; the other fields are then unset.
    std::optional<std::string> error;
    double rmse = 0.0;
    /// RMSE divided by the mean magnitude of the exact entries, in percent.
    double pct_error = 0.0;
    /// RMSE over entries and epochs of each individual trial.
    std::vector<double> trial_rmse;
};

struct AccuracyReport {
    std::vector<AccuracyRow> rows;
    std::vector<EpsilonSummary> summary;
};

/// Runs the private pipeline `trials` times at every sampled epoch for every
/// epsilon in the grid and compares against the exact cluster matrices.
///
/// Trial t at epoch e uses the same seed for every epsilon, so the per-trial
/// RMSE values are paired across the grid. Per-row pct_error divides the
/// entry RMSE by the mean exact magnitude at that epoch.
inline AccuracyReport rmse_sweep(const TransmissionNetwork& net, std::span<const EpidemicState> trajectory,
                                 const Partition& partition, const AccuracyConfig& cfg)
{
    if (trajectory.empty())
        throw ConfigError("accuracy sweep needs a non-empty trajectory");
    if (cfg.trials == 0 || cfg.sample_every == 0)
        throw ConfigError("trials and sample interval must be positive");

    std::vector<std::size_t> epochs;
    for (std::size_t e = 0; e < trajectory.size(); e += cfg.sample_every)
        epochs.push_back(e);

    std::vector<ClusterRnMatrix> exact;
    exact.reserve(epochs.size());
    for (std::size_t e : epochs)
        exact.push_back(cluster_matrix(net, trajectory[e], partition, cfg.base.rn));

    const auto m = static_cast<Eigen::Index>(partition.cluster_count());
    AccuracyReport report;
    for (double eps : cfg.eps_grid) {
        EpsilonSummary summary;
        summary.eps = eps;
        summary.trial_rmse.assign(cfg.trials, 0.0);
        std::vector<AccuracyRow> rows;
        double total_sq = 0.0;
        double total_abs = 0.0;
        try {
            for (std::size_t ei = 0; ei < epochs.size(); ++ei) {
                PipelineConfig pc = cfg.base;
                pc.privacy_on = true;
                pc.privacy.epsilon0 = eps;
                pc.epoch = epochs[ei];
                pc.trace = nullptr;
                const Pipeline pipeline(net, trajectory[epochs[ei]], partition, pc);
                const MomentMatrices moments = pipeline_moments(pipeline);
                const Matrix& ex = exact[ei].values;

                Matrix sq = Matrix::Zero(m, m);
                for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
                    const std::uint64_t seed =
                        Stream::derive(cfg.master_seed, "trial", trial, epochs[ei]).key();
                    const Matrix diff = pipeline.run(seed).matrix.values - ex;
                    const Matrix d2 = diff.cwiseAbs2();
                    sq += d2;
                    summary.trial_rmse[trial] += d2.sum();
                }
                const double mean_abs = ex.cwiseAbs().mean();
                total_sq += sq.sum();
                total_abs += ex.cwiseAbs().sum();
                for (Eigen::Index q = 0; q < m; ++q)
                    for (Eigen::Index r = 0; r < m; ++r) {
                        AccuracyRow row;
                        row.epoch = epochs[ei];
                        row.t = trajectory[epochs[ei]].t;
                        row.eps = eps;
                        row.q = static_cast<std::size_t>(q);
                        row.r = static_cast<std::size_t>(r);
                        row.exact = ex(q, r);
                        row.mean_private = moments.mean(q, r);
                        row.var_private = moments.variance(q, r);
                        row.rmse = std::sqrt(sq(q, r) / static_cast<double>(cfg.trials));
                        row.pct_error = mean_abs > 0.0 ? 100.0 * row.rmse / mean_abs : 0.0;
                        rows.push_back(row);
                    }
            }
        } catch (const CalibrationError& e) {
            summary.error = e.what();
            summary.trial_rmse.clear();
            report.summary.push_back(std::move(summary));
            continue;
        }
        const double cells = static_cast<double>(epochs.size()) * static_cast<double>(m * m);
        for (double& v : summary.trial_rmse)
            v = std::sqrt(v / cells);
        summary.rmse = std::sqrt(total_sq / (cells * static_cast<double>(cfg.trials)));
        summary.pct_error = total_abs > 0.0 ? 100.0 * summary.rmse / (total_abs / cells) : 0.0;
        report.rows.insert(report.rows.end(), rows.begin(), rows.end());
        report.summary.push_back(std::move(summary));
    }
    return report;
}

/// Threshold diagnostics for one node or cluster.
struct ThresholdEntry {
    enum class Scope { Node, Cluster };
    Scope scope = Scope::Node;
    std::size_t id = 0;
    /// Interpolated time at which the reproduction number first crosses 1.
    std::optional<double> first_crossing;
    double peak_time = 0.0;
    double peak_infected = 0.0;
    /// Fraction of informative samples where sign(dx) == sign(rn - 1).
    std::optional<double> agreement;
    std::size_t informative_samples = 0;
};

struct ThresholdReport {
    std::vector<ThresholdEntry> nodes;
    std::vector<ThresholdEntry> clusters;
};

/// Samples with |rn - 1| at or below this are excluded from sign agreement.
inline constexpr double kThresholdDeadBand = 1e-6;

namespace detail {

struct ThresholdTracker {
    ThresholdEntry entry;
    std::optional<double> prev_gap;
    double prev_t = 0.0;
    std::size_t agree = 0;

    void add(double t, double rn, double dx, double infected, bool informative)
    {
        const double gap = rn - 1.0;
        if (!entry.first_crossing && prev_gap && *prev_gap != 0.0 && gap != 0.0 &&
            (*prev_gap > 0.0) != (gap > 0.0))
            entry.first_crossing = prev_t + (t - prev_t) * (*prev_gap / (*prev_gap - gap));
        if (!entry.first_crossing && gap == 0.0 && prev_gap && *prev_gap != 0.0)
            entry.first_crossing = t;
        prev_gap = gap;
        prev_t = t;
        if (infected > entry.peak_infected) {
            entry.peak_infected = infected;
            entry.peak_time = t;
        }
        if (informative && std::abs(gap) > kThresholdDeadBand) {
            ++entry.informative_samples;
            if ((dx > 0.0 && gap > 0.0) || (dx < 0.0 && gap < 0.0))
                ++agree;
        }
    }

    ThresholdEntry finish()
    {
        if (entry.informative_samples > 0)
            entry.agreement = static_cast<double>(agree) / static_cast<double>(entry.informative_samples);
        return entry;
    }
};

} // namespace detail

/// Per node and per cluster: first crossing of the local / cluster effective
/// reproduction number through 1, time of peak infection, and the agreement
/// rate between the growth sign and the threshold. Samples where an involved
/// node's infected fraction sits at or below the floor are not informative.
inline ThresholdReport threshold_report(const TransmissionNetwork& net, std::span<const EpidemicState> trajectory,
                                        const Partition& partition, ModelKind kind, const RnOptions& opts = {})
{
    detail::check_partition(net, partition);
    const std::size_t n = net.size();
    std::vector<detail::ThresholdTracker> nodes(n);
    std::vector<detail::ThresholdTracker> clusters(partition.cluster_count());
    for (std::size_t i = 0; i < n; ++i)
        nodes[i].entry.id = i;
    for (std::size_t q = 0; q < clusters.size(); ++q) {
        clusters[q].entry.scope = ThresholdEntry::Scope::Cluster;
        clusters[q].entry.id = q;
    }

    for (const EpidemicState& st : trajectory) {
        const Vector rn = lerns(net, st, opts);
        const std::vector<double> crn = cerns(net, st, partition, opts);
        const StateDerivative d = derivative(net, st, kind);
        const Vector xf = floored_infections(st, opts);
        std::vector<char> live(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            live[i] = st.x(ii) > 0.0 && st.x(ii) >= xf(ii);
            nodes[i].add(st.t, rn(ii), d.dx(ii), st.x(ii), live[i] != 0);
        }
        for (std::size_t q = 0; q < clusters.size(); ++q) {
            double dx = 0.0;
            double infected = 0.0;
            bool all_live = true;
            for (std::size_t i : partition.members(q)) {
                dx += d.dx(static_cast<Eigen::Index>(i));
                infected += st.x(static_cast<Eigen::Index>(i));
                all_live = all_live && live[i];
            }
            clusters[q].add(st.t, crn[q], dx, infected, all_live);
        }
    }

    ThresholdReport out;
    for (auto& t : nodes)
        out.nodes.push_back(t.finish());
    for (auto& t : clusters)
        out.clusters.push_back(t.finish());
    return out;
}

} // namespace distrn
