#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "distrn/privacy.hpp"
#include "distrn/reproduction.hpp"
#include "distrn/rng.hpp"

namespace distrn {

enum class Role { CentralAuthority, LocalAuthority, Shuffler, ClusterAggregator, DataCenter };

inline const char* to_string(Role role) noexcept
{
    switch (role) {
    case Role::CentralAuthority: return "central_authority";
    case Role::LocalAuthority: return "local_authority";
    case Role::Shuffler: return "shuffler";
    case Role::ClusterAggregator: return "cluster_aggregator";
    case Role::DataCenter: return "data_center";
    }
    return "?";
}

/// One actor: its role, its index within the role, and for cluster-bound
/// roles the cluster it serves.
struct RoleConfig {
    Role role = Role::CentralAuthority;
    std::size_t id = 0;
    std::uint64_t seed = 0;
    std::optional<std::size_t> cluster;

    [[nodiscard]] std::string address() const { return std::string(to_string(role)) + ":" + std::to_string(id); }
};

/// Local aggregated ERN vector of one authority. The sender id is erased by
/// the shuffler.
struct LocalAggVector {
    std::optional<std::size_t> authority;
    std::uint64_t epoch = 0;
    Vector entries;
    bool is_private = false;
};

namespace msg {

struct Request {
    std::shared_ptr<const Partition> partition;
    std::uint64_t epoch = 0;
    std::shared_ptr<const PublicData> public_data;
};

struct Report {
    LocalAggVector vector;
};

struct ShuffledBatch {
    std::size_t cluster = 0;
    std::vector<LocalAggVector> vectors;
};

struct ClusterVector {
    std::size_t cluster = 0;
    Vector values;
};

struct MatrixResult {
    ClusterRnMatrix matrix;
};

} // namespace msg

using ProtocolMessage =
    std::variant<msg::Request, msg::Report, msg::ShuffledBatch, msg::ClusterVector, msg::MatrixResult>;

namespace detail {

struct Fnv1a {
    std::uint64_t h = 0xcbf29ce484222325ULL;

    void bytes(const void* p, std::size_t n)
    {
        const auto* c = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= c[i];
            h *= 0x100000001b3ULL;
        }
    }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void f64(double v)
    {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        u64(bits);
    }
    void vec(const Vector& v)
    {
        u64(static_cast<std::uint64_t>(v.size()));
        for (Eigen::Index i = 0; i < v.size(); ++i)
            f64(v(i));
    }
};

} // namespace detail

/// 64-bit FNV-1a digest of a message payload, as 16 hex digits.
inline std::string payload_digest(const ProtocolMessage& message)
{
    detail::Fnv1a f;
    f.u64(message.index());
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, msg::Request>) {
                f.u64(m.epoch);
                for (std::size_t c : m.partition->assignment())
                    f.u64(c);
                f.vec(m.public_data->gamma);
                f.vec(m.public_data->s);
                f.vec(m.public_data->x);
            } else if constexpr (std::is_same_v<T, msg::Report>) {
                f.u64(m.vector.epoch);
                f.vec(m.vector.entries);
            } else if constexpr (std::is_same_v<T, msg::ShuffledBatch>) {
                f.u64(m.cluster);
                for (const auto& v : m.vectors)
                    f.vec(v.entries);
            } else if constexpr (std::is_same_v<T, msg::ClusterVector>) {
                f.u64(m.cluster);
                f.vec(m.values);
            } else {
                for (Eigen::Index i = 0; i < m.matrix.values.size(); ++i)
                    f.f64(m.matrix.values.data()[i]);
            }
        },
        message);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(f.h));
    return buf;
}

struct Address {
    Role role = Role::CentralAuthority;
    std::size_t id = 0;

    auto operator<=>(const Address&) const = default;
    [[nodiscard]] std::string str() const { return std::string(to_string(role)) + ":" + std::to_string(id); }
};

struct Envelope {
    int step = 0;
    Address from;
    Address to;
    ProtocolMessage payload;
};

/// Ordered per-edge queues with step barriers.
///
/// Messages are accepted only in the order Request (step 1), Report (step 5),
/// ShuffledBatch (step 6), ClusterVector and MatrixResult (step 7), each
/// between the roles the aggregation protocol prescribes. Steps advance
/// monotonically; anything else is rejected with ProtocolError. Every accepted
/// message is optionally traced as one JSON line.
class MessageBus {
public:
    explicit MessageBus(std::ostream* trace = nullptr) : trace_(trace) {}

    void advance(int step)
    {
        if (step <= step_ || step > 7)
            throw ProtocolError("protocol step " + std::to_string(step) + " cannot follow step " +
                                std::to_string(step_));
        step_ = step;
    }

    [[nodiscard]] int step() const noexcept { return step_; }

    void send(Address from, Address to, ProtocolMessage payload)
    {
        check(from, to, payload);
        if (trace_ != nullptr) {
            nlohmann::json line{{"step", step_},
                                {"from", from.str()},
                                {"to", to.str()},
                                {"payload_digest", payload_digest(payload)}};
            *trace_ << line.dump() << '\n';
        }
        queues_[{from, to}].push_back({seq_++, Envelope{step_, from, to, std::move(payload)}});
    }

    /// Drains every queue ending at `to`, in arrival order.
    std::vector<Envelope> receive(Address to)
    {
        std::vector<std::pair<std::uint64_t, Envelope>> pending;
        for (auto& [edge, queue] : queues_) {
            if (edge.second != to)
                continue;
            while (!queue.empty()) {
                pending.push_back(std::move(queue.front()));
                queue.pop_front();
            }
        }
        std::sort(pending.begin(), pending.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<Envelope> out;
        out.reserve(pending.size());
        for (auto& p : pending)
            out.push_back(std::move(p.second));
        return out;
    }

private:
    void check(const Address& from, const Address& to, const ProtocolMessage& payload) const
    {
        struct Rule {
            int step;
            std::size_t index;
            Role from;
            Role to;
        };
        static constexpr Rule rules[] = {
            {1, 0, Role::CentralAuthority, Role::LocalAuthority},
            {5, 1, Role::LocalAuthority, Role::Shuffler},
            {6, 2, Role::Shuffler, Role::ClusterAggregator},
            {7, 3, Role::ClusterAggregator, Role::DataCenter},
            {7, 4, Role::DataCenter, Role::CentralAuthority},
        };
        for (const Rule& r : rules)
            if (r.index == payload.index()) {
                if (r.step != step_ || r.from != from.role || r.to != to.role)
                    throw ProtocolError("message type " + std::to_string(payload.index()) + " from " +
                                        from.str() + " to " + to.str() + " not allowed at step " +
                                        std::to_string(step_));
                return;
            }
    }

    std::ostream* trace_;
    int step_ = 0;
    std::uint64_t seq_ = 0;
    std::map<std::pair<Address, Address>, std::deque<std::pair<std::uint64_t, Envelope>>> queues_;
};

/// Step 3 for node i: exact local aggregated ERN vector. Reads only row i of
/// the transmission matrix plus public data.
inline LocalAggVector step3_preaggregate(std::size_t i, const Eigen::Ref<const Eigen::RowVectorXd>& inbound,
                                         const PublicData& pub, const Partition& partition,
                                         const RnOptions& opts = {}, std::uint64_t epoch = 0)
{
    return LocalAggVector{i, epoch, aggregated_row(i, inbound, pub, partition, opts), false};
}

inline LocalAggVector step3_preaggregate(const TransmissionNetwork& net, const EpidemicState& state,
                                         const Partition& partition, std::size_t i,
                                         const RnOptions& opts = {})
{
    if (i >= net.size())
        throw ConfigError("node index out of range");
    return step3_preaggregate(i, net.transmission().row(static_cast<Eigen::Index>(i)),
                              public_data(net, state, opts), partition, opts);
}

/// Step 6 for cluster q: order-insensitive column sums of the anonymized batch
/// divided by the cluster's recovery flux sum gamma_k x_k.
inline Vector step6_assemble(const std::vector<LocalAggVector>& batch, const Partition& partition,
                             const PublicData& pub, std::size_t q)
{
    if (q >= partition.cluster_count())
        throw ConfigError("cluster index out of range");
    if (batch.size() != partition.members(q).size())
        throw ProtocolError("cluster " + std::to_string(q) + " expected " +
                            std::to_string(partition.members(q).size()) + " reports, got " +
                            std::to_string(batch.size()));
    std::vector<Vector> rows;
    rows.reserve(batch.size());
    for (const auto& v : batch)
        rows.push_back(v.entries);
    return assemble_cluster_row(rows, pub, partition.members(q));
}

struct PipelineConfig {
    bool privacy_on = true;
    PrivacySpec privacy;
    RnOptions rn;
    /// Clamp positive aggregated entries into the privacy bounds before
    /// randomizing; without it out-of-range entries are an error.
    bool clamp_reports = true;
    std::uint64_t epoch = 0;
    /// When set, actors within a step are processed in a random order drawn
    /// from this seed.
    std::optional<std::uint64_t> schedule_seed;
    std::ostream* trace = nullptr;
    /// Authorities that never report (fault injection).
    std::vector<std::size_t> withheld_reports;
};

struct PipelineResult {
    ClusterRnMatrix matrix;
    /// Noise scale per authority; empty when the authority had nothing to privatize
    /// or privacy is off.
    std::vector<std::optional<double>> authority_sigma;
    /// Shuffle-amplified epsilon per cluster, when the amplification bound applies.
    std::vector<std::optional<double>> amplified_epsilon;
};

/// Memoizes sigma calibration by active-entry pattern.
class CalibrationCache {
public:
    CalibrationCache(double epsilon0, double k, std::vector<Interval> bounds)
        : epsilon0_(epsilon0), k_(k), bounds_(std::move(bounds))
    {
    }

    const Calibration& get(const std::vector<bool>& active)
    {
        auto it = cache_.find(active);
        if (it == cache_.end())
            it = cache_.emplace(active, calibrate_sigma(epsilon0_, k_, bounds_, active)).first;
        return it->second;
    }

private:
    double epsilon0_;
    double k_;
    std::vector<Interval> bounds_;
    std::map<std::vector<bool>, Calibration> cache_;
};

/// Local authority of one node. Holds the node's private inbound transmission
/// row; everything else it learns from the request.
class LocalAuthority {
public:
    LocalAuthority(std::size_t node, Eigen::RowVectorXd inbound) : node_(node), inbound_(std::move(inbound)) {}

    [[nodiscard]] std::size_t node() const noexcept { return node_; }

    /// Steps 2-3 plus the clamp and noise-scale choice that step 4 needs.
    void prepare(const msg::Request& request, const PipelineConfig& config, CalibrationCache* calibration)
    {
        exact_ = step3_preaggregate(node_, inbound_, *request.public_data, *request.partition, config.rn,
                                    request.epoch);
        sigma_.reset();
        if (!config.privacy_on)
            return;
        const auto& bounds = config.privacy.bounds;
        detail::check_bounds(bounds, static_cast<std::size_t>(exact_.entries.size()));
        std::vector<bool> active(static_cast<std::size_t>(exact_.entries.size()));
        for (Eigen::Index r = 0; r < exact_.entries.size(); ++r) {
            double& v = exact_.entries(r);
            if (v > 0.0 && config.clamp_reports) {
                const Interval b = detail::bound_for(bounds, static_cast<std::size_t>(r));
                v = std::clamp(v, b.lower, b.upper);
            }
            active[static_cast<std::size_t>(r)] = v > 0.0;
        }
        if (std::find(active.begin(), active.end(), true) == active.end())
            return;
        sigma_ = config.privacy.sigma_override ? *config.privacy.sigma_override
                                               : calibration->get(active).sigma;
    }

    /// Step 4: privatized report, drawn from `stream`.
    [[nodiscard]] LocalAggVector report(const PipelineConfig& config, Stream& stream) const
    {
        if (!config.privacy_on || !sigma_)
            return LocalAggVector{node_, exact_.epoch, exact_.entries, config.privacy_on};
        return LocalAggVector{node_, exact_.epoch,
                              bounded_gaussian_randomize(exact_.entries, config.privacy.bounds, *sigma_, stream),
                              true};
    }

    [[nodiscard]] const LocalAggVector& exact() const noexcept { return exact_; }
    [[nodiscard]] std::optional<double> sigma() const noexcept { return sigma_; }

private:
    std::size_t node_;
    Eigen::RowVectorXd inbound_;
    LocalAggVector exact_;
    std::optional<double> sigma_;
};

/// Aggregation protocol over one epoch: local authorities pre-aggregate and
/// privatize, per-cluster shufflers anonymize and permute, per-cluster
/// aggregators assemble rows, and the data center stacks the m×m matrix.
///
/// Construction runs steps 2-3 and calibration once; run() executes the
/// randomized steps with streams derived from a master seed, so repeated runs
/// with different seeds reuse the calibration.
class Pipeline {
public:
    Pipeline(const TransmissionNetwork& net, const EpidemicState& state, Partition partition,
             PipelineConfig config)
        : config_(std::move(config)),
          partition_(std::make_shared<const Partition>(std::move(partition))),
          public_(std::make_shared<const PublicData>(public_data(net, state, config_.rn)))
    {
        detail::check_partition(net, *partition_);
        if (config_.privacy_on) {
            const auto& p = config_.privacy;
            if (!p.sigma_override && !(p.epsilon0 > 0.0))
                throw ConfigError("privacy.epsilon0 must be positive");
            if (p.sigma_override && !(*p.sigma_override > 0.0))
                throw ConfigError("privacy.sigma must be positive");
            if (!(p.delta > 0.0 && p.delta < 1.0))
                throw ConfigError("privacy.delta must lie in (0,1)");
        }
        CalibrationCache cache(config_.privacy.epsilon0, config_.privacy.k, config_.privacy.bounds);
        const msg::Request request{partition_, config_.epoch, public_};
        authorities_.reserve(net.size());
        for (std::size_t i = 0; i < net.size(); ++i) {
            authorities_.emplace_back(i, net.transmission().row(static_cast<Eigen::Index>(i)));
            authorities_.back().prepare(request, config_, &cache);
        }
    }

    [[nodiscard]] const Partition& partition() const noexcept { return *partition_; }
    [[nodiscard]] const PublicData& public_info() const noexcept { return *public_; }
    [[nodiscard]] const std::vector<LocalAuthority>& authorities() const noexcept { return authorities_; }
    [[nodiscard]] const PipelineConfig& config() const noexcept { return config_; }

    /// Every actor of one run: a central authority, one local authority per
    /// node, one shuffler and one aggregator per cluster, and the data center.
    /// Seeds are the keys of the streams run() draws from.
    [[nodiscard]] std::vector<RoleConfig> roles(std::uint64_t master_seed) const
    {
        const std::uint64_t epoch = config_.epoch;
        auto key = [&](Role role, std::size_t id) {
            return Stream::derive(master_seed, to_string(role), id, epoch).key();
        };
        std::vector<RoleConfig> out;
        out.push_back({Role::CentralAuthority, 0, key(Role::CentralAuthority, 0), std::nullopt});
        for (std::size_t i = 0; i < authorities_.size(); ++i)
            out.push_back({Role::LocalAuthority, i, key(Role::LocalAuthority, i), partition_->cluster_of(i)});
        for (std::size_t q = 0; q < partition_->cluster_count(); ++q) {
            out.push_back({Role::Shuffler, q, key(Role::Shuffler, q), q});
            out.push_back({Role::ClusterAggregator, q, key(Role::ClusterAggregator, q), q});
        }
        out.push_back({Role::DataCenter, 0, key(Role::DataCenter, 0), std::nullopt});
        return out;
    }

    [[nodiscard]] PipelineResult run(std::uint64_t master_seed) const
    {
        const std::size_t n = authorities_.size();
        const std::size_t m = partition_->cluster_count();
        const std::uint64_t epoch = config_.epoch;
        MessageBus bus(config_.trace);
        const Address central{Role::CentralAuthority, 0};
        const Address data_center{Role::DataCenter, 0};

        std::optional<Stream> schedule;
        if (config_.schedule_seed)
            schedule = Stream::derive(*config_.schedule_seed, "schedule", 0, epoch);
        auto order = [&](std::size_t count) {
            std::vector<std::size_t> idx(count);
            for (std::size_t i = 0; i < count; ++i)
                idx[i] = i;
            return schedule ? shuffle(std::move(idx), *schedule) : idx;
        };

        // Step 1: request with partition and public data.
        bus.advance(1);
        for (std::size_t i = 0; i < n; ++i)
            bus.send(central, {Role::LocalAuthority, i}, msg::Request{partition_, epoch, public_});

        // Steps 2-4: each authority answers with its privatized vector.
        bus.advance(5);
        for (std::size_t i : order(n)) {
            const Address self{Role::LocalAuthority, i};
            for (Envelope& env : bus.receive(self)) {
                if (!std::holds_alternative<msg::Request>(env.payload))
                    throw ProtocolError("local authority expected a request");
                if (std::find(config_.withheld_reports.begin(), config_.withheld_reports.end(), i) !=
                    config_.withheld_reports.end())
                    continue;
                Stream stream = Stream::derive(master_seed, to_string(Role::LocalAuthority), i, epoch);
                bus.send(self, {Role::Shuffler, partition_->cluster_of(i)},
                         msg::Report{authorities_[i].report(config_, stream)});
            }
        }

        // Step 5: shufflers anonymize and permute.
        bus.advance(6);
        for (std::size_t q : order(m)) {
            const Address self{Role::Shuffler, q};
            std::vector<LocalAggVector> batch;
            std::vector<char> seen(n, 0);
            for (Envelope& env : bus.receive(self)) {
                auto& report = std::get<msg::Report>(env.payload).vector;
                if (!report.authority || partition_->cluster_of(*report.authority) != q)
                    throw ProtocolError("shuffler " + std::to_string(q) + " got a foreign report");
                seen[*report.authority] = 1;
                report.authority.reset();
                batch.push_back(std::move(report));
            }
            for (std::size_t i : partition_->members(q))
                if (!seen[i])
                    throw ProtocolError("missing report from local authority " + std::to_string(i) +
                                        " in cluster " + std::to_string(q));
            Stream stream = Stream::derive(master_seed, to_string(Role::Shuffler), q, epoch);
            bus.send(self, {Role::ClusterAggregator, q}, msg::ShuffledBatch{q, shuffle(std::move(batch), stream)});
        }

        // Step 6-7: aggregators assemble rows for the data center.
        bus.advance(7);
        for (std::size_t q : order(m)) {
            const Address self{Role::ClusterAggregator, q};
            for (Envelope& env : bus.receive(self)) {
                const auto& batch = std::get<msg::ShuffledBatch>(env.payload);
                bus.send(self, data_center,
                         msg::ClusterVector{q, step6_assemble(batch.vectors, *partition_, *public_, q)});
            }
        }

        ClusterRnMatrix matrix{Matrix::Constant(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m),
                                                std::numeric_limits<double>::quiet_NaN()),
                               public_->t, config_.privacy_on};
        std::vector<char> filled(m, 0);
        for (Envelope& env : bus.receive(data_center)) {
            const auto& row = std::get<msg::ClusterVector>(env.payload);
            filled[row.cluster] = 1;
            matrix.values.row(static_cast<Eigen::Index>(row.cluster)) = row.values.transpose();
        }
        if (std::find(filled.begin(), filled.end(), 0) != filled.end())
            throw ProtocolError("data center is missing a cluster vector");
        bus.send(data_center, central, msg::MatrixResult{matrix});

        PipelineResult result;
        for (Envelope& env : bus.receive(central))
            result.matrix = std::get<msg::MatrixResult>(env.payload).matrix;
        result.authority_sigma.reserve(n);
        for (const auto& a : authorities_)
            result.authority_sigma.push_back(a.sigma());
        result.amplified_epsilon.resize(m);
        if (config_.privacy_on && !config_.privacy.sigma_override)
            for (std::size_t q = 0; q < m; ++q)
                if (amplification_applies(config_.privacy.epsilon0, config_.privacy.delta,
                                          partition_->members(q).size()))
                    result.amplified_epsilon[q] = amplified_epsilon(
                        config_.privacy.epsilon0, config_.privacy.delta, partition_->members(q).size());
        return result;
    }

private:
    PipelineConfig config_;
    std::shared_ptr<const Partition> partition_;
    std::shared_ptr<const PublicData> public_;
    std::vector<LocalAuthority> authorities_;
};

/// Runs the full aggregation protocol once. With privacy off the result equals
/// cluster_matrix().
inline PipelineResult run_pipeline(const TransmissionNetwork& net, const EpidemicState& state,
                                   const Partition& partition, const PipelineConfig& config,
                                   std::uint64_t master_seed)
{
    return Pipeline(net, state, partition, config).run(master_seed);
}

} // namespace distrn
