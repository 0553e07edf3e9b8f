#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "distrn/csv.hpp"
#include "distrn/epidemic.hpp"
#include "distrn/privacy.hpp"
#include "distrn/protocol.hpp"
#include "distrn/reproduction.hpp"
#include "distrn/rng.hpp"

namespace distrn {

struct InlineNetwork {
    std::vector<std::vector<double>> transmission;
    std::vector<double> recovery;
    bool operator==(const InlineNetwork&) const = default;
};

struct CsvNetwork {
    std::string transmission; // matrix CSV
    std::string recovery;     // vector CSV
    bool operator==(const CsvNetwork&) const = default;
};

struct RandomNetwork {
    std::size_t nodes = 0;
    double density = 0.3;
    Interval beta{0.05, 0.3};
    Interval gamma{0.1, 0.3};
    std::uint64_t seed = 0;
    bool operator==(const RandomNetwork&) const = default;
};

using NetworkSource = std::variant<InlineNetwork, CsvNetwork, RandomNetwork>;

inline constexpr int kGeneratorAttempts = 100;

/// Draws β with the given off-diagonal edge density (self-loops always
/// present) and γ uniformly in their ranges, reseeding until the graph is
/// strongly connected.
inline TransmissionNetwork generate_network(const RandomNetwork& spec)
{
    if (spec.nodes == 0)
        throw ConfigError("network.random.nodes: must be at least 1");
    if (!(spec.density >= 0.0 && spec.density <= 1.0))
        throw ConfigError("network.random.density: must lie in [0,1]");
    if (!(spec.beta.lower >= 0.0 && spec.beta.upper <= 1.0 && spec.beta.lower <= spec.beta.upper))
        throw ConfigError("network.random.beta: range must lie in [0,1]");
    if (!(spec.gamma.lower > 0.0 && spec.gamma.upper <= 1.0 && spec.gamma.lower <= spec.gamma.upper))
        throw ConfigError("network.random.gamma: range must lie in (0,1]");
    const auto n = static_cast<Eigen::Index>(spec.nodes);
    for (int attempt = 0; attempt < kGeneratorAttempts; ++attempt) {
        Stream rng = Stream::derive(spec.seed, "generator", static_cast<std::uint64_t>(attempt));
        auto draw = [&](Interval r) { return r.lower + (r.upper - r.lower) * (1.0 - rng.uniform_open_closed()); };
        Matrix beta = Matrix::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                if (i == j || rng.uniform_open_closed() <= spec.density)
                    beta(i, j) = draw(spec.beta);
        Vector gamma(n);
        for (Eigen::Index i = 0; i < n; ++i)
            gamma(i) = draw(spec.gamma);
        if (strongly_connected(beta) && (beta.array() > 0.0).any())
            return TransmissionNetwork(std::move(beta), std::move(gamma));
    }
    throw ConfigError("network.random: no strongly connected graph after " +
                      std::to_string(kGeneratorAttempts) + " attempts");
}

struct Scenario {
    NetworkSource network;
    /// Either one entry per node or a single value applied to every node.
    std::vector<double> initial_infected{0.01};
    ModelKind model = ModelKind::SIR;
    double dt = 0.1;
    std::size_t steps = 100;
    std::size_t sample_every = 1;
    /// Clusters as lists of node indices; empty means one cluster per node.
    std::vector<std::vector<std::size_t>> partition;

    bool privacy_enabled = true;
    double epsilon0 = 1.0;
    /// When set, epsilon0 is derived so that the smallest cluster's shuffled
    /// release meets this central epsilon.
    std::optional<double> target_epsilon;
    double delta = 0.01;
    double k = 1e-5;
    Interval bounds{0.0, 14.0};
    std::optional<double> sigma;

    bool clamp = true;
    Interval clamp_range{0.0, 14.0};
    double infection_floor = 1e-9;
    std::vector<double> populations;

    std::vector<double> accuracy_eps{1.0, 2.0, 3.0};
    std::size_t accuracy_trials = 100;

    std::string output_dir = "out";
    std::uint64_t seed = 0;

    bool operator==(const Scenario&) const = default;
};

// --- building runtime objects ------------------------------------------------

inline TransmissionNetwork build_network(const Scenario& sc)
{
    return std::visit(
        [](const auto& src) -> TransmissionNetwork {
            using T = std::decay_t<decltype(src)>;
            if constexpr (std::is_same_v<T, InlineNetwork>) {
                const auto n = static_cast<Eigen::Index>(src.transmission.size());
                Matrix beta(n, n);
                for (Eigen::Index i = 0; i < n; ++i) {
                    const auto& row = src.transmission[static_cast<std::size_t>(i)];
                    if (static_cast<Eigen::Index>(row.size()) != n)
                        throw ConfigError("network.transmission[" + std::to_string(i) + "]: expected " +
                                          std::to_string(n) + " entries");
                    for (Eigen::Index j = 0; j < n; ++j)
                        beta(i, j) = row[static_cast<std::size_t>(j)];
                }
                Vector gamma = Eigen::Map<const Vector>(src.recovery.data(),
                                                        static_cast<Eigen::Index>(src.recovery.size()));
                return TransmissionNetwork(std::move(beta), std::move(gamma));
            } else if constexpr (std::is_same_v<T, CsvNetwork>) {
                auto bin = csv::open_input(src.transmission);
                auto gin = csv::open_input(src.recovery);
                return TransmissionNetwork(csv::read_matrix(bin, src.transmission),
                                           csv::read_vector(gin, src.recovery));
            } else {
                return generate_network(src);
            }
        },
        sc.network);
}

inline EpidemicState build_initial_state(const Scenario& sc, std::size_t n)
{
    Vector x(static_cast<Eigen::Index>(n));
    if (sc.initial_infected.size() == 1)
        x.setConstant(sc.initial_infected.front());
    else if (sc.initial_infected.size() == n)
        x = Eigen::Map<const Vector>(sc.initial_infected.data(), static_cast<Eigen::Index>(n));
    else
        throw ConfigError("initial_infected: expected 1 or " + std::to_string(n) + " entries, got " +
                          std::to_string(sc.initial_infected.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (!(x(i) >= 0.0 && x(i) <= 1.0))
            throw ConfigError("initial_infected[" + std::to_string(i) + "]: must lie in [0,1]");
    return EpidemicState::from_infected(std::move(x));
}

inline Partition build_partition(const Scenario& sc, std::size_t n)
{
    if (sc.partition.empty())
        return Partition::singletons(n);
    try {
        return Partition::from_clusters(n, sc.partition);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("partition: ") + e.what());
    }
}

inline RnOptions build_rn_options(const Scenario& sc)
{
    RnOptions o;
    o.infection_floor = sc.infection_floor;
    if (!sc.populations.empty())
        o.populations = Eigen::Map<const Vector>(sc.populations.data(),
                                                 static_cast<Eigen::Index>(sc.populations.size()));
    o.clamp = sc.clamp;
    o.clamp_lower = sc.clamp_range.lower;
    o.clamp_upper = sc.clamp_range.upper;
    return o;
}

/// Largest eps0 whose shuffle-amplified epsilon at `cluster_size` stays at or
/// below `target`. Falls back to eps0 = target when amplification never
/// applies.
inline double epsilon0_for_target(double target, double delta, std::size_t cluster_size)
{
    if (!(target > 0.0))
        throw ConfigError("privacy.target_epsilon: must be positive");
    const double arg = static_cast<double>(cluster_size) / (8.0 * std::log(2.0 / delta)) - 1.0;
    if (!(arg > 1.0))
        return target;
    const double cap = std::log(arg);
    if (amplified_epsilon(cap, delta, cluster_size) <= target)
        return std::max(cap, target);
    double lo = 0.0;
    double hi = cap;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (amplified_epsilon(mid, delta, cluster_size) <= target ? lo : hi) = mid;
    }
    return lo;
}

inline PipelineConfig build_pipeline_config(const Scenario& sc, const Partition& partition)
{
    PipelineConfig cfg;
    cfg.privacy_on = sc.privacy_enabled;
    cfg.privacy.delta = sc.delta;
    cfg.privacy.k = sc.k;
    cfg.privacy.bounds = {sc.bounds};
    cfg.privacy.sigma_override = sc.sigma;
    cfg.privacy.epsilon0 = sc.epsilon0;
    if (sc.target_epsilon) {
        std::size_t smallest = partition.node_count();
        for (std::size_t q = 0; q < partition.cluster_count(); ++q)
            smallest = std::min(smallest, partition.members(q).size());
        cfg.privacy.epsilon0 = epsilon0_for_target(*sc.target_epsilon, sc.delta, smallest);
    }
    cfg.rn = build_rn_options(sc);
    return cfg;
}

// --- JSON ----------------------------------------------------------------------

namespace detail {

using nlohmann::json;

inline const json* find(const json& obj, const char* key)
{
    auto it = obj.find(key);
    return it == obj.end() || it->is_null() ? nullptr : &*it;
}

inline double get_number(const json& v, const std::string& path)
{
    if (!v.is_number())
        throw ConfigError(path + ": expected a number");
    return v.get<double>();
}

inline std::uint64_t get_count(const json& v, const std::string& path)
{
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
        throw ConfigError(path + ": expected a non-negative integer");
    return v.get<std::uint64_t>();
}

inline bool get_bool(const json& v, const std::string& path)
{
    if (!v.is_boolean())
        throw ConfigError(path + ": expected true or false");
    return v.get<bool>();
}

inline std::string get_string(const json& v, const std::string& path)
{
    if (!v.is_string())
        throw ConfigError(path + ": expected a string");
    return v.get<std::string>();
}

inline std::vector<double> get_numbers(const json& v, const std::string& path)
{
    if (v.is_number())
        return {v.get<double>()};
    if (!v.is_array())
        throw ConfigError(path + ": expected a number or an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(get_number(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

inline Interval get_interval(const json& v, const std::string& path)
{
    if (!v.is_array() || v.size() != 2)
        throw ConfigError(path + ": expected [lower, upper]");
    Interval r{get_number(v[0], path + "[0]"), get_number(v[1], path + "[1]")};
    if (!(r.lower <= r.upper))
        throw ConfigError(path + ": lower exceeds upper");
    return r;
}

inline void reject_unknown(const json& obj, std::initializer_list<const char*> keys, const std::string& path)
{
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : keys)
            known = known || it.key() == k;
        if (!known)
            throw ConfigError((path.empty() ? "" : path + ".") + it.key() + ": unknown key");
    }
}

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base, const std::string& field)
{
    std::filesystem::path path(p);
    if (path.is_relative())
        path = base / path;
    path = path.lexically_normal();
    if (!std::filesystem::is_regular_file(path))
        throw ConfigError(field + ": file '" + path.string() + "' does not exist");
    return path.string();
}

inline NetworkSource parse_network(const json& v, const std::filesystem::path& base)
{
    if (!v.is_object())
        throw ConfigError("network: expected an object");
    if (const json* r = find(v, "random")) {
        reject_unknown(v, {"random"}, "network");
        if (!r->is_object())
            throw ConfigError("network.random: expected an object");
        reject_unknown(*r, {"nodes", "density", "beta", "gamma", "seed"}, "network.random");
        RandomNetwork g;
        const json* nodes = find(*r, "nodes");
        if (!nodes)
            throw ConfigError("network.random.nodes: required");
        g.nodes = get_count(*nodes, "network.random.nodes");
        if (const json* d = find(*r, "density"))
            g.density = get_number(*d, "network.random.density");
        if (const json* b = find(*r, "beta"))
            g.beta = get_interval(*b, "network.random.beta");
        if (const json* c = find(*r, "gamma"))
            g.gamma = get_interval(*c, "network.random.gamma");
        if (const json* s = find(*r, "seed"))
            g.seed = get_count(*s, "network.random.seed");
        return g;
    }
    reject_unknown(v, {"transmission", "recovery"}, "network");
    const json* b = find(v, "transmission");
    const json* g = find(v, "recovery");
    if (!b || !g)
        throw ConfigError("network: needs 'transmission' and 'recovery', or 'random'");
    if (b->is_string() || g->is_string())
        return CsvNetwork{resolve_path(get_string(*b, "network.transmission"), base, "network.transmission"),
                          resolve_path(get_string(*g, "network.recovery"), base, "network.recovery")};
    InlineNetwork net;
    if (!b->is_array())
        throw ConfigError("network.transmission: expected a matrix or a CSV path");
    for (std::size_t i = 0; i < b->size(); ++i) {
        const std::string path = "network.transmission[" + std::to_string(i) + "]";
        if (!(*b)[i].is_array())
            throw ConfigError(path + ": expected an array");
        net.transmission.push_back(get_numbers((*b)[i], path));
    }
    net.recovery = get_numbers(*g, "network.recovery");
    return net;
}

} // namespace detail

/// Parses and validates a scenario. Relative CSV paths resolve against
/// `base_dir`. The network is built once so that every structural error
/// surfaces here.
inline Scenario parse_scenario(const nlohmann::json& root, const std::filesystem::path& base_dir = ".")
{
    using namespace detail;
    if (!root.is_object())
        throw ConfigError("config: top level must be an object");
    reject_unknown(root,
                   {"network", "initial_infected", "model", "dt", "steps", "sample_every", "partition", "privacy",
                    "rn", "accuracy", "output_dir", "seed"},
                   "");
    Scenario sc;
    const json* net = find(root, "network");
    if (!net)
        throw ConfigError("network: required");
    sc.network = parse_network(*net, base_dir);

    if (const json* v = find(root, "initial_infected"))
        sc.initial_infected = get_numbers(*v, "initial_infected");
    if (const json* v = find(root, "model")) {
        try {
            sc.model = model_kind_from_string(get_string(*v, "model"));
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("model: ") + e.what());
        }
    }
    if (const json* v = find(root, "dt"))
        sc.dt = get_number(*v, "dt");
    if (!(sc.dt > 0.0))
        throw ConfigError("dt: must be positive");
    if (const json* v = find(root, "steps"))
        sc.steps = get_count(*v, "steps");
    if (const json* v = find(root, "sample_every"))
        sc.sample_every = get_count(*v, "sample_every");
    if (sc.sample_every == 0)
        throw ConfigError("sample_every: must be at least 1");

    if (const json* v = find(root, "partition")) {
        if (!v->is_array())
            throw ConfigError("partition: expected an array of clusters");
        for (std::size_t q = 0; q < v->size(); ++q) {
            const std::string path = "partition[" + std::to_string(q) + "]";
            if (!(*v)[q].is_array())
                throw ConfigError(path + ": expected an array of node indices");
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < (*v)[q].size(); ++i)
                members.push_back(get_count((*v)[q][i], path + "[" + std::to_string(i) + "]"));
            sc.partition.push_back(std::move(members));
        }
    }

    if (const json* p = find(root, "privacy")) {
        if (!p->is_object())
            throw ConfigError("privacy: expected an object");
        reject_unknown(*p, {"enabled", "epsilon0", "target_epsilon", "delta", "k", "bounds", "sigma"}, "privacy");
        if (const json* v = find(*p, "enabled"))
            sc.privacy_enabled = get_bool(*v, "privacy.enabled");
        if (const json* v = find(*p, "epsilon0"))
            sc.epsilon0 = get_number(*v, "privacy.epsilon0");
        if (const json* v = find(*p, "target_epsilon"))
            sc.target_epsilon = get_number(*v, "privacy.target_epsilon");
        if (const json* v = find(*p, "delta"))
            sc.delta = get_number(*v, "privacy.delta");
        if (const json* v = find(*p, "k"))
            sc.k = get_number(*v, "privacy.k");
        if (const json* v = find(*p, "bounds"))
            sc.bounds = get_interval(*v, "privacy.bounds");
        if (const json* v = find(*p, "sigma"))
            sc.sigma = get_number(*v, "privacy.sigma");
    }
    if (!(sc.epsilon0 > 0.0))
        throw ConfigError("privacy.epsilon0: must be positive");
    if (sc.target_epsilon && !(*sc.target_epsilon > 0.0))
        throw ConfigError("privacy.target_epsilon: must be positive");
    if (!(sc.delta > 0.0 && sc.delta < 1.0))
        throw ConfigError("privacy.delta: must lie in (0,1)");
    if (!(sc.k > 0.0))
        throw ConfigError("privacy.k: must be positive");
    if (!(sc.bounds.lower < sc.bounds.upper))
        throw ConfigError("privacy.bounds: interval must have positive width");
    if (sc.sigma && !(*sc.sigma > 0.0))
        throw ConfigError("privacy.sigma: must be positive");

    if (const json* r = find(root, "rn")) {
        if (!r->is_object())
            throw ConfigError("rn: expected an object");
        reject_unknown(*r, {"clamp", "floor", "populations"}, "rn");
        if (r->contains("clamp")) {
            const json& c = (*r)["clamp"];
            if (c.is_null() || (c.is_boolean() && !c.get<bool>()))
                sc.clamp = false;
            else if (!c.is_boolean())
                sc.clamp_range = get_interval(c, "rn.clamp");
        }
        if (const json* v = find(*r, "floor"))
            sc.infection_floor = get_number(*v, "rn.floor");
        if (const json* v = find(*r, "populations"))
            sc.populations = get_numbers(*v, "rn.populations");
    }
    if (!(sc.infection_floor > 0.0 && sc.infection_floor <= 1.0))
        throw ConfigError("rn.floor: must lie in (0,1]");
    for (std::size_t i = 0; i < sc.populations.size(); ++i)
        if (!(sc.populations[i] >= 1.0))
            throw ConfigError("rn.populations[" + std::to_string(i) + "]: must be at least 1");

    if (const json* a = find(root, "accuracy")) {
        if (!a->is_object())
            throw ConfigError("accuracy: expected an object");
        reject_unknown(*a, {"eps", "trials"}, "accuracy");
        if (const json* v = find(*a, "eps"))
            sc.accuracy_eps = get_numbers(*v, "accuracy.eps");
        if (const json* v = find(*a, "trials"))
            sc.accuracy_trials = get_count(*v, "accuracy.trials");
    }
    if (const json* v = find(root, "output_dir"))
        sc.output_dir = get_string(*v, "output_dir");
    if (const json* v = find(root, "seed"))
        sc.seed = get_count(*v, "seed");

    const TransmissionNetwork network = build_network(sc);
    const std::size_t n = network.size();
    build_initial_state(sc, n);
    build_partition(sc, n);
    if (!sc.populations.empty() && sc.populations.size() != n)
        throw ConfigError("rn.populations: expected " + std::to_string(n) + " entries");
    return sc;
}

inline nlohmann::json to_json(const Scenario& sc)
{
    using nlohmann::json;
    json root;
    std::visit(
        [&](const auto& src) {
            using T = std::decay_t<decltype(src)>;
            if constexpr (std::is_same_v<T, InlineNetwork>)
                root["network"] = {{"transmission", src.transmission}, {"recovery", src.recovery}};
            else if constexpr (std::is_same_v<T, CsvNetwork>)
                root["network"] = {{"transmission", src.transmission}, {"recovery", src.recovery}};
            else
                root["network"] = {{"random",
                                    {{"nodes", src.nodes},
                                     {"density", src.density},
                                     {"beta", {src.beta.lower, src.beta.upper}},
                                     {"gamma", {src.gamma.lower, src.gamma.upper}},
                                     {"seed", src.seed}}}};
        },
        sc.network);
    root["initial_infected"] = sc.initial_infected;
    root["model"] = std::string(to_string(sc.model));
    root["dt"] = sc.dt;
    root["steps"] = sc.steps;
    root["sample_every"] = sc.sample_every;
    if (!sc.partition.empty())
        root["partition"] = sc.partition;
    json privacy = {{"enabled", sc.privacy_enabled},
                    {"epsilon0", sc.epsilon0},
                    {"delta", sc.delta},
                    {"k", sc.k},
                    {"bounds", {sc.bounds.lower, sc.bounds.upper}}};
    if (sc.target_epsilon)
        privacy["target_epsilon"] = *sc.target_epsilon;
    if (sc.sigma)
        privacy["sigma"] = *sc.sigma;
    root["privacy"] = privacy;
    json rn = {{"floor", sc.infection_floor}};
    rn["clamp"] = sc.clamp ? json{sc.clamp_range.lower, sc.clamp_range.upper} : json(false);
    if (!sc.populations.empty())
        rn["populations"] = sc.populations;
    root["rn"] = rn;
    root["accuracy"] = {{"eps", sc.accuracy_eps}, {"trials", sc.accuracy_trials}};
    root["output_dir"] = sc.output_dir;
    root["seed"] = sc.seed;
    return root;
}

inline Scenario load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config '" + path.string() + "'");
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_scenario(root, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

} // namespace distrn
