#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "distrn/distrn.hpp"

namespace fs = std::filesystem;
using namespace distrn;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

struct Context {
    Scenario scenario;
    TransmissionNetwork network;
    Partition partition;
    EpidemicState initial;
    fs::path out_dir;
    std::uint64_t seed;
};

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("--config", c.config, "Scenario file (JSON)")->required();
    cmd->add_option("--seed", c.seed, "Master seed, overrides the scenario");
    cmd->add_option("--out", c.out, "Output directory, overrides the scenario");
}

Context load(const Common& c)
{
    Scenario sc = load_scenario(c.config);
    TransmissionNetwork net = build_network(sc);
    Partition part = build_partition(sc, net.size());
    EpidemicState x0 = build_initial_state(sc, net.size());
    fs::path out = c.out ? fs::path(*c.out) : fs::path(sc.output_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec)
        throw ConfigError("cannot create output directory '" + out.string() + "': " + ec.message());
    const std::uint64_t seed = c.seed ? *c.seed : sc.seed;
    return Context{std::move(sc), std::move(net), std::move(part), std::move(x0), std::move(out), seed};
}

std::ofstream open_output(const fs::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ConfigError("cannot open '" + path.string() + "' for writing");
    return out;
}

std::vector<EpidemicState> trajectory(const Context& ctx)
{
    return integrate(ctx.network, ctx.initial, ctx.scenario.model, ctx.scenario.dt, ctx.scenario.steps, &std::cerr);
}

std::vector<std::size_t> sampled(const std::vector<EpidemicState>& traj, std::size_t every)
{
    std::vector<std::size_t> idx;
    for (std::size_t e = 0; e < traj.size(); e += every)
        idx.push_back(e);
    return idx;
}

void run_simulate(const Context& ctx)
{
    const auto traj = trajectory(ctx);
    auto out = open_output(ctx.out_dir / "trajectory.csv");
    csv::write_states(out, traj);
}

void run_compute_rn(const Context& ctx, const std::string& kind)
{
    const auto traj = trajectory(ctx);
    const RnOptions opts = build_rn_options(ctx.scenario);
    std::vector<LocalRnMatrix> mats;
    if (kind == "basic" || kind == "all")
        mats.push_back(basic_matrix(ctx.network, opts));
    auto lout = open_output(ctx.out_dir / "lern.csv");
    lout << "t,node,lern\n";
    for (std::size_t e : sampled(traj, ctx.scenario.sample_every)) {
        if (kind == "pseudo" || kind == "all")
            mats.push_back(build_matrix(ctx.network, RnKind::PseudoEffective, traj[e], opts));
        if (kind == "effective" || kind == "all")
            mats.push_back(build_matrix(ctx.network, RnKind::Effective, traj[e], opts));
        const Vector l = lerns(ctx.network, traj[e], opts);
        for (Eigen::Index i = 0; i < l.size(); ++i)
            lout << csv::format(traj[e].t) << ',' << i << ',' << csv::format(l(i)) << '\n';
    }
    auto out = open_output(ctx.out_dir / "rn.csv");
    csv::write_rn(out, mats);
}

void run_cluster_rn(const Context& ctx)
{
    const auto traj = trajectory(ctx);
    const RnOptions opts = build_rn_options(ctx.scenario);
    std::vector<ClusterRnMatrix> mats;
    for (std::size_t e : sampled(traj, ctx.scenario.sample_every))
        mats.push_back(cluster_matrix(ctx.network, traj[e], ctx.partition, opts));
    auto out = open_output(ctx.out_dir / "cluster_rn.csv");
    csv::write_cluster_rn(out, mats);
}

void run_pipeline_cmd(const Context& ctx, bool no_privacy, bool trace)
{
    const auto traj = trajectory(ctx);
    PipelineConfig cfg = build_pipeline_config(ctx.scenario, ctx.partition);
    if (no_privacy)
        cfg.privacy_on = false;
    std::optional<std::ofstream> trace_out;
    if (trace) {
        trace_out = open_output(ctx.out_dir / "trace.jsonl");
        cfg.trace = &*trace_out;
    }
    std::vector<ClusterRnMatrix> mats;
    auto sigma_out = open_output(ctx.out_dir / "privacy.csv");
    sigma_out << "epoch,t,authority,sigma\n";
    for (std::size_t e : sampled(traj, ctx.scenario.sample_every)) {
        cfg.epoch = e;
        const PipelineResult res = run_pipeline(ctx.network, traj[e], ctx.partition, cfg, ctx.seed);
        mats.push_back(res.matrix);
        for (std::size_t i = 0; i < res.authority_sigma.size(); ++i)
            sigma_out << e << ',' << csv::format(traj[e].t) << ',' << i << ','
                      << (res.authority_sigma[i] ? csv::format(*res.authority_sigma[i]) : std::string()) << '\n';
    }
    auto out = open_output(ctx.out_dir / "cluster_rn.csv");
    csv::write_cluster_rn(out, mats);
}

std::vector<double> parse_eps_list(const std::string& text)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ','))
        out.push_back(csv::parse_double(cell, "--eps"));
    if (out.empty())
        throw ConfigError("--eps: expected a comma-separated list");
    return out;
}

int run_accuracy(const Context& ctx, const std::optional<std::string>& eps, std::optional<std::size_t> trials)
{
    const auto traj = trajectory(ctx);
    AccuracyConfig cfg;
    cfg.eps_grid = eps ? parse_eps_list(*eps) : ctx.scenario.accuracy_eps;
    cfg.trials = trials ? *trials : ctx.scenario.accuracy_trials;
    cfg.sample_every = ctx.scenario.sample_every;
    cfg.master_seed = ctx.seed;
    cfg.base = build_pipeline_config(ctx.scenario, ctx.partition);
    const AccuracyReport report = rmse_sweep(ctx.network, traj, ctx.partition, cfg);
    auto rows = open_output(ctx.out_dir / "accuracy.csv");
    csv::write_accuracy(rows, report.rows);
    auto summary = open_output(ctx.out_dir / "accuracy_summary.csv");
    csv::write_accuracy_summary(summary, report.summary);
    bool any_ok = false;
    for (const EpsilonSummary& s : report.summary) {
        if (s.error)
            std::cerr << "eps " << s.eps << ": " << *s.error << '\n';
        any_ok = any_ok || !s.error;
    }
    return any_ok ? 0 : 4;
}

std::string optional_cell(const std::optional<double>& v) { return v ? csv::format(*v) : std::string(); }

void run_report(const Context& ctx)
{
    const auto traj = trajectory(ctx);
    const RnOptions opts = build_rn_options(ctx.scenario);
    std::vector<EpidemicState> samples;
    for (std::size_t e : sampled(traj, ctx.scenario.sample_every))
        samples.push_back(traj[e]);
    const ThresholdReport rep = threshold_report(ctx.network, samples, ctx.partition, ctx.scenario.model, opts);
    auto out = open_output(ctx.out_dir / "threshold.csv");
    out << "scope,id,first_crossing,peak_time,peak_infected,agreement,informative_samples\n";
    for (const auto* list : {&rep.nodes, &rep.clusters})
        for (const ThresholdEntry& e : *list)
            out << (e.scope == ThresholdEntry::Scope::Node ? "node" : "cluster") << ',' << e.id << ','
                << optional_cell(e.first_crossing) << ',' << csv::format(e.peak_time) << ','
                << csv::format(e.peak_infected) << ',' << optional_cell(e.agreement) << ','
                << e.informative_samples << '\n';

    nlohmann::json summary;
    summary["nodes"] = ctx.network.size();
    summary["clusters"] = ctx.partition.cluster_count();
    summary["model"] = std::string(to_string(ctx.scenario.model));
    summary["basic_reproduction_number"] = network_reproduction(ctx.network);
    summary["initial_reproduction_number"] = network_reproduction(ctx.network, traj.front());
    summary["final_reproduction_number"] = network_reproduction(ctx.network, traj.back());
    double peak = 0.0;
    double peak_t = 0.0;
    for (const EpidemicState& st : traj)
        if (st.x.sum() > peak) {
            peak = st.x.sum();
            peak_t = st.t;
        }
    summary["peak_total_infected"] = peak;
    summary["peak_time"] = peak_t;
    auto js = open_output(ctx.out_dir / "report.json");
    js << summary.dump(2) << '\n';
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Distributed reproduction numbers for networked epidemics"};
    app.require_subcommand(1);

    Common simulate_opts, rn_opts, cluster_opts, pipe_opts, acc_opts, report_opts;
    auto* simulate = app.add_subcommand("simulate", "Integrate the network model, write trajectory.csv");
    add_common(simulate, simulate_opts);

    auto* compute_rn = app.add_subcommand("compute-rn", "Local reproduction matrices, write rn.csv and lern.csv");
    add_common(compute_rn, rn_opts);
    std::string rn_kind = "all";
    compute_rn->add_option("--kind", rn_kind, "basic, pseudo, effective or all")
        ->check(CLI::IsMember({"basic", "pseudo", "effective", "all"}));

    auto* cluster_rn = app.add_subcommand("cluster-rn", "Exact cluster matrices, write cluster_rn.csv");
    add_common(cluster_rn, cluster_opts);

    auto* pipeline = app.add_subcommand("pipeline", "Run the aggregation protocol, write cluster_rn.csv");
    add_common(pipeline, pipe_opts);
    bool no_privacy = false;
    bool trace = false;
    pipeline->add_flag("--no-privacy", no_privacy, "Skip the randomizer");
    pipeline->add_flag("--trace", trace, "Write the message trace to trace.jsonl");

    auto* accuracy = app.add_subcommand("accuracy", "Privacy/utility sweep, write accuracy*.csv");
    add_common(accuracy, acc_opts);
    std::optional<std::string> eps;
    std::optional<std::size_t> trials;
    accuracy->add_option("--eps", eps, "Comma-separated epsilon grid");
    accuracy->add_option("--trials", trials, "Pipeline runs per epoch and epsilon");

    auto* report = app.add_subcommand("report", "Threshold diagnostics, write threshold.csv and report.json");
    add_common(report, report_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (simulate->parsed())
            run_simulate(load(simulate_opts));
        else if (compute_rn->parsed())
            run_compute_rn(load(rn_opts), rn_kind);
        else if (cluster_rn->parsed())
            run_cluster_rn(load(cluster_opts));
        else if (pipeline->parsed())
            run_pipeline_cmd(load(pipe_opts), no_privacy, trace);
        else if (accuracy->parsed())
            return run_accuracy(load(acc_opts), eps, trials);
        else if (report->parsed())
            run_report(load(report_opts));
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
