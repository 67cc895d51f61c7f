#include "sysrisk/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <set>

namespace sysrisk {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw InputError("config: '" + where + "' must be an object");
    for (const auto& item : j.items())
        if (!allowed.count(item.key()))
            throw InputError("config: unknown field '" + (where.empty() ? "" : where + ".") + item.key() + "'");
}

template <typename T>
void read_field(const json& j, const std::string& key, const std::string& path, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InputError("config: field '" + path + "' has the wrong type");
    }
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

template <typename Fn>
auto run_stage(const std::string& stage, int code, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const SolverError& e) {
        throw StageError(stage, exit_code::solver, e.what());
    } catch (const IoError& e) {
        throw StageError(stage, exit_code::io, e.what());
    } catch (const std::exception& e) {
        throw StageError(stage, code, e.what());
    }
}

NetworkReport analyse(const BipartiteMarket& market) {
    NetworkReport r;
    r.market = market;
    const OverlapNetwork net = project_overlap(market);
    r.debtrank = debtrank_all(net.impact, net.economic_value);
    r.stats = projection_stats(net);
    r.concentration = hhi(market);
    r.bipartite_density = bipartite_density(market);
    return r;
}

json network_json(const NetworkReport& r) {
    const NetworkStats& s = r.stats;
    json contagion = json::object();
    for (const auto& [name, report] : r.firesale) contagion[name] = report.probability;
    json excluded = json::array();
    for (Index i : r.concentration.excluded) excluded.push_back(r.market.banks[static_cast<size_t>(i)].id);
    return {
        {"mean_debtrank", number(r.debtrank.mean)},
        {"bipartite_density", number(r.bipartite_density)},
        {"hhi_mean", number(r.concentration.mean)},
        {"hhi_excluded", excluded},
        {"contagion_probability", contagion},
        {"projection",
         {{"links", s.links},
          {"density", number(s.density)},
          {"avg_degree_unweighted", number(s.avg_degree_unweighted)},
          {"avg_degree_weighted", number(s.avg_degree_weighted)},
          {"clustering_unweighted", number(s.clustering_unweighted)},
          {"clustering_weighted", number(s.clustering_weighted)},
          {"avg_nn_degree_unweighted", number(s.avg_nn_degree_unweighted)},
          {"avg_nn_degree_weighted", number(s.avg_nn_degree_weighted)},
          {"diameter_unweighted", s.diameter_unweighted},
          {"connected", s.connected}}},
    };
}

json residuals_json(const Residuals& r) {
    return {{"equality", number(r.equality)},
            {"returns", number(r.returns)},
            {"variance", number(r.variance)},
            {"negativity", number(r.negativity)}};
}

std::ofstream open_report(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

void close_report(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

void write_firesale(const NetworkReport& network, const ContagionReport& report, const std::filesystem::path& path) {
    std::ofstream out = open_report(path);
    out << "initial_defaulter,steps,induced_defaults,induced_default_ids,final_market_fraction,equity_destroyed,"
           "deleveraging_sold,final_average_leverage,empty_book_flag\n";
    for (const ScenarioResult& s : report.scenarios) {
        std::string ids;
        for (Index i : s.induced_defaults) {
            if (!ids.empty()) ids += ';';
            ids += network.market.banks[static_cast<size_t>(i)].id;
        }
        const double lev = s.leverage_path.empty() ? std::nan("") : s.leverage_path.back();
        out << network.market.banks[static_cast<size_t>(s.initial_defaulter)].id << ',' << s.steps << ','
            << s.induced_defaults.size() << ',' << ids << ',' << format_number(s.final_market_fraction) << ','
            << format_number(s.equity_destroyed) << ',' << format_number(s.deleveraging_sold) << ','
            << (std::isfinite(lev) ? format_number(lev) : std::string()) << ',' << (s.empty_book_flag ? 1 : 0) << '\n';
    }
    close_report(out, path);
}

std::string utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

ScenarioChoice parse_scenario(const std::string& name) {
    if (name == "moderate") return ScenarioChoice::Moderate;
    if (name == "extreme") return ScenarioChoice::Extreme;
    if (name == "both") return ScenarioChoice::Both;
    throw InputError("unknown scenario '" + name + "' (expected moderate, extreme or both)");
}

std::string to_string(ScenarioChoice choice) {
    switch (choice) {
        case ScenarioChoice::Moderate: return "moderate";
        case ScenarioChoice::Extreme: return "extreme";
        case ScenarioChoice::Both: return "both";
    }
    return "both";
}

void RunConfig::validate() const {
    const std::pair<const char*, const std::filesystem::path*> required[] = {
        {"inputs.holdings", &inputs.holdings}, {"inputs.banks", &inputs.banks}, {"inputs.assets", &inputs.assets}};
    for (const auto& [name, path] : required)
        if (path->empty()) throw InputError(std::string("config: missing field '") + name + "'");
    if (!skip_optimize) {
        if (inputs.returns.empty())
            throw InputError("config: missing field 'inputs.returns' (required unless skip_optimize is set)");
        if (inputs.covariance.empty())
            throw InputError("config: missing field 'inputs.covariance' (required unless skip_optimize is set)");
    }
    if (!(depth_scale > 0.0)) throw InputError("config: field 'depth_scale' must be positive");
    for (double c : sweep_c)
        if (!(c > 0.0)) throw InputError("config: field 'sweep_c' must hold positive values");
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw InputError("config: field 'firesale.epsilon' must lie in [0, 1)");
    if (!(moderate_cap > 0.0)) throw InputError("config: field 'firesale.moderate_cap' must be positive");
    if (firesale_max_steps < 1) throw InputError("config: field 'firesale.max_steps' must be at least 1");
    if (output_dir.empty()) throw InputError("config: field 'output_dir' is empty");
    try {
        optimizer.validate();
    } catch (const std::exception& e) {
        throw InputError(std::string("config: optimizer: ") + e.what());
    }
}

std::vector<std::pair<std::string, FireSaleConfig>> RunConfig::scenarios() const {
    std::vector<std::pair<std::string, FireSaleConfig>> out;
    if (scenario != ScenarioChoice::Extreme) {
        FireSaleConfig c = FireSaleConfig::moderate(epsilon);
        c.fixed_cap = moderate_cap;
        c.max_steps = firesale_max_steps;
        out.emplace_back("moderate", c);
    }
    if (scenario != ScenarioChoice::Moderate) {
        FireSaleConfig c = FireSaleConfig::extreme(epsilon);
        c.max_steps = firesale_max_steps;
        out.emplace_back("extreme", c);
    }
    return out;
}

RunConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
    RunConfig c;
    reject_unknown(j,
                   {"inputs", "depth_scale", "rng_seed", "scenario", "skip_optimize", "sweep_c", "output_dir",
                    "optimizer", "firesale"},
                   "");
    const auto resolve = [&](const std::string& p) -> std::filesystem::path {
        if (p.empty()) return {};
        const std::filesystem::path path(p);
        return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };
    if (j.contains("inputs")) {
        const json& in = j.at("inputs");
        reject_unknown(in, {"holdings", "banks", "assets", "returns", "covariance"}, "inputs");
        const std::pair<const char*, std::filesystem::path*> fields[] = {{"holdings", &c.inputs.holdings},
                                                                         {"banks", &c.inputs.banks},
                                                                         {"assets", &c.inputs.assets},
                                                                         {"returns", &c.inputs.returns},
                                                                         {"covariance", &c.inputs.covariance}};
        for (const auto& [name, path] : fields) {
            std::string value;
            read_field(in, name, std::string("inputs.") + name, value);
            *path = resolve(value);
        }
    }
    read_field(j, "depth_scale", "depth_scale", c.depth_scale);
    read_field(j, "rng_seed", "rng_seed", c.rng_seed);
    read_field(j, "skip_optimize", "skip_optimize", c.skip_optimize);
    read_field(j, "sweep_c", "sweep_c", c.sweep_c);
    if (j.contains("scenario")) {
        std::string s;
        read_field(j, "scenario", "scenario", s);
        c.scenario = parse_scenario(s);
    }
    if (j.contains("output_dir")) {
        std::string s;
        read_field(j, "output_dir", "output_dir", s);
        c.output_dir = resolve(s);
    }
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        OptimizerConfig& oc = c.optimizer;
        reject_unknown(o,
                       {"eq_tol", "ineq_tol", "max_iterations", "max_outer", "n_starts", "initial_barrier",
                        "barrier_growth", "gap_tol", "start_spread", "newton_tol", "min_improvement"},
                       "optimizer");
        read_field(o, "eq_tol", "optimizer.eq_tol", oc.eq_tol);
        read_field(o, "ineq_tol", "optimizer.ineq_tol", oc.ineq_tol);
        read_field(o, "max_iterations", "optimizer.max_iterations", oc.max_iterations);
        read_field(o, "max_outer", "optimizer.max_outer", oc.max_outer);
        read_field(o, "n_starts", "optimizer.n_starts", oc.n_starts);
        read_field(o, "initial_barrier", "optimizer.initial_barrier", oc.initial_barrier);
        read_field(o, "barrier_growth", "optimizer.barrier_growth", oc.barrier_growth);
        read_field(o, "gap_tol", "optimizer.gap_tol", oc.gap_tol);
        read_field(o, "start_spread", "optimizer.start_spread", oc.start_spread);
        read_field(o, "newton_tol", "optimizer.newton_tol", oc.newton_tol);
        read_field(o, "min_improvement", "optimizer.min_improvement", oc.min_improvement);
    }
    if (j.contains("firesale")) {
        const json& f = j.at("firesale");
        reject_unknown(f, {"epsilon", "moderate_cap", "max_steps"}, "firesale");
        read_field(f, "epsilon", "firesale.epsilon", c.epsilon);
        read_field(f, "moderate_cap", "firesale.moderate_cap", c.moderate_cap);
        read_field(f, "max_steps", "firesale.max_steps", c.firesale_max_steps);
    }
    c.optimizer.rng_seed = c.rng_seed;
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j, path.parent_path());
}

json config_to_json(const RunConfig& c) {
    const OptimizerConfig& o = c.optimizer;
    return {
        {"inputs",
         {{"holdings", c.inputs.holdings.string()},
          {"banks", c.inputs.banks.string()},
          {"assets", c.inputs.assets.string()},
          {"returns", c.inputs.returns.string()},
          {"covariance", c.inputs.covariance.string()}}},
        {"depth_scale", c.depth_scale},
        {"rng_seed", c.rng_seed},
        {"scenario", to_string(c.scenario)},
        {"skip_optimize", c.skip_optimize},
        {"sweep_c", c.sweep_c},
        {"output_dir", c.output_dir.string()},
        {"optimizer",
         {{"eq_tol", o.eq_tol},
          {"ineq_tol", o.ineq_tol},
          {"max_iterations", o.max_iterations},
          {"max_outer", o.max_outer},
          {"n_starts", o.n_starts},
          {"initial_barrier", o.initial_barrier},
          {"barrier_growth", o.barrier_growth},
          {"gap_tol", o.gap_tol},
          {"start_spread", o.start_spread},
          {"newton_tol", o.newton_tol},
          {"min_improvement", o.min_improvement}}},
        {"firesale", {{"epsilon", c.epsilon}, {"moderate_cap", c.moderate_cap}, {"max_steps", c.firesale_max_steps}}},
    };
}

StageError::StageError(std::string stage, int exit_code, const std::string& message)
    : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage)), exit_code_(exit_code) {}

PipelineResults execute_pipeline(const RunConfig& config) {
    PipelineResults res;
    run_stage("config", exit_code::input, [&] { config.validate(); });
    res.config = config;
    res.config.optimizer.rng_seed = config.rng_seed;

    res.data = run_stage("load", exit_code::input, [&] {
        MarketFiles files = config.inputs;
        if (config.skip_optimize) {
            // Returns are still read when given; the covariance is not needed.
            files.covariance.clear();
        }
        return load_market(files, config.depth_scale);
    });
    res.original = run_stage("analyse", exit_code::input, [&] { return analyse(res.data.market); });

    if (!config.skip_optimize) {
        const QcqpInstance inst =
            run_stage("optimize", exit_code::input, [&] { return build_qcqp(res.data.market, res.data.covariance); });
        res.solution = run_stage("optimize", exit_code::solver, [&] { return solve(inst, res.config.optimizer); });
        const BipartiteMarket optimized = run_stage("optimize", exit_code::solver, [&] {
            try {
                return apply_solution(res.data.market, res.solution->y, res.config.optimizer.eq_tol);
            } catch (const DomainError& e) {
                throw SolverError(e.what());
            }
        });
        res.optimized = run_stage("analyse", exit_code::input, [&] { return analyse(optimized); });
    }

    run_stage("firesale", exit_code::input, [&] {
        for (const auto& [name, fs] : config.scenarios()) {
            res.original.firesale[name] = contagion_probability(res.original.market, fs);
            if (res.optimized) res.optimized->firesale[name] = contagion_probability(res.optimized->market, fs);
        }
    });

    run_stage("analytics", exit_code::input, [&] {
        if (res.optimized) res.rank_correlation = rank_correlation(res.original.debtrank.per_bank, res.optimized->debtrank.per_bank);
        res.sweep = sweep_depth_scale(res.data.market, config.sweep_c, res.optimized ? &res.optimized->market : nullptr);
    });
    return res;
}

json summary_json(const PipelineResults& r, const std::string& timestamp) {
    json j;
    j["timestamp"] = timestamp;
    j["config"] = config_to_json(r.config);
    j["market"] = {{"num_assets", r.data.market.num_assets()},
                   {"num_banks", r.data.market.num_banks()},
                   {"total_value", number(r.data.market.total_value())},
                   {"warnings", r.data.warnings}};
    j["original"] = network_json(r.original);
    j["optimized"] = r.optimized ? network_json(*r.optimized) : json(nullptr);
    j["debtrank_reduction_factor"] = r.optimized && r.optimized->debtrank.mean > 0.0
                                         ? number(r.original.debtrank.mean / r.optimized->debtrank.mean)
                                         : json(nullptr);
    if (r.rank_correlation) {
        const auto opt = [](const std::optional<double>& v) { return v ? number(*v) : json(nullptr); };
        j["rank_correlation"] = {{"spearman", opt(r.rank_correlation->spearman)},
                                 {"kendall", opt(r.rank_correlation->kendall)}};
    } else {
        j["rank_correlation"] = nullptr;
    }
    if (r.solution) {
        const Solution& s = *r.solution;
        json starts = json::array();
        for (const StartReport& st : s.starts)
            starts.push_back({{"objective", number(st.objective)},
                              {"feasible", st.feasible},
                              {"iterations", st.iterations},
                              {"outer_rounds", st.outer_rounds}});
        j["optimizer"] = {{"status", to_string(s.status)},
                          {"baseline_objective", number(s.baseline_objective)},
                          {"objective", number(s.objective_value)},
                          {"residuals", residuals_json(s.feasibility)},
                          {"starts", starts}};
    } else {
        j["optimizer"] = nullptr;
    }
    return j;
}

void emit_reports(const PipelineResults& r, const std::filesystem::path& dir) {
    run_stage("report", exit_code::io, [&] {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());

        {
            const auto path = dir / "debtrank.csv";
            std::ofstream out = open_report(path);
            out << "bank_id,debtrank_original,debtrank_optimized\n";
            const BipartiteMarket& m = r.data.market;
            for (Index i = 0; i < m.num_banks(); ++i) {
                out << m.banks[static_cast<size_t>(i)].id << ',' << format_number(r.original.debtrank.per_bank(i)) << ',';
                if (r.optimized) out << format_number(r.optimized->debtrank.per_bank(i));
                out << '\n';
            }
            close_report(out, path);
        }
        for (const auto& [name, report] : r.original.firesale)
            write_firesale(r.original, report, dir / ("firesale_" + name + "_original.csv"));
        if (r.optimized)
            for (const auto& [name, report] : r.optimized->firesale)
                write_firesale(*r.optimized, report, dir / ("firesale_" + name + "_optimized.csv"));
        {
            const auto path = dir / "sweep_c.csv";
            std::ofstream out = open_report(path);
            out << "c,mean_debtrank_original,mean_debtrank_optimized\n";
            for (const SweepPoint& p : r.sweep) {
                out << format_number(p.c) << ',' << format_number(p.mean_original) << ',';
                if (p.mean_optimized) out << format_number(*p.mean_optimized);
                out << '\n';
            }
            close_report(out, path);
        }
        if (r.optimized) write_holdings(r.optimized->market, dir / "holdings_optimized.csv");
        {
            const auto path = dir / "summary.json";
            std::ofstream out = open_report(path);
            out << summary_json(r, utc_now()).dump(2) << '\n';
            close_report(out, path);
        }
    });
}

int run_pipeline(const RunConfig& config, std::ostream& log) {
    try {
        const PipelineResults results = execute_pipeline(config);
        for (const std::string& w : results.data.warnings) log << "warning: " << w << '\n';
        emit_reports(results, config.output_dir);
        return exit_code::ok;
    } catch (const StageError& e) {
        log << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        return exit_code::input;
    }
}

}  // namespace sysrisk
