#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "sysrisk/pipeline.hpp"
#include "sysrisk/synthetic.hpp"

using namespace sysrisk;

namespace {

struct RunArgs {
    std::string config;
    std::string holdings, banks, assets, returns, covariance;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<double> c;
    std::string scenario;
    bool skip_optimize = false;
};

int do_run(const RunArgs& a) {
    RunConfig cfg;
    try {
        if (!a.config.empty()) cfg = load_config(a.config);
    } catch (const std::exception& e) {
        std::cerr << "error: [config] " << e.what() << '\n';
        return exit_code::input;
    }
    if (!a.holdings.empty()) cfg.inputs.holdings = a.holdings;
    if (!a.banks.empty()) cfg.inputs.banks = a.banks;
    if (!a.assets.empty()) cfg.inputs.assets = a.assets;
    if (!a.returns.empty()) cfg.inputs.returns = a.returns;
    if (!a.covariance.empty()) cfg.inputs.covariance = a.covariance;
    if (!a.out.empty()) cfg.output_dir = a.out;
    if (a.seed) cfg.rng_seed = cfg.optimizer.rng_seed = *a.seed;
    if (a.c) cfg.depth_scale = *a.c;
    if (!a.scenario.empty()) cfg.scenario = parse_scenario(a.scenario);
    if (a.skip_optimize) cfg.skip_optimize = true;

    const int status = run_pipeline(cfg, std::cerr);
    if (status == exit_code::ok) std::cout << "reports written to " << cfg.output_dir.string() << '\n';
    return status;
}

int do_synth(const SyntheticSpec& spec, const std::string& out) {
    try {
        const SyntheticData syn = make_synthetic(spec);
        MarketData data;
        data.market = syn.market;
        data.covariance = syn.covariance;
        data.has_returns = true;
        write_market(data, out);

        RunConfig cfg;
        cfg.inputs = {"holdings.csv", "banks.csv", "assets.csv", "returns.csv", "covariance.csv"};
        cfg.depth_scale = spec.depth_scale;
        cfg.rng_seed = spec.seed;
        cfg.output_dir = "reports";
        const auto path = std::filesystem::path(out) / "config.json";
        std::ofstream f(path);
        f << config_to_json(cfg).dump(2) << '\n';
        if (!f) throw IoError("cannot write " + path.string());
        std::cout << "wrote " << spec.num_assets << " assets x " << spec.num_banks << " banks to " << out << '\n';
        return exit_code::ok;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code::io;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code::input;
    }
}

int do_validate(const std::string& config_path) {
    try {
        const RunConfig cfg = load_config(config_path);
        MarketFiles files = cfg.inputs;
        const MarketData data = load_market(files, cfg.depth_scale);
        std::cout << "ok: " << data.market.num_assets() << " assets, " << data.market.num_banks() << " banks, total value "
                  << format_number(data.market.total_value()) << '\n';
        return exit_code::ok;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code::io;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code::input;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Systemic risk of overlapping bank portfolios"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run the full pipeline and write reports");
    run_cmd->add_option("--config", run.config, "JSON config file");
    run_cmd->add_option("--holdings", run.holdings, "holdings.csv");
    run_cmd->add_option("--banks", run.banks, "banks.csv");
    run_cmd->add_option("--assets", run.assets, "assets.csv");
    run_cmd->add_option("--returns", run.returns, "returns.csv");
    run_cmd->add_option("--covariance", run.covariance, "covariance.csv");
    run_cmd->add_option("--out", run.out, "Output directory");
    run_cmd->add_option("--seed", run.seed, "Random seed of the optimizer starts");
    run_cmd->add_option("--c", run.c, "Market depth scale c")->check(CLI::PositiveNumber);
    run_cmd->add_option("--scenario", run.scenario, "Fire-sale scenario")
        ->check(CLI::IsMember({"moderate", "extreme", "both"}));
    run_cmd->add_flag("--skip-optimize", run.skip_optimize, "Analytics and fire sales on the input network only");

    SyntheticSpec spec;
    std::string synth_out = "synthetic";
    bool large = false;
    auto* synth_cmd = app.add_subcommand("synth", "Write a random market in the input schemas");
    synth_cmd->add_option("--assets", spec.num_assets, "Number of assets")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--banks", spec.num_banks, "Number of banks")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--density", spec.density, "Probability of a holding");
    synth_cmd->add_option("--seed", spec.seed, "Generator seed");
    synth_cmd->add_option("--liquidity", spec.liquidity, "Median ADV relative to the amount outstanding");
    synth_cmd->add_flag("--large", large, "36 assets, 49 banks, density 0.51");
    synth_cmd->add_option("--out", synth_out, "Output directory");

    std::string validate_config;
    auto* validate_cmd = app.add_subcommand("validate", "Load and check the inputs named by a config");
    validate_cmd->add_option("--config", validate_config, "JSON config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_code::input;
    }

    if (*run_cmd) return do_run(run);
    if (*synth_cmd) {
        if (large) {
            const auto seed = spec.seed;
            const auto liquidity = spec.liquidity;
            spec = large_spec(seed);
            spec.liquidity = liquidity;
        }
        return do_synth(spec, synth_out);
    }
    if (*validate_cmd) return do_validate(validate_config);
    return exit_code::input;
}
