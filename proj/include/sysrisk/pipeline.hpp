#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sysrisk/analytics.hpp"
#include "sysrisk/firesale.hpp"
#include "sysrisk/io.hpp"
#include "sysrisk/qcqp.hpp"

namespace sysrisk {

enum class ScenarioChoice { Moderate, Extreme, Both };

ScenarioChoice parse_scenario(const std::string& name);
std::string to_string(ScenarioChoice choice);

struct RunConfig {
    MarketFiles inputs;
    double depth_scale = 0.4;  // c
    OptimizerConfig optimizer;
    double epsilon = 0.025;       // fire-sale safety buffer
    double moderate_cap = 33.0;   // L' of the moderate scenario
    int firesale_max_steps = 1000;
    ScenarioChoice scenario = ScenarioChoice::Both;
    bool skip_optimize = false;
    std::vector<double> sweep_c = {0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.4, 12.8, 25.6};
    std::filesystem::path output_dir = "sysrisk_out";
    std::uint64_t rng_seed = 0;

    /// Throws InputError naming the offending field.
    void validate() const;
    /// The (name, config) pairs selected by `scenario`.
    std::vector<std::pair<std::string, FireSaleConfig>> scenarios() const;
};

/// Reads a JSON config. Relative input paths are resolved against `base_dir`. Unknown keys are
/// rejected. Missing keys keep their defaults.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const RunConfig& config);

/// Failure of one pipeline stage, with the process exit status it maps to.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, int exit_code, const std::string& message);
    const std::string& stage() const { return stage_; }
    int exit_code() const { return exit_code_; }

private:
    std::string stage_;
    int exit_code_;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int input = 1;
inline constexpr int solver = 2;
inline constexpr int io = 3;
}  // namespace exit_code

struct NetworkReport {
    BipartiteMarket market;
    DebtRankResult<double> debtrank;
    NetworkStats stats;
    ConcentrationReport concentration;
    double bipartite_density = 0.0;
    std::map<std::string, ContagionReport> firesale;  // by scenario name
};

struct PipelineResults {
    RunConfig config;
    MarketData data;
    NetworkReport original;
    std::optional<Solution> solution;
    std::optional<NetworkReport> optimized;
    std::optional<RankCorrelation> rank_correlation;  // original vs optimized DebtRank
    std::vector<SweepPoint> sweep;
};

/// load, project, DebtRank, optimize, fire sales and analytics. Throws StageError.
PipelineResults execute_pipeline(const RunConfig& config);

/// Writes debtrank.csv, summary.json, firesale_<scenario>_<network>.csv, sweep_c.csv and,
/// when optimized, holdings_optimized.csv. Throws StageError with the io exit code.
void emit_reports(const PipelineResults& results, const std::filesystem::path& dir);

/// summary.json content. `timestamp` is the only field that varies between identical runs.
nlohmann::json summary_json(const PipelineResults& results, const std::string& timestamp);

/// execute_pipeline + emit_reports. Returns the exit status and logs failures to `log`.
int run_pipeline(const RunConfig& config, std::ostream& log);

}  // namespace sysrisk
