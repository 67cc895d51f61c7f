#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sysrisk/market.hpp"

namespace sysrisk {

/// Input file locations. `returns` and `covariance` may be empty when the optimizer is not run.
struct MarketFiles {
    std::filesystem::path holdings;
    std::filesystem::path banks;
    std::filesystem::path assets;
    std::filesystem::path returns;
    std::filesystem::path covariance;
};

struct MarketData {
    BipartiteMarket market;  // expected returns live in the assets
    MatrixXd covariance;     // K x K in asset order; empty when not loaded
    bool has_returns = false;
    std::vector<std::string> warnings;  // e.g. a direct depth overriding adv/volatility
};

/// Parsed CSV file with a mandatory header. Fields are split on commas and trimmed.
struct CsvTable {
    std::string source;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<int> lines;  // 1-based line number of each row

    /// Index of `name` in the header, or -1.
    int column(const std::string& name) const;
};

/// Throws InputError when the file cannot be opened or a row is ragged, IoError when reading fails.
CsvTable read_csv(const std::filesystem::path& path);

/// Strict decimal parse; InputError naming the file, line and column on failure.
double parse_number(const std::string& field, const CsvTable& table, std::size_t row, const std::string& column);

/// Shortest text that reads back to the same double.
std::string format_number(double value);

/// Reads the five schemas, checks ids across files and validates the market.
///   holdings.csv   bank_id,asset_id,value
///   banks.csv      bank_id,equity,other_assets
///   assets.csv     asset_id,adv,volatility[,depth]   (empty depth = derive from adv/volatility)
///   returns.csv    asset_id,expected_return
///   covariance.csv asset_id,<asset ids...> then one row per asset
/// Bank and asset order follow banks.csv and assets.csv.
MarketData load_market(const MarketFiles& files, double depth_scale);

/// Writes `data` under `dir` in the same schemas. Zero holdings are omitted.
MarketFiles write_market(const MarketData& data, const std::filesystem::path& dir);

/// Only the holdings schema; used for the optimized allocation.
void write_holdings(const BipartiteMarket& market, const std::filesystem::path& path);

}  // namespace sysrisk
