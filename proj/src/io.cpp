#include "sysrisk/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace sysrisk {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string where(const CsvTable& table, std::size_t row) {
    return table.source + ":" + std::to_string(table.lines[row]);
}

int require_column(const CsvTable& table, const std::string& name) {
    const int c = table.column(name);
    if (c < 0) throw InputError(table.source + ":1: missing column '" + name + "'");
    return c;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

std::map<std::string, Index> index_ids(const CsvTable& table, int col, const std::string& what) {
    std::map<std::string, Index> ids;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string& id = table.rows[r][static_cast<size_t>(col)];
        if (id.empty()) throw InputError(where(table, r) + ": empty " + what + " id");
        if (!ids.emplace(id, static_cast<Index>(ids.size())).second)
            throw InputError(where(table, r) + ": duplicate " + what + " id '" + id + "'");
    }
    return ids;
}

Index lookup(const std::map<std::string, Index>& ids, const std::string& id, const CsvTable& table, std::size_t row,
             const std::string& what, const std::string& defined_in) {
    const auto it = ids.find(id);
    if (it == ids.end())
        throw InputError(where(table, row) + ": unknown " + what + " id '" + id + "' (not in " + defined_in + ")");
    return it->second;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
    for (size_t c = 0; c < header.size(); ++c)
        if (header[c] == name) return static_cast<int>(c);
    return -1;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    CsvTable table;
    table.source = path.string();
    std::string line;
    int number = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++number;
        if (number == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        std::vector<std::string> fields = split(line);
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != table.header.size())
            throw InputError(table.source + ":" + std::to_string(number) + ": expected " +
                             std::to_string(table.header.size()) + " fields, found " + std::to_string(fields.size()));
        table.rows.push_back(std::move(fields));
        table.lines.push_back(number);
    }
    if (in.bad()) throw IoError("failed reading " + path.string());
    return table;
}

double parse_number(const std::string& field, const CsvTable& table, std::size_t row, const std::string& column) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = first + field.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (field.empty() || ec != std::errc() || ptr != last || !std::isfinite(value))
        throw InputError(where(table, row) + ": column '" + column + "': '" + field + "' is not a finite number");
    return value;
}

std::string format_number(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc()) throw DomainError("format_number: conversion failed");
    return std::string(buf, ptr);
}

MarketData load_market(const MarketFiles& files, double depth_scale) {
    if (!(depth_scale > 0.0)) throw DomainError("load_market: depth scale c must be positive");
    MarketData data;
    BipartiteMarket& m = data.market;
    m.depth_scale = depth_scale;
    auto& warnings = data.warnings;

    const CsvTable banks = read_csv(files.banks);
    {
        const int id = require_column(banks, "bank_id");
        const int eq = require_column(banks, "equity");
        const int oa = require_column(banks, "other_assets");
        for (std::size_t r = 0; r < banks.rows.size(); ++r) {
            Bank b;
            b.id = banks.rows[r][static_cast<size_t>(id)];
            b.equity = parse_number(banks.rows[r][static_cast<size_t>(eq)], banks, r, "equity");
            b.other_assets = parse_number(banks.rows[r][static_cast<size_t>(oa)], banks, r, "other_assets");
            m.banks.push_back(b);
        }
    }
    const auto bank_ids = index_ids(banks, banks.column("bank_id"), "bank");

    const CsvTable assets = read_csv(files.assets);
    {
        const int id = require_column(assets, "asset_id");
        const int adv = require_column(assets, "adv");
        const int vol = require_column(assets, "volatility");
        const int depth = assets.column("depth");
        for (std::size_t r = 0; r < assets.rows.size(); ++r) {
            const auto& row = assets.rows[r];
            Asset a;
            a.id = row[static_cast<size_t>(id)];
            a.adv = parse_number(row[static_cast<size_t>(adv)], assets, r, "adv");
            a.volatility = parse_number(row[static_cast<size_t>(vol)], assets, r, "volatility");
            if (depth >= 0 && !row[static_cast<size_t>(depth)].empty()) {
                a.depth = parse_number(row[static_cast<size_t>(depth)], assets, r, "depth");
                a.depth_given = true;
                if (!(a.depth > 0.0)) throw InputError(where(assets, r) + ": depth must be positive");
                if (a.adv > 0.0 && a.volatility > 0.0)
                    warnings.push_back(where(assets, r) + ": depth given for '" + a.id + "', adv/volatility not used for it");
            } else {
                if (!(a.adv > 0.0)) throw InputError(where(assets, r) + ": adv must be positive");
                if (!(a.volatility > 0.0)) throw InputError(where(assets, r) + ": volatility must be positive");
                a.depth = market_depth(a.adv, a.volatility, depth_scale);
            }
            m.assets.push_back(a);
        }
    }
    const auto asset_ids = index_ids(assets, assets.column("asset_id"), "asset");

    const CsvTable holdings = read_csv(files.holdings);
    if (holdings.rows.empty() || m.banks.empty() || m.assets.empty())
        throw DomainError("load_market: empty market");
    {
        const int bank = require_column(holdings, "bank_id");
        const int asset = require_column(holdings, "asset_id");
        const int value = require_column(holdings, "value");
        m.holdings = MatrixXd::Zero(m.num_assets(), m.num_banks());
        std::set<std::pair<Index, Index>> seen;
        for (std::size_t r = 0; r < holdings.rows.size(); ++r) {
            const auto& row = holdings.rows[r];
            const Index i = lookup(bank_ids, row[static_cast<size_t>(bank)], holdings, r, "bank", files.banks.string());
            const Index k = lookup(asset_ids, row[static_cast<size_t>(asset)], holdings, r, "asset", files.assets.string());
            if (!seen.emplace(k, i).second)
                throw InputError(where(holdings, r) + ": duplicate holding for bank '" + row[static_cast<size_t>(bank)] +
                                 "' and asset '" + row[static_cast<size_t>(asset)] + "'");
            m.holdings(k, i) = parse_number(row[static_cast<size_t>(value)], holdings, r, "value");
        }
    }

    if (!files.returns.empty()) {
        const CsvTable returns = read_csv(files.returns);
        const int id = require_column(returns, "asset_id");
        const int er = require_column(returns, "expected_return");
        std::vector<bool> set(m.assets.size(), false);
        for (std::size_t r = 0; r < returns.rows.size(); ++r) {
            const Index k = lookup(asset_ids, returns.rows[r][static_cast<size_t>(id)], returns, r, "asset",
                                   files.assets.string());
            if (set[static_cast<size_t>(k)])
                throw InputError(where(returns, r) + ": duplicate return for asset '" + m.assets[static_cast<size_t>(k)].id + "'");
            m.assets[static_cast<size_t>(k)].expected_return =
                parse_number(returns.rows[r][static_cast<size_t>(er)], returns, r, "expected_return");
            set[static_cast<size_t>(k)] = true;
        }
        for (size_t k = 0; k < set.size(); ++k)
            if (!set[k]) throw InputError(returns.source + ": no expected return for asset '" + m.assets[k].id + "'");
        data.has_returns = true;
    }

    if (!files.covariance.empty()) {
        const CsvTable cov = read_csv(files.covariance);
        if (cov.header.empty() || cov.header[0] != "asset_id")
            throw InputError(cov.source + ":1: first header field must be 'asset_id'");
        const Index K = m.num_assets();
        std::vector<Index> col_asset;
        std::vector<bool> col_seen(static_cast<size_t>(K), false);
        for (size_t c = 1; c < cov.header.size(); ++c) {
            const auto it = asset_ids.find(cov.header[c]);
            if (it == asset_ids.end())
                throw InputError(cov.source + ":1: unknown asset id '" + cov.header[c] + "' (not in " + files.assets.string() + ")");
            if (col_seen[static_cast<size_t>(it->second)])
                throw InputError(cov.source + ":1: duplicate asset id '" + cov.header[c] + "'");
            col_seen[static_cast<size_t>(it->second)] = true;
            col_asset.push_back(it->second);
        }
        data.covariance = MatrixXd::Constant(K, K, std::numeric_limits<double>::quiet_NaN());
        std::vector<bool> row_seen(static_cast<size_t>(K), false);
        for (std::size_t r = 0; r < cov.rows.size(); ++r) {
            const Index k = lookup(asset_ids, cov.rows[r][0], cov, r, "asset", files.assets.string());
            if (row_seen[static_cast<size_t>(k)])
                throw InputError(where(cov, r) + ": duplicate row for asset '" + cov.rows[r][0] + "'");
            row_seen[static_cast<size_t>(k)] = true;
            for (size_t c = 1; c < cov.header.size(); ++c) {
                const std::string& field = cov.rows[r][c];
                if (field.empty())
                    throw InputError(where(cov, r) + ": missing covariance entry for (" + cov.rows[r][0] + ", " +
                                     cov.header[c] + ")");
                data.covariance(k, col_asset[c - 1]) = parse_number(field, cov, r, cov.header[c]);
            }
        }
        for (Index k = 0; k < K; ++k) {
            const std::string& id = m.assets[static_cast<size_t>(k)].id;
            if (!row_seen[static_cast<size_t>(k)]) throw InputError(cov.source + ": missing covariance row for asset '" + id + "'");
            if (!col_seen[static_cast<size_t>(k)]) throw InputError(cov.source + ": missing covariance column for asset '" + id + "'");
        }
    }

    require_valid(m);
    return data;
}

void write_holdings(const BipartiteMarket& market, const std::filesystem::path& path) {
    std::ofstream out = open_output(path);
    out << "bank_id,asset_id,value\n";
    for (Index i = 0; i < market.num_banks(); ++i)
        for (Index k = 0; k < market.num_assets(); ++k)
            if (market.holdings(k, i) != 0.0)
                out << market.banks[static_cast<size_t>(i)].id << ',' << market.assets[static_cast<size_t>(k)].id << ','
                    << format_number(market.holdings(k, i)) << '\n';
    finish(out, path);
}

MarketFiles write_market(const MarketData& data, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const BipartiteMarket& m = data.market;
    MarketFiles files{dir / "holdings.csv", dir / "banks.csv", dir / "assets.csv", {}, {}};

    write_holdings(m, files.holdings);
    {
        std::ofstream out = open_output(files.banks);
        out << "bank_id,equity,other_assets\n";
        for (const Bank& b : m.banks)
            out << b.id << ',' << format_number(b.equity) << ',' << format_number(b.other_assets) << '\n';
        finish(out, files.banks);
    }
    {
        std::ofstream out = open_output(files.assets);
        out << "asset_id,adv,volatility,depth\n";
        for (const Asset& a : m.assets)
            out << a.id << ',' << format_number(a.adv) << ',' << format_number(a.volatility) << ','
                << (a.depth_given ? format_number(a.depth) : std::string()) << '\n';
        finish(out, files.assets);
    }
    if (data.has_returns) {
        files.returns = dir / "returns.csv";
        std::ofstream out = open_output(files.returns);
        out << "asset_id,expected_return\n";
        for (const Asset& a : m.assets) out << a.id << ',' << format_number(a.expected_return) << '\n';
        finish(out, files.returns);
    }
    if (data.covariance.size() > 0) {
        files.covariance = dir / "covariance.csv";
        std::ofstream out = open_output(files.covariance);
        out << "asset_id";
        for (const Asset& a : m.assets) out << ',' << a.id;
        out << '\n';
        for (Index k = 0; k < m.num_assets(); ++k) {
            out << m.assets[static_cast<size_t>(k)].id;
            for (Index l = 0; l < m.num_assets(); ++l) out << ',' << format_number(data.covariance(k, l));
            out << '\n';
        }
        finish(out, files.covariance);
    }
    return files;
}

}  // namespace sysrisk
