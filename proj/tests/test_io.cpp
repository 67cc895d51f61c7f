#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "support.hpp"
#include "sysrisk/pipeline.hpp"

using namespace sysrisk;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) {
        path = fs::temp_directory_path() / ("sysrisk_test_" + name + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

void put(const fs::path& p, const std::string& text) {
    std::ofstream f(p);
    f << text;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

MarketFiles hand_fixture(const fs::path& dir) {
    put(dir / "banks.csv", "bank_id,equity,other_assets\nB1,100,1000\nB2,200,500\nB3,50,0\n");
    put(dir / "assets.csv", "asset_id,adv,volatility,depth\nA1,1000000,0.01,\nA2,2000000,0.02,50000000\n");
    put(dir / "holdings.csv", "bank_id,asset_id,value\nB1,A1,300\nB1,A2,200\n\nB2,A1,100\nB3,A2,400\n");
    put(dir / "returns.csv", "asset_id,expected_return\nA1,0.02\nA2,0.03\n");
    put(dir / "covariance.csv", "asset_id,A1,A2\nA1,0.0004,0.0001\nA2,0.0001,0.0009\n");
    return {dir / "holdings.csv", dir / "banks.csv", dir / "assets.csv", dir / "returns.csv", dir / "covariance.csv"};
}

RunConfig synthetic_config(const fs::path& dir, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    const SyntheticData syn = make_synthetic(spec);
    MarketData data;
    data.market = syn.market;
    data.covariance = syn.covariance;
    data.has_returns = true;
    RunConfig cfg;
    cfg.inputs = write_market(data, dir / "in");
    cfg.output_dir = dir / "out";
    cfg.sweep_c = {0.2, 0.4, 0.8};
    return cfg;
}

}  // namespace

TEST_SUITE("cli_io") {

TEST_CASE("hand fixture loads") {
    TempDir tmp("hand");
    const MarketData d = load_market(hand_fixture(tmp.path), 0.4);
    const BipartiteMarket& m = d.market;
    CHECK(m.num_assets() == 2);
    CHECK(m.num_banks() == 3);
    CHECK(m.banks[0].id == "B1");
    CHECK(m.banks[2].id == "B3");
    VectorXd banks(3), assets(2);
    banks << 500.0, 100.0, 400.0;
    assets << 400.0, 600.0;
    CHECK(m.bank_totals() == banks);
    CHECK(m.asset_totals() == assets);
    CHECK(m.holdings(1, 1) == 0.0);
    CHECK(m.assets[0].depth == doctest::Approx(4e7));
    CHECK_FALSE(m.assets[0].depth_given);
    CHECK(m.assets[1].depth == 5e7);
    CHECK(m.assets[1].depth_given);
    CHECK(m.banks[1].other_assets == 500.0);
    CHECK(d.has_returns);
    CHECK(m.assets[1].expected_return == 0.03);
    CHECK(d.covariance(0, 1) == 0.0001);
    REQUIRE(d.warnings.size() == 1);
    CHECK(d.warnings[0].find("A2") != std::string::npos);
}

TEST_CASE("input errors name the problem") {
    TempDir tmp("errors");
    const MarketFiles files = hand_fixture(tmp.path);

    put(files.holdings, "bank_id,asset_id,value\nB1,A1,300\nB9,A2,200\n");
    CHECK_THROWS_WITH_AS(load_market(files, 0.4), doctest::Contains("B9"), InputError);

    put(files.holdings, "bank_id,asset_id,value\nB1,A1,300\nB2,A2,abc\n");
    CHECK_THROWS_WITH_AS(load_market(files, 0.4), doctest::Contains(":3:"), InputError);

    put(files.holdings, "bank_id,asset_id,value\nB1,A1,300,7\n");
    CHECK_THROWS_AS(load_market(files, 0.4), InputError);

    put(files.holdings, "bank_id,asset_id,value\n");
    CHECK_THROWS_WITH_AS(load_market(files, 0.4), doctest::Contains("empty market"), DomainError);

    put(files.holdings, "bank_id,asset_id,value\nB1,A1,300\nB1,A1,200\n");
    CHECK_THROWS_WITH_AS(load_market(files, 0.4), doctest::Contains("duplicate"), InputError);

    hand_fixture(tmp.path);
    put(files.covariance, "asset_id,A1,A2\nA1,0.0004,\nA2,0.0001,0.0009\n");
    CHECK_THROWS_WITH_AS(load_market(files, 0.4), doctest::Contains("missing covariance entry"), InputError);

    put(files.covariance, "asset_id,A1,A2\nA1,0.0004,0.0001\n");
    CHECK_THROWS_WITH_AS(load_market(files, 0.4), doctest::Contains("A2"), InputError);

    hand_fixture(tmp.path);
    put(files.banks, "bank_id,equity,other_assets\nB1,100,1000\nB2,-5,500\nB3,50,0\n");
    CHECK_THROWS(load_market(files, 0.4));

    MarketFiles missing = files;
    missing.banks = tmp.path / "nope.csv";
    CHECK_THROWS_AS(load_market(missing, 0.4), InputError);
}

TEST_CASE("csv details") {
    TempDir tmp("csv");
    put(tmp.path / "t.csv", "\xEF\xBB\xBF" "a, b\n\n 1 ,2\n");
    const CsvTable t = read_csv(tmp.path / "t.csv");
    CHECK(t.header == std::vector<std::string>{"a", "b"});
    REQUIRE(t.rows.size() == 1);
    CHECK(t.lines[0] == 3);
    CHECK(t.column("b") == 1);
    CHECK(t.column("c") == -1);
    CHECK(parse_number(t.rows[0][0], t, 0, "a") == 1.0);
    CHECK_THROWS_AS(parse_number("nan", t, 0, "a"), InputError);
    CHECK_THROWS_AS(parse_number("1.5x", t, 0, "a"), InputError);
    for (double v : {0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300}) CHECK(std::stod(format_number(v)) == v);
}

TEST_CASE("write and read back") {
    TempDir tmp("roundtrip");
    SyntheticSpec spec;
    spec.seed = 5;
    const SyntheticData syn = make_synthetic(spec);
    MarketData data;
    data.market = syn.market;
    data.covariance = syn.covariance;
    data.has_returns = true;
    const MarketFiles files = write_market(data, tmp.path);
    const MarketData back = load_market(files, syn.market.depth_scale);
    CHECK(testing::max_rel_diff(back.market.holdings, data.market.holdings) <= 1e-12);
    CHECK(testing::max_rel_diff(back.covariance, data.covariance) <= 1e-12);
    CHECK(testing::max_rel_diff(back.market.depths(), data.market.depths()) <= 1e-12);
    CHECK(testing::max_rel_diff(back.market.equities(), data.market.equities()) <= 1e-12);
    CHECK(testing::max_rel_diff(back.market.expected_returns(), data.market.expected_returns()) <= 1e-12);
    for (size_t i = 0; i < data.market.banks.size(); ++i) CHECK(back.market.banks[i].id == data.market.banks[i].id);
}

TEST_CASE("config handling") {
    TempDir tmp("config");
    const MarketFiles files = hand_fixture(tmp.path);
    nlohmann::json j = {{"inputs",
                         {{"holdings", "holdings.csv"}, {"banks", "banks.csv"}, {"assets", "assets.csv"},
                          {"returns", "returns.csv"}}},
                        {"depth_scale", 0.5}};
    RunConfig cfg = config_from_json(j, tmp.path);
    CHECK(cfg.inputs.holdings == files.holdings);
    CHECK(cfg.depth_scale == 0.5);
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("inputs.covariance"), InputError);
    cfg.skip_optimize = true;
    CHECK_NOTHROW(cfg.validate());

    j["colour"] = "blue";
    CHECK_THROWS_WITH_AS(config_from_json(j, tmp.path), doctest::Contains("colour"), InputError);
    j.erase("colour");
    j["depth_scale"] = "wide";
    CHECK_THROWS_AS(config_from_json(j, tmp.path), InputError);

    RunConfig full;
    full.inputs = files;
    full.rng_seed = 9;
    full.scenario = ScenarioChoice::Extreme;
    const RunConfig again = config_from_json(config_to_json(full));
    CHECK(again.inputs.covariance == full.inputs.covariance);
    CHECK(again.rng_seed == 9);
    CHECK(again.scenario == ScenarioChoice::Extreme);
    CHECK(again.scenarios().size() == 1);
    CHECK(parse_scenario("both") == ScenarioChoice::Both);
    CHECK_THROWS_AS(parse_scenario("mild"), InputError);
}

TEST_CASE("pipeline reports") {
    TempDir tmp("reports");
    const RunConfig cfg = synthetic_config(tmp.path, 2);
    std::ostringstream log;
    REQUIRE(run_pipeline(cfg, log) == exit_code::ok);
    const fs::path out = cfg.output_dir;

    const CsvTable dr = read_csv(out / "debtrank.csv");
    CHECK(dr.header == std::vector<std::string>{"bank_id", "debtrank_original", "debtrank_optimized"});
    CHECK(dr.rows.size() == 8);
    for (size_t r = 0; r < dr.rows.size(); ++r) {
        const double a = parse_number(dr.rows[r][1], dr, r, "debtrank_original");
        const double b = parse_number(dr.rows[r][2], dr, r, "debtrank_optimized");
        CHECK((a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0));
    }
    for (const char* name : {"firesale_moderate_original.csv", "firesale_moderate_optimized.csv",
                             "firesale_extreme_original.csv", "firesale_extreme_optimized.csv"}) {
        const CsvTable t = read_csv(out / name);
        CHECK(t.column("final_market_fraction") >= 0);
        CHECK(t.rows.size() == 8);
    }
    CHECK(read_csv(out / "sweep_c.csv").rows.size() == 3);
    const MarketFiles opt{out / "holdings_optimized.csv", cfg.inputs.banks, cfg.inputs.assets, {}, {}};
    const MarketData reloaded = load_market(opt, cfg.depth_scale);
    const MarketData original = load_market(cfg.inputs, cfg.depth_scale);
    CHECK((reloaded.market.bank_totals() - original.market.bank_totals()).cwiseAbs().maxCoeff() <=
          1e-8 * original.market.holdings.maxCoeff());

    const nlohmann::json s = nlohmann::json::parse(slurp(out / "summary.json"));
    for (const char* key : {"timestamp", "config", "market", "original", "optimized", "debtrank_reduction_factor",
                            "rank_correlation", "optimizer"})
        CHECK(s.contains(key));
}

TEST_CASE("identical runs give identical reports") {
    TempDir tmp("determinism");
    RunConfig cfg = synthetic_config(tmp.path, 4);
    cfg.rng_seed = cfg.optimizer.rng_seed = 17;
    std::ostringstream log;
    cfg.output_dir = tmp.path / "a";
    REQUIRE(run_pipeline(cfg, log) == exit_code::ok);
    cfg.output_dir = tmp.path / "b";
    REQUIRE(run_pipeline(cfg, log) == exit_code::ok);
    for (const auto& entry : fs::directory_iterator(tmp.path / "a")) {
        const auto name = entry.path().filename();
        if (name == "summary.json") {
            auto a = nlohmann::json::parse(slurp(entry.path()));
            auto b = nlohmann::json::parse(slurp(tmp.path / "b" / name));
            a.erase("timestamp");
            b.erase("timestamp");
            a["config"].erase("output_dir");
            b["config"].erase("output_dir");
            CHECK(a == b);
        } else {
            CHECK(slurp(entry.path()) == slurp(tmp.path / "b" / name));
        }
    }
}

TEST_CASE("exit codes") {
    TempDir tmp("exit");
    RunConfig cfg = synthetic_config(tmp.path, 6);
    std::ostringstream log;

    RunConfig bad = cfg;
    bad.inputs.holdings = tmp.path / "missing.csv";
    CHECK(run_pipeline(bad, log) == exit_code::input);

    RunConfig no_cov = cfg;
    no_cov.inputs.covariance.clear();
    CHECK(run_pipeline(no_cov, log) == exit_code::input);
    CHECK(log.str().find("inputs.covariance") != std::string::npos);

    put(tmp.path / "blocker", "x");
    RunConfig unwritable = cfg;
    unwritable.output_dir = tmp.path / "blocker" / "out";
    CHECK(run_pipeline(unwritable, log) == exit_code::io);
}

TEST_CASE("skipping the optimizer and an empty sweep") {
    TempDir tmp("skip");
    RunConfig cfg = synthetic_config(tmp.path, 8);
    cfg.skip_optimize = true;
    cfg.inputs.returns.clear();
    cfg.inputs.covariance.clear();
    cfg.sweep_c.clear();
    cfg.scenario = ScenarioChoice::Moderate;
    std::ostringstream log;
    REQUIRE(run_pipeline(cfg, log) == exit_code::ok);
    CHECK_FALSE(fs::exists(cfg.output_dir / "holdings_optimized.csv"));
    CHECK_FALSE(fs::exists(cfg.output_dir / "firesale_extreme_original.csv"));
    CHECK(slurp(cfg.output_dir / "sweep_c.csv") == "c,mean_debtrank_original,mean_debtrank_optimized\n");
    const CsvTable dr = read_csv(cfg.output_dir / "debtrank.csv");
    CHECK(dr.rows.size() == 8);
    CHECK(dr.rows[0][2].empty());
    const nlohmann::json s = nlohmann::json::parse(slurp(cfg.output_dir / "summary.json"));
    CHECK(s["optimized"].is_null());
}

}
