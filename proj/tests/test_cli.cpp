#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "v3lplab/amm.hpp"
#include "v3lplab/config.hpp"
#include "v3lplab/data.hpp"
#include "v3lplab/report.hpp"
#include "v3lplab/stages.hpp"
#include "v3lplab/synthetic.hpp"
#include "support.hpp"

using namespace v3lplab;

namespace {

#ifndef V3LPLAB_CLI_BIN
#error "tests must be compiled with -DV3LPLAB_CLI_BIN=..."
#endif

std::string cli_bin() { return V3LPLAB_CLI_BIN; }

struct CmdResult {
    int status = -1;
    std::string out;
    std::string err;
};

// Runs through the shell with output captured to files under dir.
CmdResult run_cmd(const std::string& command, const std::string& dir) {
    const std::string out_path = dir + "/cmd_out.txt";
    const std::string err_path = dir + "/cmd_err.txt";
    const int rc = std::system((command + " > " + out_path + " 2> " + err_path).c_str());
    CmdResult res;
    res.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    res.out = testsup::slurp(out_path);
    res.err = testsup::slurp(err_path);
    return res;
}

// A complete runnable configuration rooted at dir, small enough for
// subsecond stages.
std::string write_config(const std::string& dir, std::uint64_t seed, int hours = 400) {
    const std::string path = dir + "/run.json";
    std::ofstream out(path);
    out << R"({
  "pool": "ETH_USDC_03",
  "period": 1,
  "l0": 250,
  "agent": "ddqn",
  "seed": )" << seed
        << R"(,
  "paths": {
    "data_csv": ")" << dir << R"(/out/pool_hours.csv",
    "tables_dir": ")" << testsup::repo_dir() << R"(/config",
    "out_dir": ")" << dir << R"(/out"
  },
  "source": {"kind": "synthetic", "hours": )" << hours << R"(, "synth_seed": 11},
  "split": {"kind": "fractions", "train_frac": 0.6, "valid_frac": 0.2},
  "train": {"max_epochs": 2, "patience": 2}
})";
    return path;
}

config::ExperimentConfig load_config(const std::string& path) {
    return config::load_experiment(path);
}

data::PoolHourRow make_row(std::int64_t ts, double price) {
    data::PoolHourRow row;
    row.timestamp = ts;
    row.open = row.high = row.low = row.close = price;
    row.volume_usd = 1000.0;
    row.fees_usd = 3.0;
    row.active_liquidity = 1e6;
    row.tick = amm::price_to_tick(price);
    return row;
}

}  // namespace

TEST_CASE("bundled fixture regenerates byte-exactly from the default spec") {
    testsup::TempDir dir("cli-fixture");
    const std::string regenerated = dir.path() + "/regen.csv";
    data::write_pool_csv(regenerated, synth::generate(synth::SyntheticSpec{}));
    CHECK(testsup::slurp(regenerated) ==
          testsup::slurp(testsup::fixture_path("pool_hours_2000.csv")));
}

TEST_CASE("shipped example configuration parses cleanly") {
    const auto cfg = config::load_experiment(testsup::config_path("example_run.json"));
    CHECK(cfg.pool == "ETH_USDC_03");
    CHECK(cfg.l0 == 250.0);
    CHECK(cfg.paths.data_csv == "data/fixtures/pool_hours_2000.csv");
    CHECK(cfg.split.kind == "fractions");
}

TEST_CASE("feature rows pair with pool rows hour by hour") {
    std::vector<data::PoolHourRow> rows;
    for (int i = 0; i < 6; ++i) rows.push_back(make_row(1000 + i * 3600, 2000.0 + i));

    data::FeatureFrame frame;
    frame.names = {"f"};
    frame.timestamps = {1000 + 2 * 3600, 1000 + 4 * 3600};
    frame.values.resize(2, 1);
    frame.values << 0.5, 0.7;

    const auto aligned = stages::align_features(frame, rows);
    REQUIRE(aligned.rows.size() == 2);
    CHECK(aligned.rows[0].close == 2002.0);
    CHECK(aligned.rows[1].close == 2004.0);
    CHECK(aligned.features.values(1, 0) == 0.7);

    frame.timestamps[1] = 999;  // no matching pool row
    try {
        stages::align_features(frame, rows);
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("999") != std::string::npos);
    }
}

TEST_CASE("ingest stage writes the cleaned rows of the configured source") {
    testsup::TempDir dir("cli-ingest");
    const auto cfg = load_config(write_config(dir.path(), 1, 120));
    const auto summary = stages::run_ingest(cfg);
    CHECK(summary.rows_fetched == 120);
    CHECK(summary.rows_kept == 120);
    const auto rows = data::read_pool_csv(summary.csv_path);
    REQUIRE(rows.size() == 120);
    CHECK(rows.front().timestamp == data::parse_utc_date("2021-08-02"));

    // a csv source is cleaned: the corrupt and duplicate rows drop out
    auto dirty = rows;
    dirty.push_back(dirty.back());  // duplicate timestamp
    dirty.push_back(make_row(dirty.back().timestamp + 3600, 2000.0));
    dirty.back().close = std::nan("");
    const std::string dirty_path = dir.path() + "/dirty.csv";
    data::write_pool_csv(dirty_path, dirty);

    auto csv_cfg = cfg;
    csv_cfg.source.kind = "csv";
    csv_cfg.source.path = dirty_path;
    csv_cfg.paths.data_csv = dir.path() + "/out/clean.csv";
    const auto cleaned = stages::run_ingest(csv_cfg);
    CHECK(cleaned.rows_fetched == 122);
    CHECK(cleaned.rows_kept == 120);
}

TEST_CASE("feature stage prunes to the shipped list and normalizes on train only") {
    testsup::TempDir dir("cli-features");
    const auto cfg = load_config(write_config(dir.path(), 1));
    stages::run_ingest(cfg);
    const auto summary = stages::run_features(cfg);

    const auto table = config::load_feature_table(testsup::config_path("features.json"));
    CHECK(summary.kept == table.kept());
    CHECK(summary.rows == 400 - data::kWarmupRows);

    const auto frame = data::read_feature_csv(summary.features_path);
    CHECK(frame.names == table.kept());
    CHECK(frame.rows() == 350);

    // stats cover exactly the kept columns and fit the train slice: the
    // train rows of every column average to zero under them
    const auto stats = data::normalizer_from_json(testsup::slurp(summary.stats_path));
    CHECK(stats.names == table.kept());
    const auto split = stages::load_split(cfg);
    const Eigen::Index train_rows = split.train.features.rows();
    CHECK(train_rows == 210);  // floor(0.6 * 350)
    for (Eigen::Index c = 0; c < split.train.features.cols(); ++c)
        CHECK(std::abs(split.train.features.values.col(c).head(train_rows).mean()) < 1e-9);
}

TEST_CASE("split sizes follow the configured fractions") {
    testsup::TempDir dir("cli-split");
    const auto cfg = load_config(write_config(dir.path(), 1));
    stages::run_ingest(cfg);
    stages::run_features(cfg);
    const auto split = stages::load_split(cfg);
    CHECK(split.train.rows.size() == 210);
    CHECK(split.valid.rows.size() == 70);
    CHECK(split.test.rows.size() == 70);
    // slices are contiguous and ordered
    CHECK(split.train.rows.back().timestamp < split.valid.rows.front().timestamp);
    CHECK(split.valid.rows.back().timestamp < split.test.rows.front().timestamp);
}

TEST_CASE("calendar split anchors the warm-up before the period start") {
    testsup::TempDir dir("cli-period");
    // private tables: a small period and the shipped feature list
    const std::string tables = dir.path() + "/tables";
    std::filesystem::create_directories(tables);
    report::write_text_file(
        tables + "/periods.json",
        R"({"ETH_USDC_03": {"1": {"start": "2021-09-01", "end": "2021-09-08",
            "train": 100, "valid": 20, "test": 20}}})");
    report::write_text_file(tables + "/features.json",
                            testsup::slurp(testsup::config_path("features.json")));

    const std::string cfg_path = dir.path() + "/run.json";
    report::write_text_file(cfg_path, std::string(R"({
      "pool": "ETH_USDC_03", "period": 1, "l0": 250,
      "paths": {"data_csv": ")") + dir.path() + R"(/out/pool.csv",
                 "tables_dir": ")" + tables + R"(",
                 "out_dir": ")" + dir.path() + R"(/out"},
      "source": {"kind": "synthetic", "hours": 190, "synth_seed": 3},
      "split": {"kind": "period"}
    })");
    const auto cfg = config::load_experiment(cfg_path);
    stages::run_ingest(cfg);
    stages::run_features(cfg);
    const auto split = stages::load_split(cfg);

    const std::int64_t start = data::parse_utc_date("2021-09-01");
    CHECK(split.train.rows.size() == 100);
    CHECK(split.valid.rows.size() == 20);
    CHECK(split.test.rows.size() == 20);
    // the first train hour is exactly the period start: generation began
    // kWarmupRows hours earlier and the indicator warm-up consumed them
    CHECK(split.train.rows.front().timestamp == start);
    CHECK(split.train.features.timestamps.front() == start);
}

TEST_CASE("train stage leaves checkpoint, log and manifest") {
    testsup::TempDir dir("cli-train");
    const std::string cfg_path = write_config(dir.path(), 5);
    const auto cfg = load_config(cfg_path);
    stages::run_ingest(cfg);
    stages::run_features(cfg);
    const auto summary = stages::run_train(cfg, testsup::slurp(cfg_path));
    CHECK(summary.epochs_run == 2);
    CHECK(summary.best_epoch >= 0);

    // log: header plus one row per epoch
    const std::string log = testsup::slurp(summary.log_path);
    CHECK(log.rfind("epoch,td_loss,valid_pnl,epsilon\n", 0) == 0);
    CHECK(std::count(log.begin(), log.end(), '\n') == 3);

    // checkpoint reloads into a fresh agent through the backtest path
    const auto backtest = stages::run_backtest(cfg, "ddqn", "{}");
    CHECK(backtest.metrics.steps == 69);

    const auto manifest =
        nlohmann::json::parse(testsup::slurp(cfg.paths.out_dir + "/manifest_train.json"));
    CHECK(manifest.at("format") == "v3lplab.manifest");
    CHECK(manifest.at("seed") == 5);
    CHECK(manifest.at("inputs").size() == 3);
}

TEST_CASE("every strategy backtests with exact accounting on the artifacts") {
    testsup::TempDir dir("cli-backtest");
    const std::string cfg_path = write_config(dir.path(), 3);
    const auto cfg = load_config(cfg_path);
    stages::run_ingest(cfg);
    stages::run_features(cfg);
    stages::run_train(cfg, testsup::slurp(cfg_path));

    const std::vector<std::string> strategies = {
        "ddqn", "tau_reset", "ewa", "dp", "buy_and_hold", "daily_rebalance"};
    for (const std::string& strategy : strategies) {
        CAPTURE(strategy);
        const auto summary = stages::run_backtest(cfg, strategy, "{}");
        const auto doc = nlohmann::json::parse(testsup::slurp(summary.metrics_file));
        CHECK(doc.at("strategy") == strategy);
        CHECK(doc.at("l0") == 250.0);
        const double fee = doc.at("sum_fee").get<double>();
        const double gas = doc.at("sum_gas").get<double>();
        const double lvr = doc.at("sum_lvr").get<double>();
        CHECK(doc.at("pnl_hedged").get<double>() == fee - gas - lvr);
        CHECK(gas == doc.at("realloc_count").get<int>() * cfg.gas_flat);
        if (strategy == "buy_and_hold") {
            CHECK(summary.trace_file.empty());
        } else {
            const std::string trace = testsup::slurp(summary.trace_file);
            CHECK(trace.rfind("t,action,fee,gas,lvr,cash,fund,center,width,price\n", 0) == 0);
            CHECK(std::count(trace.begin(), trace.end(), '\n') ==
                  doc.at("steps").get<int>() + 1);
        }
    }

    CHECK_THROWS_AS(stages::run_backtest(cfg, "hodl", "{}"), std::invalid_argument);
    // the configured agent kind guards the checkpoint interpretation
    CHECK_THROWS_AS(stages::run_backtest(cfg, "mamba", "{}"), config::ConfigError);

    const auto report_summary = stages::run_report(cfg);
    CHECK(report_summary.rows == 6);
    const std::string csv = testsup::slurp(report_summary.csv_path);
    CHECK(csv.rfind("strategy,period,rel_fee,rel_gas,rel_lvr,rel_pnl\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
    // stable output: rerunning the aggregation reproduces the bytes
    const std::string again = testsup::slurp(stages::run_report(cfg).csv_path);
    CHECK(csv == again);
}

TEST_CASE("cli maps outcomes to exit codes") {
    testsup::TempDir dir("cli-codes");
    CHECK(run_cmd(cli_bin() + " --help", dir.path()).status == 0);
    CHECK(run_cmd(cli_bin() + " frobnicate", dir.path()).status == 2);
    CHECK(run_cmd(cli_bin() + " train --bogus", dir.path()).status == 2);
    CHECK(run_cmd(cli_bin() + " train", dir.path()).status == 2);  // missing --config

    const auto missing = run_cmd(cli_bin() + " train --config " + dir.path() + "/absent.json",
                                 dir.path());
    CHECK(missing.status == 1);
    CHECK(missing.err.rfind("error: ", 0) == 0);
    CHECK(std::count(missing.err.begin(), missing.err.end(), '\n') == 1);

    // config validation failures name the field on stderr
    report::write_text_file(dir.path() + "/bad.json",
                            R"({"pool": "P", "period": 1, "l0": -4})");
    const auto bad = run_cmd(cli_bin() + " train --config " + dir.path() + "/bad.json",
                             dir.path());
    CHECK(bad.status == 1);
    CHECK(bad.err.rfind("error: config.l0", 0) == 0);
}

TEST_CASE("cli pipeline runs end to end and trains deterministically") {
    testsup::TempDir dir("cli-e2e");
    const std::string cfg_path = write_config(dir.path(), 1, 300);
    const std::string base = cli_bin() + " ";

    CHECK(run_cmd(base + "ingest --config " + cfg_path, dir.path()).status == 0);
    CHECK(run_cmd(base + "features --config " + cfg_path, dir.path()).status == 0);

    // same seed twice: byte-identical training logs
    CHECK(run_cmd(base + "train --config " + cfg_path + " --seed 7", dir.path()).status == 0);
    const std::string first = testsup::slurp(dir.path() + "/out/training_log.csv");
    CHECK(run_cmd(base + "train --config " + cfg_path + " --seed 7", dir.path()).status == 0);
    CHECK(first == testsup::slurp(dir.path() + "/out/training_log.csv"));

    const auto backtest = run_cmd(
        base + "backtest --config " + cfg_path + " --strategy tau_reset", dir.path());
    CHECK(backtest.status == 0);
    CHECK(backtest.out.find("backtest tau_reset") != std::string::npos);

    const auto missing_strategy =
        run_cmd(base + "backtest --config " + cfg_path, dir.path());
    CHECK(missing_strategy.status == 1);
    CHECK(missing_strategy.err.rfind("error: strategy", 0) == 0);

    CHECK(run_cmd(base + "report --config " + cfg_path, dir.path()).status == 0);
    CHECK(std::filesystem::exists(dir.path() + "/out/report.csv"));
    CHECK(std::filesystem::exists(dir.path() + "/out/report.json"));

    // path overrides come from the environment, not the document
    const std::string alt = dir.path() + "/alt_out";
    const auto redirected = run_cmd("V3LPLAB_OUT_DIR=" + alt + " " + base + "report --config " +
                                        cfg_path,
                                    dir.path());
    CHECK(redirected.status == 1);  // fresh directory holds no metrics yet
    CHECK(redirected.err.find(alt) != std::string::npos);
}
