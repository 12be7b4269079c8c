// v3lplab command line: ingest -> features -> train -> backtest -> report,
// each stage driven by one JSON config and leaving artifacts in out_dir.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <string>

#include "v3lplab/config.hpp"
#include "v3lplab/stages.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string strategy;
    long long seed = -1;  // negative means "keep the config's seed"
    std::string out_dir;
};

// Loads the config and applies the flag overrides that beat the file.
v3lplab::config::ExperimentConfig load(const CommonArgs& args, std::string* text_out) {
    std::ifstream in(args.config_path, std::ios::binary);
    if (!in) throw v3lplab::config::ConfigError("config: cannot open " + args.config_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    *text_out = buf.str();

    auto cfg = v3lplab::config::experiment_from_json(*text_out);
    // env overrides apply to paths only, mirroring load_experiment
    if (const char* v = std::getenv("V3LPLAB_DATA_CSV"); v != nullptr && *v != '\0')
        cfg.paths.data_csv = v;
    if (const char* v = std::getenv("V3LPLAB_TABLES_DIR"); v != nullptr && *v != '\0')
        cfg.paths.tables_dir = v;
    if (const char* v = std::getenv("V3LPLAB_OUT_DIR"); v != nullptr && *v != '\0')
        cfg.paths.out_dir = v;
    if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
    if (!args.out_dir.empty()) cfg.paths.out_dir = args.out_dir;
    return cfg;
}

void add_common_flags(CLI::App* cmd, CommonArgs* args, bool with_strategy) {
    cmd->add_option("--config", args->config_path, "Path to the run configuration JSON")
        ->required();
    cmd->add_option("--seed", args->seed, "Override the config's master seed");
    cmd->add_option("--out", args->out_dir, "Override the config's output directory");
    if (with_strategy)
        cmd->add_option("--strategy", args->strategy,
                        "Strategy to replay: ddqn, mamba, tau_reset, ewa, dp, "
                        "buy_and_hold or daily_rebalance");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive liquidity provision lab for concentrated-liquidity pools"};
    app.require_subcommand(1);

    CommonArgs args;
    CLI::App* ingest = app.add_subcommand("ingest", "Fetch or generate hourly pool rows");
    CLI::App* features =
        app.add_subcommand("features", "Compute, prune and normalize indicator features");
    CLI::App* train = app.add_subcommand("train", "Train the configured agent");
    CLI::App* backtest =
        app.add_subcommand("backtest", "Replay one strategy over the test slice");
    CLI::App* report = app.add_subcommand("report", "Aggregate metrics into relative tables");
    add_common_flags(ingest, &args, false);
    add_common_flags(features, &args, false);
    add_common_flags(train, &args, false);
    add_common_flags(backtest, &args, true);
    add_common_flags(report, &args, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, exit 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the usage error
        return 2;
    }

    try {
        std::string config_text;
        const auto cfg = load(args, &config_text);
        namespace stages = v3lplab::stages;

        if (ingest->parsed()) {
            const auto summary = stages::run_ingest(cfg);
            std::printf("ingest: kept %d of %d rows -> %s\n", summary.rows_kept,
                        summary.rows_fetched, summary.csv_path.c_str());
        } else if (features->parsed()) {
            const auto summary = stages::run_features(cfg);
            std::printf("features: %d rows x %d columns -> %s\n", summary.rows,
                        static_cast<int>(summary.kept.size()), summary.features_path.c_str());
        } else if (train->parsed()) {
            const auto summary = stages::run_train(cfg, config_text);
            std::printf("train: %d epochs, best epoch %d (score %.6f) -> %s\n",
                        summary.epochs_run, summary.best_epoch, summary.best_score,
                        summary.checkpoint.c_str());
        } else if (backtest->parsed()) {
            if (args.strategy.empty())
                throw v3lplab::config::ConfigError("strategy: --strategy is required");
            const auto summary = stages::run_backtest(cfg, args.strategy, config_text);
            std::printf("backtest %s: pnl_hedged %.6f (fee %.6f gas %.6f lvr %.6f) -> %s\n",
                        args.strategy.c_str(), summary.metrics.pnl_hedged(),
                        summary.metrics.sum_fee, summary.metrics.sum_gas,
                        summary.metrics.sum_lvr, summary.metrics_file.c_str());
        } else {
            const auto summary = stages::run_report(cfg);
            std::printf("report: %d strategy rows -> %s\n", summary.rows,
                        summary.csv_path.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
