#include "v3lplab/stages.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "v3lplab/agents.hpp"
#include "v3lplab/baselines.hpp"
#include "v3lplab/report.hpp"
#include "v3lplab/subgraph.hpp"
#include "v3lplab/synthetic.hpp"

namespace v3lplab::stages {
namespace {

using config::ConfigError;
using config::ExperimentConfig;
using nlohmann::json;

constexpr std::int64_t kHour = 3600;

void ensure_parent_dirs(const std::string& file_path) {
    const auto parent = std::filesystem::path(file_path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

void ensure_out_dir(const ExperimentConfig& cfg) {
    std::filesystem::create_directories(cfg.paths.out_dir);
}

std::string tables_file(const ExperimentConfig& cfg, const std::string& name) {
    return cfg.paths.tables_dir + "/" + name;
}

data::PeriodSpec period_spec(const ExperimentConfig& cfg) {
    return config::load_period_spec(tables_file(cfg, "periods.json"), cfg.pool, cfg.period);
}

data::EnvSplit split_env_data(const ExperimentConfig& cfg, const data::EnvData& aligned) {
    if (cfg.split.kind == "period") return data::split_dataset(aligned, period_spec(cfg));
    return data::split_fractions(aligned, cfg.split.train_frac, cfg.split.valid_frac);
}

// Divisors that bring the four account dimensions appended to the
// feature vector down to unit scale; the features are already z-scored.
Eigen::VectorXd observation_scale(const ExperimentConfig& cfg, Eigen::Index obs_dim) {
    Eigen::VectorXd scale = Eigen::VectorXd::Ones(obs_dim);
    scale[obs_dim - 4] = cfg.l0;         // cash
    scale[obs_dim - 3] = 10000.0;        // center tick
    scale[obs_dim - 2] = cfg.max_width;  // width
    scale[obs_dim - 1] = cfg.l0;         // fund
    return scale;
}

agents::AgentConfig agent_config(const ExperimentConfig& cfg, Eigen::Index obs_dim) {
    const auto table = config::load_ddqn_table(tables_file(cfg, "ddqn.json"));
    if (table.hidden_units.size() != 2 || table.hidden_units[0] != table.hidden_units[1])
        throw ConfigError("config.hidden_units: the value network uses two equal hidden layers");
    if (table.hidden_activation != "relu")
        throw ConfigError("config.hidden_activation: only \"relu\" is available");
    if (table.final_activation != "none")
        throw ConfigError("config.final_activation: only \"none\" is available");

    agents::AgentConfig out;
    out.hidden = table.hidden_units[0];
    out.gamma = table.discount;
    out.learning_rate = table.learning_rate;
    out.clip_norm = table.grad_clip_norm;
    out.target_update_rate = table.target_update_rate;
    out.batch_size = table.batch_size;
    out.buffer_capacity = static_cast<std::size_t>(table.buffer_size);
    out.window_length = cfg.train.window_length;
    out.input_scale = observation_scale(cfg, obs_dim);
    return out;
}

std::unique_ptr<agents::Agent> make_agent(const ExperimentConfig& cfg, Eigen::Index obs_dim,
                                          int actions) {
    const auto ac = agent_config(cfg, obs_dim);
    if (cfg.agent == "mamba")
        return std::make_unique<agents::SeqDdqnAgent>(obs_dim, actions, ac, cfg.seed);
    return std::make_unique<agents::DdqnAgent>(obs_dim, actions, ac, cfg.seed);
}

std::string slurp_artifact(const std::string& path, const std::string& stage) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error(stage + ": missing artifact " + path +
                                 " (run the earlier stages first)");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Strategies whose width must be representable as an environment action.
void check_width_fits(const std::string& strategy, int width, int max_width) {
    if (width > max_width)
        throw ConfigError("config.max_width: " + strategy + " width " + std::to_string(width) +
                          " exceeds max_width " + std::to_string(max_width));
}

json metrics_to_json(const ExperimentConfig& cfg, const std::string& strategy,
                     const env::EpisodeMetrics& m) {
    json out;
    out["format"] = "v3lplab.metrics";
    out["version"] = 1;
    out["strategy"] = strategy;
    out["pool"] = cfg.pool;
    out["period"] = cfg.period;
    out["l0"] = cfg.l0;
    out["sum_fee"] = m.sum_fee;
    out["sum_gas"] = m.sum_gas;
    out["sum_lvr"] = m.sum_lvr;
    out["sum_directional"] = m.sum_directional;
    out["realloc_count"] = m.realloc_count;
    out["steps"] = m.steps;
    out["pnl_hedged"] = m.pnl_hedged();
    out["pnl_unhedged"] = m.pnl_unhedged();
    return out;
}

}  // namespace

std::string features_csv_path(const ExperimentConfig& cfg) {
    return cfg.paths.out_dir + "/features.csv";
}
std::string feature_stats_path(const ExperimentConfig& cfg) {
    return cfg.paths.out_dir + "/feature_stats.json";
}
std::string checkpoint_path(const ExperimentConfig& cfg) {
    return cfg.paths.out_dir + "/checkpoint.json";
}
std::string training_log_path(const ExperimentConfig& cfg) {
    return cfg.paths.out_dir + "/training_log.csv";
}
std::string metrics_path(const ExperimentConfig& cfg, const std::string& strategy) {
    return cfg.paths.out_dir + "/metrics_" + strategy + ".json";
}
std::string trace_path(const ExperimentConfig& cfg, const std::string& strategy) {
    return cfg.paths.out_dir + "/trace_" + strategy + ".csv";
}
std::string report_csv_path(const ExperimentConfig& cfg) {
    return cfg.paths.out_dir + "/report.csv";
}
std::string report_json_path(const ExperimentConfig& cfg) {
    return cfg.paths.out_dir + "/report.json";
}

data::EnvData align_features(const data::FeatureFrame& frame,
                             const std::vector<data::PoolHourRow>& rows) {
    data::EnvData out;
    out.features = frame;
    out.rows.reserve(frame.timestamps.size());
    std::size_t r = 0;
    for (std::int64_t ts : frame.timestamps) {
        while (r < rows.size() && rows[r].timestamp < ts) ++r;
        if (r == rows.size() || rows[r].timestamp != ts)
            throw std::invalid_argument("align: no pool row for feature hour " +
                                        std::to_string(ts));
        out.rows.push_back(rows[r]);
    }
    return out;
}

IngestSummary run_ingest(const ExperimentConfig& cfg) {
    const config::SourceSection& src = cfg.source;
    std::vector<data::PoolHourRow> raw;
    if (cfg.source.kind == "synthetic") {
        synth::SyntheticSpec spec;
        spec.seed = src.synth_seed;
        spec.hours = src.hours;
        spec.start_ts = data::parse_utc_date(src.start_date);
        // under a calendar split the warm-up must be spent before the
        // period opens, so generation starts kWarmupRows hours early
        if (cfg.split.kind == "period")
            spec.start_ts = period_spec(cfg).start_ts - data::kWarmupRows * kHour;
        raw = synth::generate(spec);
    } else if (cfg.source.kind == "csv") {
        raw = data::read_pool_csv(src.path);
    } else {
        subgraph::FetchConfig fetch;
        fetch.endpoint_url = src.url;
        fetch.pool_id = src.pool_address;
        fetch.page_size = src.page_size;
        fetch.from_ts = data::parse_utc_date(src.start_date);
        if (cfg.split.kind == "period")
            fetch.from_ts = period_spec(cfg).start_ts - data::kWarmupRows * kHour;
        fetch.to_ts = fetch.from_ts + static_cast<std::int64_t>(src.hours) * kHour;
        raw = subgraph::fetch_pool_hours(fetch);
    }

    const auto clean = data::clean_rows(raw);
    ensure_parent_dirs(cfg.paths.data_csv);
    data::write_pool_csv(cfg.paths.data_csv, clean);

    IngestSummary out;
    out.rows_fetched = static_cast<int>(raw.size());
    out.rows_kept = static_cast<int>(clean.size());
    out.csv_path = cfg.paths.data_csv;
    return out;
}

FeatureSummary run_features(const ExperimentConfig& cfg) {
    slurp_artifact(cfg.paths.data_csv, "features");
    const auto rows = data::read_pool_csv(cfg.paths.data_csv);
    const auto table = config::load_feature_table(tables_file(cfg, "features.json"));

    const auto full = data::compute_features(rows);
    const auto kept_frame = data::select_features(full, table.kept());
    const auto aligned = align_features(kept_frame, rows);
    const auto split = split_env_data(cfg, aligned);

    // log columns that survived pruning, in table order
    std::vector<std::string> log_features;
    for (const std::string& name : table.log_transform)
        if (kept_frame.column_index(name) >= 0) log_features.push_back(name);

    const auto stats = data::fit_normalizer(split.train.features, log_features);
    const auto normalized = data::apply_normalizer(stats, kept_frame);

    ensure_out_dir(cfg);
    data::write_feature_csv(features_csv_path(cfg), normalized);
    report::write_text_file(feature_stats_path(cfg), data::normalizer_to_json(stats));

    FeatureSummary out;
    out.rows = static_cast<int>(normalized.rows());
    out.kept = table.kept();
    out.features_path = features_csv_path(cfg);
    out.stats_path = feature_stats_path(cfg);
    return out;
}

data::EnvSplit load_split(const ExperimentConfig& cfg) {
    slurp_artifact(cfg.paths.data_csv, "pipeline");
    slurp_artifact(features_csv_path(cfg), "pipeline");
    const auto rows = data::read_pool_csv(cfg.paths.data_csv);
    const auto frame = data::read_feature_csv(features_csv_path(cfg));
    return split_env_data(cfg, align_features(frame, rows));
}

TrainSummary run_train(const ExperimentConfig& cfg, const std::string& config_text) {
    const auto split = load_split(cfg);
    const env::EnvConfig env_cfg = cfg.env_config();
    env::LpEnv train_env(split.train, env_cfg);
    env::LpEnv valid_env(split.valid, env_cfg);

    auto agent = make_agent(cfg, train_env.obs_dim(), train_env.action_count());

    agents::TrainConfig tc;
    tc.max_epochs = cfg.train.max_epochs;
    tc.patience = cfg.train.patience;
    tc.steps_per_epoch = cfg.train.steps_per_epoch > 0
                             ? cfg.train.steps_per_epoch
                             : static_cast<int>(split.train.rows.size()) - 1;
    const auto result = agents::train_agent(*agent, train_env, valid_env, tc);

    ensure_out_dir(cfg);
    agent->save(checkpoint_path(cfg));
    report::write_text_file(training_log_path(cfg), report::training_log_csv(result.log));
    report::write_text_file(
        cfg.paths.out_dir + "/manifest_train.json",
        report::manifest_json(config_text, cfg.seed,
                              {{"pool_hours", cfg.paths.data_csv},
                               {"features", features_csv_path(cfg)},
                               {"feature_stats", feature_stats_path(cfg)}}));

    TrainSummary out;
    out.epochs_run = static_cast<int>(result.log.size());
    out.best_epoch = result.best_epoch;
    out.best_score = result.best_score;
    out.checkpoint = checkpoint_path(cfg);
    out.log_path = training_log_path(cfg);
    return out;
}

BacktestSummary run_backtest(const ExperimentConfig& cfg, const std::string& strategy,
                             const std::string& config_text) {
    const auto split = load_split(cfg);
    const env::EnvConfig env_cfg = cfg.env_config();

    env::EpisodeMetrics metrics;
    std::vector<env::TraceRow> trace;
    std::vector<report::ManifestInput> extra_inputs;

    if (strategy == "ddqn" || strategy == "mamba") {
        if (strategy != cfg.agent)
            throw ConfigError("config.agent: configured agent is \"" + cfg.agent +
                              "\" but the backtest asked for \"" + strategy + "\"");
        env::LpEnv test_env(split.test, env_cfg);
        auto agent = make_agent(cfg, test_env.obs_dim(), test_env.action_count());
        slurp_artifact(checkpoint_path(cfg), "backtest");
        agent->load(checkpoint_path(cfg));
        metrics = agents::evaluate(test_env, *agent);
        trace = test_env.trace();
        extra_inputs.push_back({"checkpoint", checkpoint_path(cfg)});
    } else if (strategy == "tau_reset") {
        const auto tables = config::load_baseline_tables(tables_file(cfg, "baselines.json"));
        const int tau = tables.tau(cfg.pool, cfg.period, cfg.l0);
        check_width_fits(strategy, tau, env_cfg.max_width);
        env::LpEnv lp_env(split.test, env_cfg);
        metrics = baselines::run_policy(
            lp_env, [tau](const env::LpEnv& e) { return baselines::tau_reset_action(e, tau); });
        trace = lp_env.trace();
    } else if (strategy == "ewa") {
        const auto tables = config::load_baseline_tables(tables_file(cfg, "baselines.json"));
        const auto params = tables.ewa(cfg.pool, cfg.period, cfg.l0);
        const auto result = baselines::ewa_run(split.test, env_cfg, params, cfg.seed);
        metrics = result.metrics;
        trace = result.trace;
    } else if (strategy == "dp") {
        const auto model = baselines::dp_solve(split.train, env_cfg, baselines::DpConfig{});
        env::LpEnv lp_env(split.test, env_cfg);
        metrics = baselines::run_policy(lp_env, [&model](const env::LpEnv& e) {
            return baselines::dp_policy_action(model, e);
        });
        trace = lp_env.trace();
    } else if (strategy == "buy_and_hold") {
        metrics = baselines::buy_and_hold(split.test, cfg.l0);
    } else if (strategy == "daily_rebalance") {
        // daily width mirrors the tuned tau for the same key, for comparability
        const auto tables = config::load_baseline_tables(tables_file(cfg, "baselines.json"));
        const int width = tables.tau(cfg.pool, cfg.period, cfg.l0);
        check_width_fits(strategy, width, env_cfg.max_width);
        env::LpEnv lp_env(split.test, env_cfg);
        metrics = baselines::run_policy(lp_env, [width](const env::LpEnv& e) {
            return e.time_index() % 24 == 0 ? width : 0;
        });
        trace = lp_env.trace();
    } else {
        throw std::invalid_argument("backtest: unknown strategy \"" + strategy +
                                    "\" (expected ddqn, mamba, tau_reset, ewa, dp, "
                                    "buy_and_hold or daily_rebalance)");
    }

    ensure_out_dir(cfg);
    BacktestSummary out;
    out.metrics = metrics;
    out.metrics_file = metrics_path(cfg, strategy);
    report::write_text_file(out.metrics_file,
                            metrics_to_json(cfg, strategy, metrics).dump(2) + "\n");
    if (!trace.empty()) {
        out.trace_file = trace_path(cfg, strategy);
        report::write_text_file(out.trace_file, report::trace_csv(trace));
    }

    std::vector<report::ManifestInput> inputs = {{"pool_hours", cfg.paths.data_csv},
                                                 {"features", features_csv_path(cfg)}};
    inputs.insert(inputs.end(), extra_inputs.begin(), extra_inputs.end());
    report::write_text_file(cfg.paths.out_dir + "/manifest_backtest_" + strategy + ".json",
                            report::manifest_json(config_text, cfg.seed, inputs));
    return out;
}

ReportSummary run_report(const ExperimentConfig& cfg) {
    std::vector<std::string> files;
    if (std::filesystem::is_directory(cfg.paths.out_dir)) {
        for (const auto& entry : std::filesystem::directory_iterator(cfg.paths.out_dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("metrics_", 0) == 0 && name.size() > 13 &&
                name.substr(name.size() - 5) == ".json")
                files.push_back(entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw std::runtime_error("report: no metrics_*.json under " + cfg.paths.out_dir);

    std::vector<report::StrategyResult> results;
    for (const std::string& file : files) {
        const json doc = json::parse(slurp_artifact(file, "report"), nullptr, false);
        if (doc.is_discarded()) throw std::runtime_error("report: " + file + " is not JSON");
        report::StrategyResult r;
        try {
            r.strategy = doc.at("strategy").get<std::string>();
            r.period = std::to_string(doc.at("period").get<int>());
            r.l0 = doc.at("l0").get<double>();
            r.metrics.sum_fee = doc.at("sum_fee").get<double>();
            r.metrics.sum_gas = doc.at("sum_gas").get<double>();
            r.metrics.sum_lvr = doc.at("sum_lvr").get<double>();
            r.metrics.sum_directional = doc.at("sum_directional").get<double>();
            r.metrics.realloc_count = doc.at("realloc_count").get<int>();
            r.metrics.steps = doc.at("steps").get<int>();
        } catch (const json::exception& e) {
            throw std::runtime_error("report: " + file + ": " + e.what());
        }
        results.push_back(r);
    }

    ReportSummary out;
    out.rows = static_cast<int>(results.size());
    out.csv_path = report_csv_path(cfg);
    out.json_path = report_json_path(cfg);
    report::write_text_file(out.csv_path, report::metrics_csv(results));
    report::write_text_file(out.json_path, report::metrics_json(results));
    return out;
}

}  // namespace v3lplab::stages
