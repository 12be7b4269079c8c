#include "v3lplab/config.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace v3lplab::config {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& problem) {
    throw ConfigError("config." + path + ": " + problem);
}

json parse_document(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("config: document is not valid JSON");
    if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
    return doc;
}

void reject_unknown_keys(const json& obj, const std::string& prefix,
                         const std::vector<std::string>& known) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const auto& k : known) ok = ok || k == it.key();
        if (!ok) fail(prefix.empty() ? it.key() : prefix + "." + it.key(), "unknown field");
    }
}

std::string get_string(const json& obj, const std::string& path, const std::string& key,
                       const std::string& fallback, bool required) {
    if (!obj.contains(key)) {
        if (required) fail(path, "required field is missing");
        return fallback;
    }
    const json& v = obj.at(key);
    if (!v.is_string()) fail(path, "must be a string");
    std::string out = v.get<std::string>();
    if (out.empty()) fail(path, "must not be empty");
    return out;
}

double get_number(const json& obj, const std::string& path, const std::string& key,
                  double fallback, bool required) {
    if (!obj.contains(key)) {
        if (required) fail(path, "required field is missing");
        return fallback;
    }
    const json& v = obj.at(key);
    if (!v.is_number()) fail(path, "must be a number");
    double out = v.get<double>();
    if (!std::isfinite(out)) fail(path, "must be finite");
    return out;
}

int get_int(const json& obj, const std::string& path, const std::string& key, int fallback,
            bool required) {
    if (!obj.contains(key)) {
        if (required) fail(path, "required field is missing");
        return fallback;
    }
    const json& v = obj.at(key);
    if (!v.is_number_integer()) fail(path, "must be an integer");
    return v.get<int>();
}

std::uint64_t get_seed(const json& obj, const std::string& path, const std::string& key,
                       std::uint64_t fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) fail(path, "must be a nonnegative integer");
    if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)
        fail(path, "must be a nonnegative integer");
    return v.get<std::uint64_t>();
}

bool get_bool(const json& obj, const std::string& path, const std::string& key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_boolean()) fail(path, "must be a boolean");
    return v.get<bool>();
}

PathsSection parse_paths(const json& obj) {
    PathsSection out;
    reject_unknown_keys(obj, "paths", {"data_csv", "tables_dir", "out_dir"});
    out.data_csv = get_string(obj, "paths.data_csv", "data_csv", out.data_csv, false);
    out.tables_dir = get_string(obj, "paths.tables_dir", "tables_dir", out.tables_dir, false);
    out.out_dir = get_string(obj, "paths.out_dir", "out_dir", out.out_dir, false);
    return out;
}

SourceSection parse_source(const json& obj) {
    SourceSection out;
    reject_unknown_keys(obj, "source",
                        {"kind", "start_date", "synth_seed", "hours", "path", "url",
                         "pool_address", "page_size"});
    out.kind = get_string(obj, "source.kind", "kind", out.kind, false);
    if (out.kind != "synthetic" && out.kind != "csv" && out.kind != "subgraph")
        fail("source.kind", "expected \"synthetic\", \"csv\" or \"subgraph\"");
    out.start_date = get_string(obj, "source.start_date", "start_date", out.start_date, false);
    try {
        data::parse_utc_date(out.start_date);
    } catch (const std::exception&) {
        fail("source.start_date", "must be a YYYY-MM-DD date");
    }
    out.synth_seed = get_seed(obj, "source.synth_seed", "synth_seed", out.synth_seed);
    out.hours = get_int(obj, "source.hours", "hours", out.hours, false);
    if (out.hours < 1) fail("source.hours", "must be at least 1");
    out.path = get_string(obj, "source.path", "path", out.path, out.kind == "csv");
    bool remote = out.kind == "subgraph";
    out.url = get_string(obj, "source.url", "url", out.url, remote);
    out.pool_address =
        get_string(obj, "source.pool_address", "pool_address", out.pool_address, remote);
    out.page_size = get_int(obj, "source.page_size", "page_size", out.page_size, false);
    if (out.page_size < 1) fail("source.page_size", "must be at least 1");
    return out;
}

SplitSection parse_split(const json& obj) {
    SplitSection out;
    reject_unknown_keys(obj, "split", {"kind", "train_frac", "valid_frac"});
    out.kind = get_string(obj, "split.kind", "kind", out.kind, false);
    if (out.kind != "fractions" && out.kind != "period")
        fail("split.kind", "expected \"fractions\" or \"period\"");
    out.train_frac = get_number(obj, "split.train_frac", "train_frac", out.train_frac, false);
    out.valid_frac = get_number(obj, "split.valid_frac", "valid_frac", out.valid_frac, false);
    if (out.train_frac <= 0.0 || out.train_frac >= 1.0)
        fail("split.train_frac", "must lie strictly between 0 and 1");
    if (out.valid_frac <= 0.0 || out.valid_frac >= 1.0)
        fail("split.valid_frac", "must lie strictly between 0 and 1");
    if (out.train_frac + out.valid_frac >= 1.0)
        fail("split.valid_frac", "train_frac + valid_frac must leave room for a test slice");
    return out;
}

TrainSection parse_train(const json& obj) {
    TrainSection out;
    reject_unknown_keys(obj, "train",
                        {"max_epochs", "patience", "steps_per_epoch", "window_length"});
    out.max_epochs = get_int(obj, "train.max_epochs", "max_epochs", out.max_epochs, false);
    if (out.max_epochs < 1) fail("train.max_epochs", "must be at least 1");
    out.patience = get_int(obj, "train.patience", "patience", out.patience, false);
    if (out.patience < 1) fail("train.patience", "must be at least 1");
    out.steps_per_epoch =
        get_int(obj, "train.steps_per_epoch", "steps_per_epoch", out.steps_per_epoch, false);
    if (out.steps_per_epoch < 0) fail("train.steps_per_epoch", "must not be negative");
    out.window_length =
        get_int(obj, "train.window_length", "window_length", out.window_length, false);
    if (out.window_length < 1) fail("train.window_length", "must be at least 1");
    return out;
}

// Section accessor; a present key must hold an object.
json section(const json& doc, const std::string& key) {
    if (!doc.contains(key)) return json::object();
    const json& v = doc.at(key);
    if (!v.is_object()) fail(key, "must be an object");
    return v;
}

std::string slurp_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Table keys store l0 as the integer funding level ("250").
std::string l0_key(double l0) {
    double rounded = std::floor(l0);
    if (!(l0 > 0.0) || rounded != l0) fail("l0", "no table entry for non-integer funding level");
    std::ostringstream out;
    out << static_cast<long long>(rounded);
    return out.str();
}

}  // namespace

env::EnvConfig ExperimentConfig::env_config() const {
    env::EnvConfig out;
    out.mode = env::reward_mode_from_string(reward_mode);
    out.lambda = lambda;
    out.l0 = l0;
    out.gas_flat = gas_flat;
    out.tick_spacing = tick_spacing;
    out.max_width = max_width;
    out.literal_lvr_bonus = literal_lvr_bonus;
    return out;
}

ExperimentConfig experiment_from_json(const std::string& text) {
    json doc = parse_document(text);
    reject_unknown_keys(doc, "",
                        {"pool", "period", "l0", "agent", "reward_mode", "lambda", "gas_flat",
                         "max_width", "tick_spacing", "literal_lvr_bonus", "seed", "paths",
                         "source", "split", "train"});

    ExperimentConfig out;
    out.pool = get_string(doc, "pool", "pool", "", true);
    out.period = get_int(doc, "period", "period", 0, true);
    if (out.period < 1) fail("period", "must be a positive integer");
    out.l0 = get_number(doc, "l0", "l0", 0.0, true);
    if (out.l0 <= 0.0) fail("l0", "must be positive");
    out.agent = get_string(doc, "agent", "agent", out.agent, false);
    if (out.agent != "ddqn" && out.agent != "mamba")
        fail("agent", "expected \"ddqn\" or \"mamba\"");
    out.reward_mode = get_string(doc, "reward_mode", "reward_mode", out.reward_mode, false);
    if (out.reward_mode != "original" && out.reward_mode != "risk_penalized")
        fail("reward_mode", "expected \"original\" or \"risk_penalized\"");
    out.lambda = get_number(doc, "lambda", "lambda", out.lambda, false);
    if (out.lambda < 0.0) fail("lambda", "must not be negative");
    out.gas_flat = get_number(doc, "gas_flat", "gas_flat", out.gas_flat, false);
    if (out.gas_flat < 0.0) fail("gas_flat", "must not be negative");
    out.max_width = get_int(doc, "max_width", "max_width", out.max_width, false);
    if (out.max_width < 1) fail("max_width", "must be at least 1");
    out.tick_spacing = get_int(doc, "tick_spacing", "tick_spacing", out.tick_spacing, false);
    if (out.tick_spacing < 1) fail("tick_spacing", "must be at least 1");
    out.literal_lvr_bonus =
        get_bool(doc, "literal_lvr_bonus", "literal_lvr_bonus", out.literal_lvr_bonus);
    out.seed = get_seed(doc, "seed", "seed", out.seed);
    out.paths = parse_paths(section(doc, "paths"));
    out.source = parse_source(section(doc, "source"));
    out.split = parse_split(section(doc, "split"));
    out.train = parse_train(section(doc, "train"));
    return out;
}

ExperimentConfig load_experiment(const std::string& path) {
    ExperimentConfig out = experiment_from_json(slurp_file(path));
    if (const char* v = std::getenv("V3LPLAB_DATA_CSV"); v != nullptr && *v != '\0')
        out.paths.data_csv = v;
    if (const char* v = std::getenv("V3LPLAB_TABLES_DIR"); v != nullptr && *v != '\0')
        out.paths.tables_dir = v;
    if (const char* v = std::getenv("V3LPLAB_OUT_DIR"); v != nullptr && *v != '\0')
        out.paths.out_dir = v;
    return out;
}

DdqnTable load_ddqn_table(const std::string& path) {
    json doc = parse_document(slurp_file(path));
    reject_unknown_keys(doc, "",
                        {"hidden_units", "hidden_activation", "final_activation",
                         "learning_rate", "batch_size", "buffer_size", "discount",
                         "target_update_rate", "grad_clip_norm"});
    DdqnTable out;
    if (!doc.contains("hidden_units") || !doc.at("hidden_units").is_array())
        fail("hidden_units", "must be an array of integers");
    for (const json& v : doc.at("hidden_units")) {
        if (!v.is_number_integer() || v.get<int>() < 1)
            fail("hidden_units", "entries must be positive integers");
        out.hidden_units.push_back(v.get<int>());
    }
    if (out.hidden_units.empty()) fail("hidden_units", "must not be empty");
    out.hidden_activation =
        get_string(doc, "hidden_activation", "hidden_activation", "", true);
    out.final_activation = get_string(doc, "final_activation", "final_activation", "", true);
    out.learning_rate = get_number(doc, "learning_rate", "learning_rate", 0.0, true);
    if (out.learning_rate <= 0.0) fail("learning_rate", "must be positive");
    out.batch_size = get_int(doc, "batch_size", "batch_size", 0, true);
    if (out.batch_size < 1) fail("batch_size", "must be at least 1");
    if (!doc.contains("buffer_size") || !doc.at("buffer_size").is_number_integer())
        fail("buffer_size", "must be an integer");
    out.buffer_size = doc.at("buffer_size").get<std::int64_t>();
    if (out.buffer_size < 1) fail("buffer_size", "must be at least 1");
    out.discount = get_number(doc, "discount", "discount", 0.0, true);
    if (out.discount < 0.0 || out.discount >= 1.0) fail("discount", "must lie in [0, 1)");
    out.target_update_rate =
        get_number(doc, "target_update_rate", "target_update_rate", 0.0, true);
    if (out.target_update_rate <= 0.0 || out.target_update_rate > 1.0)
        fail("target_update_rate", "must lie in (0, 1]");
    out.grad_clip_norm = get_number(doc, "grad_clip_norm", "grad_clip_norm", 0.0, true);
    if (out.grad_clip_norm <= 0.0) fail("grad_clip_norm", "must be positive");
    return out;
}

int BaselineTables::tau(const std::string& pool, int period, double l0) const {
    const std::string key = l0_key(l0);
    auto it = tau_.find(pool + "/" + std::to_string(period) + "/" + key);
    if (it == tau_.end())
        fail("tau_reset",
             "no entry for " + pool + " period " + std::to_string(period) + " l0 " + key);
    return it->second;
}

baselines::EwaParams BaselineTables::ewa(const std::string& pool, int period, double l0) const {
    const std::string key = l0_key(l0);
    auto it = ewa_.find(pool + "/" + std::to_string(period) + "/" + key);
    if (it == ewa_.end())
        fail("ewa", "no entry for " + pool + " period " + std::to_string(period) + " l0 " + key);
    return it->second;
}

namespace {
// Both tables nest pool -> period -> l0; this walks the two outer levels.
void walk_table(const json& table, const std::string& name,
                const std::function<void(const std::string&, const json&)>& on_leaf) {
    if (!table.is_object()) fail(name, "must be an object");
    for (auto pool = table.begin(); pool != table.end(); ++pool) {
        if (!pool->is_object()) fail(name + "." + pool.key(), "must be an object");
        for (auto period = pool->begin(); period != pool->end(); ++period) {
            if (!period->is_object())
                fail(name + "." + pool.key() + "." + period.key(), "must be an object");
            for (auto level = period->begin(); level != period->end(); ++level)
                on_leaf(pool.key() + "/" + period.key() + "/" + level.key(), *level);
        }
    }
}
}  // namespace

BaselineTables load_baseline_tables(const std::string& path) {
    json doc = parse_document(slurp_file(path));
    reject_unknown_keys(doc, "", {"tau_reset", "ewa"});
    BaselineTables out;
    if (doc.contains("tau_reset")) {
        walk_table(doc.at("tau_reset"), "tau_reset", [&](const std::string& key, const json& v) {
            if (!v.is_number_integer() || v.get<int>() < 1)
                fail("tau_reset", "widths must be positive integers");
            out.tau_[key] = v.get<int>();
        });
    }
    if (doc.contains("ewa")) {
        walk_table(doc.at("ewa"), "ewa", [&](const std::string& key, const json& level) {
            const std::string where = "ewa." + key;
            if (!level.is_object()) fail(where, "entry must be an object");
            baselines::EwaParams params;
            params.n_arms = get_int(level, where + ".n_arms", "n_arms", 0, true);
            params.eta = get_number(level, where + ".eta", "eta", 0.0, true);
            params.reeval_hours = get_int(level, where + ".reeval_hours", "reeval_hours", 0, true);
            if (params.n_arms < 1) fail(where + ".n_arms", "must be at least 1");
            if (params.eta < 0.0) fail(where + ".eta", "must not be negative");
            if (params.reeval_hours < 1) fail(where + ".reeval_hours", "must be at least 1");
            out.ewa_[key] = params;
        });
    }
    return out;
}

std::vector<std::string> FeatureTable::kept() const {
    std::vector<std::string> out;
    for (const std::string& name : canonical_order) {
        bool drop = false;
        for (const std::string& d : dropped) drop = drop || d == name;
        if (!drop) out.push_back(name);
    }
    return out;
}

namespace {
std::vector<std::string> string_list(const json& doc, const std::string& key) {
    if (!doc.contains(key) || !doc.at(key).is_array())
        fail(key, "must be an array of strings");
    std::vector<std::string> out;
    for (const json& v : doc.at(key)) {
        if (!v.is_string() || v.get<std::string>().empty())
            fail(key, "entries must be non-empty strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}
}  // namespace

FeatureTable load_feature_table(const std::string& path) {
    json doc = parse_document(slurp_file(path));
    reject_unknown_keys(doc, "",
                        {"canonical_order", "optional", "dropped", "log_transform",
                         "correlation_threshold", "warmup_rows"});
    FeatureTable out;
    out.canonical_order = string_list(doc, "canonical_order");
    out.dropped = string_list(doc, "dropped");
    out.log_transform = string_list(doc, "log_transform");
    out.correlation_threshold =
        get_number(doc, "correlation_threshold", "correlation_threshold", 0.0, true);
    if (out.correlation_threshold <= 0.0 || out.correlation_threshold > 1.0)
        fail("correlation_threshold", "must lie in (0, 1]");
    out.warmup_rows = get_int(doc, "warmup_rows", "warmup_rows", 0, true);
    if (out.warmup_rows < 0) fail("warmup_rows", "must not be negative");
    for (const std::string& name : out.dropped) {
        bool known = false;
        for (const std::string& c : out.canonical_order) known = known || c == name;
        if (!known) fail("dropped", "lists a column outside canonical_order: " + name);
    }
    return out;
}

data::PeriodSpec load_period_spec(const std::string& path, const std::string& pool, int period) {
    json doc = parse_document(slurp_file(path));
    const json* node = nullptr;
    if (doc.contains(pool) && doc.at(pool).is_object()) {
        const json& entry = doc.at(pool);
        std::string key = std::to_string(period);
        if (entry.contains(key)) node = &entry.at(key);
    }
    if (node == nullptr)
        fail("periods", "no entry for " + pool + " period " + std::to_string(period));
    const std::string where = "periods." + pool + "." + std::to_string(period);
    data::PeriodSpec spec;
    spec.id = pool + "/" + std::to_string(period);
    spec.start_ts = data::parse_utc_date(get_string(*node, where + ".start", "start", "", true));
    spec.end_ts = data::parse_utc_date(get_string(*node, where + ".end", "end", "", true));
    spec.n_train = get_int(*node, where + ".train", "train", 0, true);
    spec.n_valid = get_int(*node, where + ".valid", "valid", 0, true);
    spec.n_test = get_int(*node, where + ".test", "test", 0, true);
    if (spec.n_train < 1) fail(where + ".train", "must be at least 1");
    if (spec.n_valid < 1) fail(where + ".valid", "must be at least 1");
    if (spec.n_test < 1) fail(where + ".test", "must be at least 1");
    return spec;
}

}  // namespace v3lplab::config
