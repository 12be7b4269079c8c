#include "v3lplab/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "v3lplab/indicators.hpp"

namespace v3lplab::data {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

int FeatureFrame::column_index(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    return -1;
}

namespace {

bool row_finite(const PoolHourRow& r) {
    return std::isfinite(r.open) && std::isfinite(r.high) && std::isfinite(r.low) &&
           std::isfinite(r.close) && std::isfinite(r.volume_usd) && std::isfinite(r.fees_usd) &&
           std::isfinite(r.active_liquidity);
}

}  // namespace

std::vector<PoolHourRow> clean_rows(const std::vector<PoolHourRow>& rows) {
    std::vector<PoolHourRow> out;
    out.reserve(rows.size());
    std::unordered_set<std::int64_t> seen;
    for (const PoolHourRow& r : rows) {
        if (!seen.insert(r.timestamp).second) continue;  // first occurrence wins
        if (!row_finite(r)) continue;
        out.push_back(r);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const PoolHourRow& a, const PoolHourRow& b) {
                         return a.timestamp < b.timestamp;
                     });
    return out;
}

const std::vector<std::string>& canonical_feature_names() {
    static const std::vector<std::string> names = {
        "hourly_open_price", "high_over_open", "low_over_open", "close_over_open",
        "hourly_volume_usd", "dema_over_open", "dmi", "aroon_osc", "bop", "cci_14",
        "cci_20", "cmo", "mom", "trix", "uo", "stoch_k", "stoch_d", "stoch_kd_diff",
        "smi_1", "smi_2", "smi_3", "natr", "tr", "psar_over_open", "adx", "apo",
        "ht_dcperiod", "ht_dcphase"};
    return names;
}

FeatureFrame compute_features(const std::vector<PoolHourRow>& rows) {
    const Index n = static_cast<Index>(rows.size());
    if (n <= kWarmupRows) {
        throw std::invalid_argument("compute_features: need more than " +
                                    std::to_string(kWarmupRows) + " cleaned rows, have " +
                                    std::to_string(n));
    }
    VectorXd open(n), high(n), low(n), close(n), volume(n);
    for (Index i = 0; i < n; ++i) {
        open[i] = rows[i].open;
        high[i] = rows[i].high;
        low[i] = rows[i].low;
        close[i] = rows[i].close;
        volume[i] = rows[i].volume_usd;
    }

    const auto dmi_out = ta::dmi(high, low, close, 14);
    const auto stoch = ta::stochastic(high, low, close, 14, 3, 3);
    const VectorXd smi_base = ta::smi(high, low, close, 13, 2);

    std::vector<VectorXd> cols;
    cols.reserve(28);
    cols.push_back(open);                                            // hourly_open_price
    cols.push_back((high.array() / open.array()).matrix());          // high_over_open
    cols.push_back((low.array() / open.array()).matrix());           // low_over_open
    cols.push_back((close.array() / open.array()).matrix());         // close_over_open
    cols.push_back(volume);                                          // hourly_volume_usd
    cols.push_back((ta::dema(close, 9).array() / open.array()).matrix());
    cols.push_back(dmi_out.dx);                                      // dmi
    cols.push_back(ta::aroon_oscillator(high, low, 14));             // aroon_osc
    cols.push_back(ta::bop(open, high, low, close));                 // bop
    cols.push_back(ta::cci(high, low, close, 14));                   // cci_14
    cols.push_back(ta::cci(high, low, close, 20));                   // cci_20
    cols.push_back(ta::cmo(close, 14));                              // cmo
    cols.push_back(ta::momentum(close, 10));                         // mom
    cols.push_back(ta::trix(close, 15));                             // trix
    cols.push_back(ta::ultimate_oscillator(high, low, close, 7, 14, 28));  // uo
    cols.push_back(stoch.k);                                         // stoch_k
    cols.push_back(stoch.d);                                         // stoch_d
    cols.push_back(stoch.k - stoch.d);                               // stoch_kd_diff
    cols.push_back(ta::ema(smi_base, 3));                            // smi_1
    cols.push_back(ta::ema(smi_base, 5));                            // smi_2
    cols.push_back(ta::ema(smi_base, 8));                            // smi_3
    cols.push_back(ta::natr(high, low, close, 14));                  // natr
    cols.push_back(ta::true_range(high, low, close));                // tr
    cols.push_back((ta::psar(high, low, 0.02, 0.2).array() / open.array()).matrix());
    cols.push_back(dmi_out.adx);                                     // adx
    cols.push_back(ta::apo(close, 12, 26));                          // apo
    cols.push_back(VectorXd::Zero(n));                               // ht_dcperiod (optional)
    cols.push_back(VectorXd::Zero(n));                               // ht_dcphase (optional)

    FeatureFrame frame;
    frame.names = canonical_feature_names();
    const Index kept = n - kWarmupRows;
    frame.timestamps.reserve(kept);
    for (Index i = kWarmupRows; i < n; ++i) frame.timestamps.push_back(rows[i].timestamp);
    frame.values.resize(kept, static_cast<Index>(cols.size()));
    for (size_t c = 0; c < cols.size(); ++c) {
        frame.values.col(static_cast<Index>(c)) = cols[c].tail(kept);
    }
    return frame;
}

namespace {

// Pearson correlation of two columns; zero when either is constant.
double pearson(const VectorXd& a, const VectorXd& b) {
    const VectorXd da = a.array() - a.mean();
    const VectorXd db = b.array() - b.mean();
    const double va = da.squaredNorm();
    const double vb = db.squaredNorm();
    if (va == 0.0 || vb == 0.0) return 0.0;
    return da.dot(db) / std::sqrt(va * vb);
}

}  // namespace

PruneResult prune_features(const FeatureFrame& frame, double threshold) {
    if (!(threshold >= 0.0) || !(threshold <= 1.0)) {
        throw std::invalid_argument("prune_features: threshold must lie in [0, 1]");
    }
    PruneResult result;
    for (Index j = 0; j < frame.cols(); ++j) {
        if (frame.rows() > 0 && frame.values.col(j).isConstant(frame.values(0, j))) {
            result.warnings.push_back("constant column treated as uncorrelated: " +
                                      frame.names[j]);
        }
    }
    std::vector<Index> kept_cols;
    for (Index j = 0; j < frame.cols(); ++j) {
        bool drop = false;
        for (Index k : kept_cols) {
            if (std::abs(pearson(frame.values.col(j), frame.values.col(k))) > threshold) {
                drop = true;
                break;
            }
        }
        if (drop) {
            result.dropped.push_back(frame.names[j]);
        } else {
            kept_cols.push_back(j);
            result.kept.push_back(frame.names[j]);
        }
    }
    return result;
}

FeatureFrame select_features(const FeatureFrame& frame, const std::vector<std::string>& names) {
    FeatureFrame out;
    out.names = names;
    out.timestamps = frame.timestamps;
    out.values.resize(frame.rows(), static_cast<Index>(names.size()));
    for (size_t i = 0; i < names.size(); ++i) {
        const int src = frame.column_index(names[i]);
        if (src < 0) {
            throw std::invalid_argument("select_features: unknown feature " + names[i]);
        }
        out.values.col(static_cast<Index>(i)) = frame.values.col(src);
    }
    return out;
}

NormalizerStats fit_normalizer(const FeatureFrame& train,
                               const std::vector<std::string>& log_features) {
    if (train.rows() < 2) throw std::invalid_argument("fit_normalizer: need at least 2 rows");
    std::unordered_set<std::string> log_set(log_features.begin(), log_features.end());
    for (const std::string& name : log_features) {
        if (train.column_index(name) < 0) {
            throw std::invalid_argument("fit_normalizer: log feature not in frame: " + name);
        }
    }
    NormalizerStats stats;
    stats.names = train.names;
    stats.log_flag.resize(train.names.size());
    stats.mean.resize(train.cols());
    stats.stddev.resize(train.cols());
    for (Index j = 0; j < train.cols(); ++j) {
        const bool lg = log_set.count(train.names[j]) > 0;
        stats.log_flag[j] = lg;
        VectorXd col = train.values.col(j);
        if (lg) {
            if ((col.array() <= 0.0).any()) {
                throw std::invalid_argument("fit_normalizer: log feature has non-positive values: " +
                                            train.names[j]);
            }
            col = col.array().log();
        }
        const double mean = col.mean();
        const double var = (col.array() - mean).square().sum() / static_cast<double>(col.size());
        const double sd = std::sqrt(var);
        if (sd == 0.0) {
            throw std::invalid_argument("fit_normalizer: zero variance in feature: " +
                                        train.names[j]);
        }
        stats.mean[j] = mean;
        stats.stddev[j] = sd;
    }
    return stats;
}

FeatureFrame apply_normalizer(const NormalizerStats& stats, const FeatureFrame& frame) {
    if (stats.names != frame.names) {
        throw std::invalid_argument("apply_normalizer: frame columns do not match the fitted stats");
    }
    FeatureFrame out = frame;
    for (Index j = 0; j < frame.cols(); ++j) {
        VectorXd col = frame.values.col(j);
        if (stats.log_flag[j]) {
            if ((col.array() <= 0.0).any()) {
                throw std::invalid_argument("apply_normalizer: log feature has non-positive values: " +
                                            frame.names[j]);
            }
            col = col.array().log();
        }
        out.values.col(j) = (col.array() - stats.mean[j]) / stats.stddev[j];
    }
    return out;
}

std::string normalizer_to_json(const NormalizerStats& stats) {
    nlohmann::json j;
    for (size_t i = 0; i < stats.names.size(); ++i) {
        j["features"].push_back({{"name", stats.names[i]},
                                 {"log", static_cast<bool>(stats.log_flag[i])},
                                 {"mean", stats.mean[static_cast<Index>(i)]},
                                 {"stddev", stats.stddev[static_cast<Index>(i)]}});
    }
    return j.dump(2);
}

NormalizerStats normalizer_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    NormalizerStats stats;
    const auto& feats = j.at("features");
    stats.mean.resize(static_cast<Index>(feats.size()));
    stats.stddev.resize(static_cast<Index>(feats.size()));
    Index i = 0;
    for (const auto& f : feats) {
        stats.names.push_back(f.at("name").get<std::string>());
        stats.log_flag.push_back(f.at("log").get<bool>());
        stats.mean[i] = f.at("mean").get<double>();
        stats.stddev[i] = f.at("stddev").get<double>();
        ++i;
    }
    return stats;
}

SplitIndex locate_split(const std::vector<std::int64_t>& timestamps, const PeriodSpec& spec) {
    if (spec.n_train <= 0 || spec.n_valid <= 0 || spec.n_test <= 0) {
        throw std::invalid_argument("locate_split: slice counts must be positive");
    }
    const auto begin_it =
        std::lower_bound(timestamps.begin(), timestamps.end(), spec.start_ts);
    const Index begin = static_cast<Index>(begin_it - timestamps.begin());
    const Index need = spec.n_train + spec.n_valid + spec.n_test;
    const Index have = static_cast<Index>(timestamps.size()) - begin;
    if (have < need) {
        throw std::invalid_argument("locate_split: period " + spec.id + " needs " +
                                    std::to_string(need) + " rows from its start, short by " +
                                    std::to_string(need - have));
    }
    SplitIndex idx;
    idx.train_begin = begin;
    idx.train_end = begin + spec.n_train;
    idx.valid_end = idx.train_end + spec.n_valid;
    idx.test_end = idx.valid_end + spec.n_test;
    return idx;
}

namespace {

FeatureFrame slice_frame(const FeatureFrame& frame, Index lo, Index hi) {
    FeatureFrame out;
    out.names = frame.names;
    out.timestamps.assign(frame.timestamps.begin() + lo, frame.timestamps.begin() + hi);
    out.values = frame.values.middleRows(lo, hi - lo);
    return out;
}

EnvData slice_env(const EnvData& d, Index lo, Index hi) {
    EnvData out;
    out.features = slice_frame(d.features, lo, hi);
    out.rows.assign(d.rows.begin() + lo, d.rows.begin() + hi);
    return out;
}

void require_aligned(const EnvData& d) {
    if (static_cast<Index>(d.rows.size()) != d.features.rows()) {
        throw std::invalid_argument("dataset rows and feature frame are misaligned");
    }
    for (size_t i = 0; i < d.rows.size(); ++i) {
        if (d.rows[i].timestamp != d.features.timestamps[i]) {
            throw std::invalid_argument("dataset rows and feature frame timestamps differ");
        }
    }
}

}  // namespace

FrameSplit split_dataset(const FeatureFrame& frame, const PeriodSpec& spec) {
    const SplitIndex idx = locate_split(frame.timestamps, spec);
    return {slice_frame(frame, idx.train_begin, idx.train_end),
            slice_frame(frame, idx.train_end, idx.valid_end),
            slice_frame(frame, idx.valid_end, idx.test_end)};
}

EnvSplit split_dataset(const EnvData& dataset, const PeriodSpec& spec) {
    require_aligned(dataset);
    const SplitIndex idx = locate_split(dataset.features.timestamps, spec);
    return {slice_env(dataset, idx.train_begin, idx.train_end),
            slice_env(dataset, idx.train_end, idx.valid_end),
            slice_env(dataset, idx.valid_end, idx.test_end)};
}

EnvSplit split_fractions(const EnvData& dataset, double train_frac, double valid_frac) {
    require_aligned(dataset);
    if (!(train_frac > 0.0) || !(valid_frac > 0.0) || train_frac + valid_frac >= 1.0) {
        throw std::invalid_argument("split_fractions: fractions must be positive and sum below 1");
    }
    const Index n = dataset.features.rows();
    const Index t_end = static_cast<Index>(std::floor(n * train_frac));
    const Index v_end = t_end + static_cast<Index>(std::floor(n * valid_frac));
    if (t_end < 2 || v_end <= t_end || v_end >= n) {
        throw std::invalid_argument("split_fractions: dataset too small for the fractions");
    }
    return {slice_env(dataset, 0, t_end), slice_env(dataset, t_end, v_end),
            slice_env(dataset, v_end, n)};
}

std::int64_t parse_utc_date(const std::string& text) {
    int y = 0, m = 0, d = 0;
    char sep1 = 0, sep2 = 0;
    std::istringstream in(text);
    in >> y >> sep1 >> m >> sep2 >> d;
    if (!in || sep1 != '-' || sep2 != '-' || m < 1 || m > 12 || d < 1 || d > 31) {
        throw std::invalid_argument("parse_utc_date: expected YYYY-MM-DD, got '" + text + "'");
    }
    // days-from-civil (proleptic Gregorian), Hinnant's algorithm
    const int yy = y - (m <= 2);
    const int era = (yy >= 0 ? yy : yy - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(yy - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2u) / 5u + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    const std::int64_t days = static_cast<std::int64_t>(era) * 146097 +
                              static_cast<std::int64_t>(doe) - 719468;
    return days * 86400;
}

// ------------------------------------------------------------------ CSV ----

namespace {

constexpr const char* kPoolHeader =
    "timestamp,open,high,low,close,volume_usd,fees_usd,active_liquidity,tick";

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

double parse_double_field(const std::string& s, const std::string& path, size_t lineno) {
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": malformed numeric field '" + s + "'");
    }
}

}  // namespace

void write_pool_csv(const std::string& path, const std::vector<PoolHourRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pool_csv: cannot open " + path);
    out << kPoolHeader << "\n";
    for (const PoolHourRow& r : rows) {
        out << r.timestamp << ',' << fmt_double(r.open) << ',' << fmt_double(r.high) << ','
            << fmt_double(r.low) << ',' << fmt_double(r.close) << ','
            << fmt_double(r.volume_usd) << ',' << fmt_double(r.fees_usd) << ','
            << fmt_double(r.active_liquidity) << ',' << r.tick << "\n";
    }
    if (!out) throw std::runtime_error("write_pool_csv: write failed for " + path);
}

std::vector<PoolHourRow> read_pool_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_pool_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != kPoolHeader) {
        throw std::runtime_error(path + ":1: expected header '" + kPoolHeader + "'");
    }
    std::vector<PoolHourRow> rows;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 9) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected 9 fields, got " + std::to_string(f.size()));
        }
        PoolHourRow r;
        r.timestamp = static_cast<std::int64_t>(parse_double_field(f[0], path, lineno));
        r.open = parse_double_field(f[1], path, lineno);
        r.high = parse_double_field(f[2], path, lineno);
        r.low = parse_double_field(f[3], path, lineno);
        r.close = parse_double_field(f[4], path, lineno);
        r.volume_usd = parse_double_field(f[5], path, lineno);
        r.fees_usd = parse_double_field(f[6], path, lineno);
        r.active_liquidity = parse_double_field(f[7], path, lineno);
        r.tick = static_cast<int>(parse_double_field(f[8], path, lineno));
        rows.push_back(r);
    }
    return rows;
}

void write_feature_csv(const std::string& path, const FeatureFrame& frame) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_feature_csv: cannot open " + path);
    out << "timestamp";
    for (const std::string& n : frame.names) out << ',' << n;
    out << "\n";
    for (Index i = 0; i < frame.rows(); ++i) {
        out << frame.timestamps[static_cast<size_t>(i)];
        for (Index j = 0; j < frame.cols(); ++j) out << ',' << fmt_double(frame.values(i, j));
        out << "\n";
    }
    if (!out) throw std::runtime_error("write_feature_csv: write failed for " + path);
}

FeatureFrame read_feature_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_feature_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    auto header = split_csv_line(line);
    if (header.empty() || header[0] != "timestamp") {
        throw std::runtime_error(path + ":1: first column must be 'timestamp'");
    }
    FeatureFrame frame;
    frame.names.assign(header.begin() + 1, header.end());
    std::vector<std::vector<double>> rows;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != header.size()) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(header.size()) + " fields, got " +
                                     std::to_string(f.size()));
        }
        frame.timestamps.push_back(
            static_cast<std::int64_t>(parse_double_field(f[0], path, lineno)));
        std::vector<double> r(f.size() - 1);
        for (size_t j = 1; j < f.size(); ++j) r[j - 1] = parse_double_field(f[j], path, lineno);
        rows.push_back(std::move(r));
    }
    frame.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(frame.names.size()));
    for (size_t i = 0; i < rows.size(); ++i) {
        for (size_t j = 0; j < rows[i].size(); ++j) {
            frame.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
        }
    }
    return frame;
}

}  // namespace v3lplab::data
