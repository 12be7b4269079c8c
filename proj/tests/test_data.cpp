#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "support.hpp"
#include "v3lplab/data.hpp"
#include "v3lplab/indicators.hpp"
#include "v3lplab/rng.hpp"
#include "v3lplab/synthetic.hpp"

using namespace v3lplab;
using namespace v3lplab::data;

namespace {

PoolHourRow make_row(std::int64_t ts, double o, double h, double l, double c) {
    PoolHourRow r;
    r.timestamp = ts;
    r.open = o;
    r.high = h;
    r.low = l;
    r.close = c;
    r.volume_usd = 1000.0;
    r.fees_usd = 3.0;
    r.active_liquidity = 1e5;
    r.tick = 0;
    return r;
}

// 30-bar hand series: a drifting sine wave with asymmetric wicks.
struct HandSeries {
    std::vector<double> open, high, low, close;
};

HandSeries hand_series() {
    HandSeries s;
    double prev = 100.0;
    for (int i = 0; i < 30; ++i) {
        const double c = 100.0 + 3.0 * std::sin(0.7 * i) + 0.25 * i;
        s.open.push_back(prev);
        s.close.push_back(c);
        s.high.push_back(std::max(prev, c) + 0.8 + 0.1 * ((i * 7) % 5));
        s.low.push_back(std::min(prev, c) - 0.5 - 0.1 * ((i * 3) % 4));
        prev = c;
    }
    return s;
}

// Textbook commodity channel index over a full window ending at t.
double cci_oracle(const HandSeries& s, int period, int t) {
    std::vector<double> tp;
    for (int j = t - period + 1; j <= t; ++j) {
        tp.push_back((s.high[j] + s.low[j] + s.close[j]) / 3.0);
    }
    double mean = 0.0;
    for (double v : tp) mean += v;
    mean /= period;
    double dev = 0.0;
    for (double v : tp) dev += std::abs(v - mean);
    dev /= period;
    return (tp.back() - mean) / (0.015 * dev);
}

// The configured 20-column model set: canonical order minus the frozen drops.
FeatureFrame model_frame(const FeatureFrame& frame) {
    const auto cfg = nlohmann::json::parse(testsup::slurp(testsup::config_path("features.json")));
    const auto dropped = cfg.at("dropped").get<std::vector<std::string>>();
    std::vector<std::string> kept;
    for (const std::string& n : frame.names) {
        if (std::find(dropped.begin(), dropped.end(), n) == dropped.end()) kept.push_back(n);
    }
    return select_features(frame, kept);
}

}  // namespace

TEST_CASE("clean_rows keeps the first duplicate, drops NaN rows, sorts") {
    std::vector<PoolHourRow> rows;
    rows.push_back(make_row(200, 2.0, 2.1, 1.9, 2.0));
    rows.push_back(make_row(100, 1.0, 1.1, 0.9, 1.0));
    PoolHourRow dup = make_row(200, 9.0, 9.1, 8.9, 9.0);  // later duplicate, must lose
    rows.push_back(dup);
    PoolHourRow bad = make_row(300, 3.0, 3.1, 2.9, 3.0);
    bad.volume_usd = std::nan("");
    rows.push_back(bad);
    rows.push_back(make_row(400, 4.0, 4.1, 3.9, 4.0));

    const auto out = clean_rows(rows);
    REQUIRE(out.size() == 3);
    CHECK(out[0].timestamp == 100);
    CHECK(out[1].timestamp == 200);
    CHECK(out[1].open == 2.0);  // first occurrence won
    CHECK(out[2].timestamp == 400);
    for (size_t i = 1; i < out.size(); ++i) CHECK(out[i].timestamp > out[i - 1].timestamp);
}

TEST_CASE("canonical feature frame has the fixed 28-column layout") {
    const auto rows = synth::generate(synth::SyntheticSpec{});
    const FeatureFrame frame = compute_features(rows);
    REQUIRE(frame.names == canonical_feature_names());
    CHECK(frame.cols() == 28);
    CHECK(frame.rows() == static_cast<Eigen::Index>(rows.size()) - kWarmupRows);
    CHECK(frame.timestamps.front() == rows[kWarmupRows].timestamp);
    CHECK(frame.values.allFinite());
    // the optional cycle columns are emitted as zeros
    CHECK(frame.values.col(frame.column_index("ht_dcperiod")).isZero());
    CHECK(frame.values.col(frame.column_index("ht_dcphase")).isZero());
}

TEST_CASE("too few rows for the warm-up is a named domain error") {
    const auto rows = std::vector<PoolHourRow>(
        50, make_row(0, 1.0, 1.0, 1.0, 1.0));
    try {
        compute_features(rows);
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("50") != std::string::npos);
    }
}

TEST_CASE("constant price series zeroes the price-change indicators") {
    std::vector<PoolHourRow> rows;
    for (int i = 0; i < 120; ++i) rows.push_back(make_row(i * 3600, 5.0, 5.0, 5.0, 5.0));
    const FeatureFrame frame = compute_features(rows);
    CHECK(frame.values.col(frame.column_index("mom")).isZero());
    CHECK(frame.values.col(frame.column_index("tr")).isZero());
    CHECK(frame.values.col(frame.column_index("bop")).isZero());
    CHECK(frame.values.allFinite());
}

TEST_CASE("cci matches the textbook oracle on a 30-point hand series") {
    const HandSeries s = hand_series();
    Eigen::VectorXd h(30), l(30), c(30);
    for (int i = 0; i < 30; ++i) {
        h[i] = s.high[i];
        l[i] = s.low[i];
        c[i] = s.close[i];
    }
    for (int period : {14, 20}) {
        const Eigen::VectorXd got = ta::cci(h, l, c, period);
        for (int t = period - 1; t < 30; ++t) {
            CHECK(got[t] == doctest::Approx(cci_oracle(s, period, t)).epsilon(1e-9));
        }
    }
}

TEST_CASE("indicator sanity on the hand series") {
    const HandSeries s = hand_series();
    Eigen::VectorXd o(30), h(30), l(30), c(30);
    for (int i = 0; i < 30; ++i) {
        o[i] = s.open[i];
        h[i] = s.high[i];
        l[i] = s.low[i];
        c[i] = s.close[i];
    }
    // momentum is the plain 10-bar difference
    const Eigen::VectorXd mom = ta::momentum(c, 10);
    for (int t = 10; t < 30; ++t) CHECK(mom[t] == doctest::Approx(c[t] - c[t - 10]));
    // true range dominates the bar range
    const Eigen::VectorXd tr = ta::true_range(h, l, c);
    for (int t = 0; t < 30; ++t) CHECK(tr[t] >= h[t] - l[t] - 1e-12);
    // stochastic lives in [0, 100]
    const auto st = ta::stochastic(h, l, c, 14, 3, 3);
    for (int t = 0; t < 30; ++t) {
        CHECK(st.k[t] >= -1e-9);
        CHECK(st.k[t] <= 100.0 + 1e-9);
    }
    // ultimate oscillator bounded as well
    const Eigen::VectorXd uo = ta::ultimate_oscillator(h, l, c, 7, 14, 28);
    for (int t = 0; t < 30; ++t) {
        CHECK(uo[t] >= -1e-9);
        CHECK(uo[t] <= 100.0 + 1e-9);
    }
}

TEST_CASE("pruning drops duplicated columns and keeps independent ones") {
    FeatureFrame frame;
    frame.names = {"a", "b_dup", "c_indep", "d_const"};
    frame.timestamps.resize(200);
    frame.values.resize(200, 4);
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        frame.timestamps[i] = i;
        const double x = rng.normal();
        frame.values(i, 0) = x;
        frame.values(i, 1) = 2.0 * x + 1e-6 * rng.normal();  // near copy of a
        frame.values(i, 2) = rng.normal();                   // independent
        frame.values(i, 3) = 7.0;                            // constant
    }
    const PruneResult r = prune_features(frame, 0.8);
    CHECK(r.kept == std::vector<std::string>{"a", "c_indep", "d_const"});
    CHECK(r.dropped == std::vector<std::string>{"b_dup"});
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0].find("d_const") != std::string::npos);
    // threshold 1.0 keeps everything
    CHECK(prune_features(frame, 1.0).kept.size() == 4);
}

TEST_CASE("prune output satisfies the greedy characterization") {
    // The result of a greedy canonical-order scan is uniquely pinned down by:
    //   (a) kept columns are pairwise within the threshold against every
    //       EARLIER kept column;
    //   (b) each dropped column exceeds the threshold against some earlier
    //       kept column.
    const auto rows = synth::generate(synth::SyntheticSpec{});
    const FeatureFrame frame = compute_features(rows);
    const auto corr = [&frame](const std::string& x, const std::string& y) {
        const Eigen::VectorXd a = frame.values.col(frame.column_index(x));
        const Eigen::VectorXd b = frame.values.col(frame.column_index(y));
        const Eigen::ArrayXd da = a.array() - a.mean();
        const Eigen::ArrayXd db = b.array() - b.mean();
        const double den = std::sqrt(da.square().sum() * db.square().sum());
        return den == 0.0 ? 0.0 : (da * db).sum() / den;
    };
    for (double thr : {0.5, 0.7, 0.8, 0.9}) {
        CAPTURE(thr);
        const PruneResult r = prune_features(frame, thr);
        CHECK(r.kept.size() + r.dropped.size() == frame.names.size());
        for (size_t i = 0; i < r.kept.size(); ++i) {
            for (size_t j = 0; j < i; ++j) {
                CHECK(std::abs(corr(r.kept[i], r.kept[j])) <= thr + 1e-12);
            }
        }
        for (const std::string& d : r.dropped) {
            const int dpos = frame.column_index(d);
            bool witnessed = false;
            for (const std::string& k : r.kept) {
                if (frame.column_index(k) < dpos && std::abs(corr(d, k)) > thr) {
                    witnessed = true;
                    break;
                }
            }
            CAPTURE(d);
            CHECK(witnessed);
        }
    }
}

TEST_CASE("the frozen feature drop list leaves the 20-column model set") {
    const auto cfg = nlohmann::json::parse(testsup::slurp(testsup::config_path("features.json")));
    const auto order = cfg.at("canonical_order").get<std::vector<std::string>>();
    const auto dropped = cfg.at("dropped").get<std::vector<std::string>>();
    REQUIRE(order.size() == 28);
    REQUIRE(dropped.size() == 8);
    CHECK(order == canonical_feature_names());
    std::vector<std::string> kept;
    for (const std::string& n : order) {
        if (std::find(dropped.begin(), dropped.end(), n) == dropped.end()) kept.push_back(n);
    }
    CHECK(kept.size() == 20);
    // the model frame selects exactly those columns, in canonical order
    const auto rows = synth::generate(synth::SyntheticSpec{});
    const FeatureFrame all = compute_features(rows);
    const FeatureFrame model = select_features(all, kept);
    CHECK(model.cols() == 20);
    CHECK(model.names.front() == "hourly_open_price");
}

TEST_CASE("normalizer z-scores the train slice exactly") {
    const auto rows = synth::generate(synth::SyntheticSpec{});
    const FeatureFrame frame = model_frame(compute_features(rows));
    const std::vector<std::string> log_feats = {"hourly_open_price", "hourly_volume_usd"};
    const NormalizerStats stats = fit_normalizer(frame, log_feats);
    const FeatureFrame z = apply_normalizer(stats, frame);
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        const Eigen::VectorXd col = z.values.col(j);
        const double mean = col.mean();
        const double sd = std::sqrt((col.array() - mean).square().sum() / col.size());
        CHECK(std::abs(mean) <= 1e-9);
        CHECK(std::abs(sd - 1.0) <= 1e-9);
    }
    // log flags applied to the two scale features
    const int pj = frame.column_index("hourly_open_price");
    CHECK(stats.log_flag[pj]);
    CHECK(stats.mean[pj] ==
          doctest::Approx(frame.values.col(pj).array().log().mean()).epsilon(1e-12));
}

TEST_CASE("normalizer stats depend only on the train slice") {
    const auto rows = synth::generate(synth::SyntheticSpec{});
    const FeatureFrame frame = model_frame(compute_features(rows));
    PeriodSpec spec;
    spec.id = "fixture";
    spec.start_ts = frame.timestamps.front();
    spec.n_train = 1200;
    spec.n_valid = 300;
    spec.n_test = 300;
    FrameSplit split = split_dataset(frame, spec);
    const NormalizerStats a = fit_normalizer(split.train, {"hourly_open_price"});
    // poke the other slices; the fit must not notice
    split.valid.values.array() += 123.0;
    split.test.values.array() *= -2.0;
    const NormalizerStats b = fit_normalizer(split.train, {"hourly_open_price"});
    CHECK(a.mean == b.mean);
    CHECK(a.stddev == b.stddev);
}

TEST_CASE("normalizer error cases name the offending feature") {
    FeatureFrame frame;
    frame.names = {"flat", "negish"};
    frame.timestamps = {0, 1, 2};
    frame.values.resize(3, 2);
    frame.values << 1.0, -1.0, 1.0, 2.0, 1.0, 3.0;
    try {
        fit_normalizer(frame, {});
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("flat") != std::string::npos);
    }
    frame.values << 2.0, -1.0, 3.0, 2.0, 4.0, 3.0;
    try {
        fit_normalizer(frame, {"negish"});
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("negish") != std::string::npos);
    }
}

TEST_CASE("period splits are contiguous, disjoint and exactly sized") {
    const auto rows = synth::generate(synth::SyntheticSpec{});
    const FeatureFrame frame = compute_features(rows);
    PeriodSpec spec;
    spec.id = "fixture";
    spec.start_ts = frame.timestamps.front() + 10 * 3600;
    spec.n_train = 1000;
    spec.n_valid = 400;
    spec.n_test = 200;
    const FrameSplit s = split_dataset(frame, spec);
    CHECK(s.train.rows() == 1000);
    CHECK(s.valid.rows() == 400);
    CHECK(s.test.rows() == 200);
    CHECK(s.train.timestamps.front() >= spec.start_ts);
    CHECK(s.train.timestamps.front() - spec.start_ts < 3600);
    CHECK(s.valid.timestamps.front() == s.train.timestamps.back() + 3600);
    CHECK(s.test.timestamps.front() == s.valid.timestamps.back() + 3600);
}

TEST_CASE("insufficient coverage reports the shortfall") {
    const auto rows = synth::generate([] {
        synth::SyntheticSpec s;
        s.hours = 200;
        return s;
    }());
    const FeatureFrame frame = compute_features(rows);
    PeriodSpec spec;
    spec.id = "p";
    spec.start_ts = frame.timestamps.front();
    spec.n_train = 100;
    spec.n_valid = 50;
    spec.n_test = 50;  // needs 200, have 150
    try {
        split_dataset(frame, spec);
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("short by 50") != std::string::npos);
    }
}

TEST_CASE("paper-period splits come out exact on a covering fixture") {
    // Synthetic hourly data spanning all four windows, generated from before
    // the first period start so the warm-up ends in the margin.
    synth::SyntheticSpec gen;
    gen.seed = 11;
    gen.start_ts = parse_utc_date("2021-07-20");
    gen.hours = 13500;
    const auto rows = synth::generate(gen);
    const FeatureFrame frame = compute_features(clean_rows(rows));

    const auto periods =
        nlohmann::json::parse(testsup::slurp(testsup::config_path("periods.json")));
    for (const auto& [pool, by_period] : periods.items()) {
        for (const auto& [pid, p] : by_period.items()) {
            PeriodSpec spec;
            spec.id = pool + "/" + pid;
            spec.start_ts = parse_utc_date(p.at("start").get<std::string>());
            spec.end_ts = parse_utc_date(p.at("end").get<std::string>());
            spec.n_train = p.at("train").get<int>();
            spec.n_valid = p.at("valid").get<int>();
            spec.n_test = p.at("test").get<int>();
            const FrameSplit s = split_dataset(frame, spec);
            CHECK(s.train.rows() == spec.n_train);
            CHECK(s.valid.rows() == spec.n_valid);
            CHECK(s.test.rows() == spec.n_test);
        }
    }
}

TEST_CASE("utc date parsing") {
    CHECK(parse_utc_date("1970-01-01") == 0);
    CHECK(parse_utc_date("2021-08-02") == 1627862400);
    CHECK(parse_utc_date("2023-01-25") == 1674604800);
    CHECK_THROWS_AS(parse_utc_date("2021/08/02"), std::invalid_argument);
    CHECK_THROWS_AS(parse_utc_date("garbage"), std::invalid_argument);
}

TEST_CASE("pool csv round trip is byte exact") {
    testsup::TempDir tmp("v3lplab-data");
    const auto rows = synth::generate([] {
        synth::SyntheticSpec s;
        s.hours = 100;
        return s;
    }());
    const std::string p1 = tmp.path() + "/a.csv";
    const std::string p2 = tmp.path() + "/b.csv";
    write_pool_csv(p1, rows);
    const auto back = read_pool_csv(p1);
    REQUIRE(back.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].timestamp == rows[i].timestamp);
        CHECK(back[i].close == rows[i].close);
        CHECK(back[i].active_liquidity == rows[i].active_liquidity);
        CHECK(back[i].tick == rows[i].tick);
    }
    write_pool_csv(p2, back);
    CHECK(testsup::slurp(p1) == testsup::slurp(p2));
}

TEST_CASE("feature csv and normalizer json round trip") {
    testsup::TempDir tmp("v3lplab-feat");
    const auto rows = synth::generate([] {
        synth::SyntheticSpec s;
        s.hours = 120;
        return s;
    }());
    const FeatureFrame frame = model_frame(compute_features(rows));
    const std::string p1 = tmp.path() + "/f.csv";
    write_feature_csv(p1, frame);
    const FeatureFrame back = read_feature_csv(p1);
    CHECK(back.names == frame.names);
    CHECK(back.timestamps == frame.timestamps);
    CHECK(back.values == frame.values);

    const NormalizerStats stats = fit_normalizer(frame, {"hourly_open_price"});
    const NormalizerStats rt = normalizer_from_json(normalizer_to_json(stats));
    CHECK(rt.names == stats.names);
    CHECK(rt.mean == stats.mean);
    CHECK(rt.stddev == stats.stddev);
    CHECK(rt.log_flag == stats.log_flag);
}

TEST_CASE("pipeline outputs are deterministic") {
    const auto rows1 = synth::generate(synth::SyntheticSpec{});
    const auto rows2 = synth::generate(synth::SyntheticSpec{});
    REQUIRE(rows1.size() == rows2.size());
    for (size_t i = 0; i < rows1.size(); ++i) {
        CHECK(rows1[i].close == rows2[i].close);
        CHECK(rows1[i].volume_usd == rows2[i].volume_usd);
    }
    const FeatureFrame f1 = compute_features(rows1);
    const FeatureFrame f2 = compute_features(rows2);
    CHECK(f1.values == f2.values);
}
