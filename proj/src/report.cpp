#include "v3lplab/report.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace v3lplab::report {
namespace {

using nlohmann::json;

// Relative-table columns in emission order, with the direction a value
// must move to count as better.
struct Column {
    const char* name;
    bool upward;
};
constexpr Column kColumns[4] = {
    {"rel_fee", true}, {"rel_gas", false}, {"rel_lvr", false}, {"rel_pnl", true}};

std::string fixed6(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", value);
    std::string out = buf;
    if (out == "-0.000000") out = "0.000000";
    return out;
}

std::string full_precision(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

// The JSON mirror and the best markers both work on the values as the
// CSV displays them, so the two files never disagree.
double rounded6(double value) { return std::strtod(fixed6(value).c_str(), nullptr); }

struct RelativeRow {
    std::string strategy;
    std::string period;
    double cells[4];  // ordered as kColumns
};

std::vector<RelativeRow> relative_rows(const std::vector<StrategyResult>& results) {
    if (results.empty()) throw std::invalid_argument("report: no metrics rows");
    std::vector<RelativeRow> rows;
    rows.reserve(results.size());
    for (const StrategyResult& r : results) {
        if (!(r.l0 > 0.0))
            throw std::invalid_argument("report: nonpositive l0 for strategy " + r.strategy);
        RelativeRow row;
        row.strategy = r.strategy;
        row.period = r.period;
        row.cells[0] = rounded6(r.metrics.sum_fee / r.l0);
        row.cells[1] = rounded6(r.metrics.sum_gas / r.l0);
        row.cells[2] = rounded6(r.metrics.sum_lvr / r.l0);
        row.cells[3] = rounded6(r.metrics.pnl_hedged() / r.l0);
        rows.push_back(row);
    }
    return rows;
}

std::string slurp_or_throw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("report: cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

std::string metrics_csv(const std::vector<StrategyResult>& results) {
    const auto rows = relative_rows(results);
    std::ostringstream out;
    out << "strategy,period";
    for (const Column& c : kColumns) out << ',' << c.name;
    out << '\n';
    for (const RelativeRow& row : rows) {
        out << row.strategy << ',' << row.period;
        for (double cell : row.cells) out << ',' << fixed6(cell);
        out << '\n';
    }
    return out.str();
}

std::string metrics_json(const std::vector<StrategyResult>& results) {
    const auto rows = relative_rows(results);

    // per period label and column, the best displayed value
    std::vector<std::string> periods;
    for (const RelativeRow& row : rows) {
        bool seen = false;
        for (const auto& p : periods) seen = seen || p == row.period;
        if (!seen) periods.push_back(row.period);
    }
    auto best_in_period = [&](const std::string& period, int col) {
        double best = 0.0;
        bool first = true;
        for (const RelativeRow& row : rows) {
            if (row.period != period) continue;
            const double v = row.cells[col];
            if (first || (kColumns[col].upward ? v > best : v < best)) best = v;
            first = false;
        }
        return best;
    };

    json directions = json::object();
    for (const Column& c : kColumns) directions[c.name] = c.upward ? "up" : "down";

    json out;
    out["format"] = "v3lplab.report";
    out["version"] = 1;
    out["directions"] = directions;
    out["rows"] = json::array();
    for (const RelativeRow& row : rows) {
        json entry;
        entry["strategy"] = row.strategy;
        entry["period"] = row.period;
        json best = json::array();
        for (int col = 0; col < 4; ++col) {
            entry[kColumns[col].name] = row.cells[col];
            if (row.cells[col] == best_in_period(row.period, col))
                best.push_back(kColumns[col].name);
        }
        entry["best"] = best;
        out["rows"].push_back(entry);
    }
    return out.dump(2) + "\n";
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t hash = 14695981039346656037ULL;
    for (unsigned char byte : bytes) {
        hash ^= byte;
        hash *= 1099511628211ULL;
    }
    return hash;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::string manifest_json(const std::string& config_text, std::uint64_t seed,
                          const std::vector<ManifestInput>& inputs) {
    json out;
    out["format"] = "v3lplab.manifest";
    out["version"] = 1;
    out["config_hash"] = hex64(fnv1a64(config_text));
    out["seed"] = seed;
    out["inputs"] = json::array();
    for (const ManifestInput& input : inputs) {
        json entry;
        entry["name"] = input.name;
        entry["path"] = input.path;
        entry["hash"] = hex64(fnv1a64(slurp_or_throw(input.path)));
        out["inputs"].push_back(entry);
    }
    return out.dump(2) + "\n";
}

std::string training_log_csv(const std::vector<agents::TrainLogRow>& log) {
    std::ostringstream out;
    out << "epoch,td_loss,valid_pnl,epsilon\n";
    for (const agents::TrainLogRow& row : log) {
        out << row.epoch << ',' << full_precision(row.td_loss) << ','
            << full_precision(row.valid_score) << ',' << full_precision(row.epsilon) << '\n';
    }
    return out.str();
}

std::string trace_csv(const std::vector<env::TraceRow>& trace) {
    std::ostringstream out;
    out << "t,action,fee,gas,lvr,cash,fund,center,width,price\n";
    for (const env::TraceRow& row : trace) {
        out << row.t << ',' << row.action << ',' << full_precision(row.fee) << ','
            << full_precision(row.gas) << ',' << full_precision(row.lvr) << ','
            << full_precision(row.cash) << ',' << full_precision(row.fund) << ',' << row.center
            << ',' << row.width << ',' << full_precision(row.price) << '\n';
    }
    return out.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("report: cannot write " + path);
    out << text;
    if (!out.good()) throw std::runtime_error("report: cannot write " + path);
}

}  // namespace v3lplab::report
