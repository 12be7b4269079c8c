#include "v3lplab/subgraph.hpp"

#include <json.hpp>

#include "v3lplab/http.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace v3lplab::subgraph {
namespace {

using nlohmann::json;

// Splits scheme://host[:port] from the request path.
void split_url(const std::string& url, std::string& base, std::string& path) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw std::invalid_argument("fetch: endpoint url missing scheme: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        base = url;
        path = "/";
    } else {
        base = url.substr(0, path_start);
        path = url.substr(path_start);
    }
}

std::string build_query(const FetchConfig& cfg, std::int64_t cursor, bool first_page) {
    // First page anchors inclusively at the window start; later pages resume
    // strictly after the last timestamp seen.
    std::ostringstream q;
    q << "{ poolHourDatas(first: " << cfg.page_size
      << ", orderBy: periodStartUnix, orderDirection: asc"
      << ", where: {pool: \"" << cfg.pool_id << "\""
      << ", periodStartUnix_" << (first_page ? "gte" : "gt") << ": " << cursor
      << ", periodStartUnix_lt: " << cfg.to_ts << "}) "
      << "{ periodStartUnix open high low close volumeUSD feesUSD liquidity tick } }";
    return q.str();
}

// Graph-node style endpoints serve big decimals as strings; accept plain
// numbers as well.
double field_double(const json& row, const char* name) {
    if (!row.contains(name)) {
        throw ParseError(std::string("fetch: malformed response: missing field: ") + name);
    }
    const json& v = row.at(name);
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        try {
            std::size_t used = 0;
            const std::string& s = v.get_ref<const std::string&>();
            const double out = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return out;
        } catch (const std::exception&) {
            throw ParseError(std::string("fetch: malformed response: field ") + name +
                             ": not a number");
        }
    }
    throw ParseError(std::string("fetch: malformed response: field ") + name +
                     ": unexpected type");
}

std::int64_t field_int(const json& row, const char* name) {
    const double v = field_double(row, name);
    if (std::floor(v) != v) {
        throw ParseError(std::string("fetch: malformed response: field ") + name +
                         ": not an integer");
    }
    return static_cast<std::int64_t>(v);
}

data::PoolHourRow parse_row(const json& row) {
    data::PoolHourRow out;
    out.timestamp = field_int(row, "periodStartUnix");
    out.open = field_double(row, "open");
    out.high = field_double(row, "high");
    out.low = field_double(row, "low");
    out.close = field_double(row, "close");
    out.volume_usd = field_double(row, "volumeUSD");
    out.fees_usd = field_double(row, "feesUSD");
    out.active_liquidity = field_double(row, "liquidity");
    out.tick = static_cast<int>(field_int(row, "tick"));
    return out;
}

json post_page(httplib::Client& client, const std::string& path, const std::string& query,
               int max_retries) {
    const std::string body = json{{"query", query}}.dump();
    std::string last_error;
    for (int attempt = 1; attempt <= max_retries; ++attempt) {
        auto res = client.Post(path, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "status " + std::to_string(res->status);
            continue;
        }
        json doc;
        try {
            doc = json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("fetch: malformed response: not json: ") + e.what());
        }
        if (doc.contains("errors")) {
            throw ParseError("fetch: query rejected: " + doc.at("errors").dump());
        }
        if (!doc.contains("data") || !doc.at("data").contains("poolHourDatas")) {
            throw ParseError("fetch: malformed response: missing field: data.poolHourDatas");
        }
        return doc.at("data").at("poolHourDatas");
    }
    throw FetchError("fetch: POST " + path + " failed after " + std::to_string(max_retries) +
                     " attempts: " + last_error);
}

}  // namespace

std::vector<data::PoolHourRow> fetch_pool_hours(const FetchConfig& cfg) {
    if (cfg.page_size <= 0) throw std::invalid_argument("fetch: page_size must be positive");
    if (cfg.max_retries <= 0) throw std::invalid_argument("fetch: max_retries must be positive");
    std::vector<data::PoolHourRow> rows;
    if (cfg.from_ts >= cfg.to_ts) return rows;

    std::string base, path;
    split_url(cfg.endpoint_url, base, path);
    httplib::Client client(base);

    std::int64_t cursor = cfg.from_ts;
    bool first_page = true;
    while (true) {
        const json page =
            post_page(client, path, build_query(cfg, cursor, first_page), cfg.max_retries);
        if (!page.is_array()) {
            throw ParseError("fetch: malformed response: poolHourDatas is not a list");
        }
        for (const json& r : page) rows.push_back(parse_row(r));
        if (page.size() < static_cast<std::size_t>(cfg.page_size)) break;
        cursor = rows.back().timestamp;
        first_page = false;
    }

    // Merge contract: first occurrence per timestamp wins, output ascending.
    std::unordered_set<std::int64_t> seen;
    std::vector<data::PoolHourRow> merged;
    merged.reserve(rows.size());
    for (const data::PoolHourRow& r : rows) {
        if (seen.insert(r.timestamp).second) merged.push_back(r);
    }
    std::stable_sort(merged.begin(), merged.end(),
                     [](const data::PoolHourRow& a, const data::PoolHourRow& b) {
                         return a.timestamp < b.timestamp;
                     });
    return merged;
}

std::vector<data::PoolHourRow> fetch_pool_hours(const std::string& endpoint_url,
                                                const std::string& pool_id,
                                                std::int64_t from_ts, std::int64_t to_ts) {
    FetchConfig cfg;
    cfg.endpoint_url = endpoint_url;
    cfg.pool_id = pool_id;
    cfg.from_ts = from_ts;
    cfg.to_ts = to_ts;
    return fetch_pool_hours(cfg);
}

}  // namespace v3lplab::subgraph
