#pragma once

// HTTP client for pool-hour history served by a graph-node style endpoint:
// paginated POST queries with a timestamp cursor, merged and deduplicated.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "v3lplab/data.hpp"

namespace v3lplab::subgraph {

struct FetchConfig {
    std::string endpoint_url;  // scheme://host[:port][/path]
    std::string pool_id;       // 0x-prefixed pool address
    std::int64_t from_ts = 0;  // inclusive hour start
    std::int64_t to_ts = 0;    // exclusive
    int page_size = 1000;
    int max_retries = 3;
};

// Transport kept failing; what() carries the attempt count.
class FetchError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Response arrived but did not match the expected shape; what() names the
// offending field.
class ParseError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Pages through the window [from_ts, to_ts), dedups by timestamp (first
// occurrence wins) and returns rows sorted ascending. An empty window issues
// no requests.
std::vector<data::PoolHourRow> fetch_pool_hours(const FetchConfig& cfg);

std::vector<data::PoolHourRow> fetch_pool_hours(const std::string& endpoint_url,
                                                const std::string& pool_id,
                                                std::int64_t from_ts,
                                                std::int64_t to_ts);

}  // namespace v3lplab::subgraph
