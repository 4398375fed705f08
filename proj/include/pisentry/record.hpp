#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pisentry {

// Where a pair was harvested from within the request. Headers and cookies
// are deliberately not harvested; they would pollute the key space.
enum class KvSource { query, body_form, body_json };

const char* to_string(KvSource src);
KvSource kv_source_from_string(std::string_view s); // throws ParseError

struct KvPair {
    std::string key;   // non-empty
    std::string value; // may be empty
    KvSource source = KvSource::query;

    bool operator==(const KvPair&) const = default;
};

// One HTTP request after key-value extraction.
struct TrafficRecord {
    std::string user_id;
    std::string app_id;
    std::int64_t timestamp_ms = 0;
    std::string domain; // lowercase hostname
    std::string path;
    std::vector<KvPair> kvs;

    bool operator==(const TrafficRecord&) const = default;
};

} // namespace pisentry
