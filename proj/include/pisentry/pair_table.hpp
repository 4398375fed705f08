#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pisentry/record.hpp"

namespace pisentry {

// The detection unit: one key observed in one app's traffic.
struct PairKey {
    std::string app_id;
    std::string key;

    auto operator<=>(const PairKey&) const = default;
};

// Placeholder values that carry no information. Empty strings always
// count as default; bracketed tokens ("[IMEI]") match exactly, everything
// else case-insensitively.
class DefaultValueSet {
public:
    DefaultValueSet() = default;
    explicit DefaultValueSet(const std::vector<std::string>& values);

    // "none", "unknown", "-", "[IMEI]", "[MAC]" and the empty string
    static DefaultValueSet builtin();
    // one value per line; blank lines skipped
    static DefaultValueSet from_file(const std::string& path);

    bool contains(std::string_view value) const;

    // configured entries, for snapshot echo (excludes the implicit "")
    const std::set<std::string>& entries() const { return entries_; }

    bool operator==(const DefaultValueSet&) const = default;

private:
    std::set<std::string> entries_;
    std::set<std::string> exact_;   // bracketed tokens
    std::set<std::string> lowered_; // case-insensitive words
};

struct ValueOccurrence {
    std::set<std::string> users;
    std::uint64_t count = 0;

    bool operator==(const ValueOccurrence&) const = default;
};

struct PairStats {
    // user -> value -> occurrences; default and empty values excluded
    std::map<std::string, std::map<std::string, std::uint64_t>> per_user_values;
    // domains visited by requests carrying the key (H_ij)
    std::set<std::string> domains;
    // presence count: a key occurring twice in one request counts once
    std::uint64_t requests_with_key = 0;

    bool operator==(const PairStats&) const = default;

    // distinct values across users, after default filtering
    std::set<std::string> value_set() const;
    // value -> total occurrences summed over users
    std::map<std::string, std::uint64_t> value_counts() const;
};

struct AppStats {
    std::uint64_t total_requests = 0;
    std::set<std::string> users;
    std::set<std::string> keys;
    std::set<std::string> domains;
    // every non-default value occurrence of every key of this app
    std::map<std::string, ValueOccurrence> value_index;

    bool operator==(const AppStats&) const = default;
};

struct PruneReport {
    std::uint64_t default_only = 0; // all values default or empty
    std::uint64_t singleton = 0;    // key appeared in a single request
};

// Aggregated view of a corpus. App-level statistics keep the full traffic
// view; pruning only drops pair entries.
struct PairTable {
    std::map<PairKey, PairStats> pairs;
    std::map<std::string, AppStats> apps;
    DefaultValueSet defaults;

    bool operator==(const PairTable&) const = default;

    // commutative combine of shard-wise partial tables (built, not pruned)
    void merge(const PairTable& other);
};

// One pass over the corpus. Throws DomainError on an empty record set.
PairTable build_table(const std::vector<TrafficRecord>& records, DefaultValueSet defaults);

// Drops pairs whose filtered value set is empty and pairs whose key was
// seen in a single request. Idempotent.
PruneReport prune(PairTable& table);

// Versioned JSON snapshot.
void save_table(const PairTable& table, std::ostream& out);
void save_table_file(const PairTable& table, const std::string& path);
PairTable load_table(std::istream& in);        // throws SchemaError
PairTable load_table_file(const std::string& path);

} // namespace pisentry
