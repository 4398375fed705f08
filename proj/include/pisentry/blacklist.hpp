#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "pisentry/forest.hpp"

namespace pisentry {

struct Blacklist {
    std::set<PairKey> entries;
    DefaultValueSet default_values; // mirrors the aggregation config
    std::string built_from;         // model identifier
    double threshold = kDefaultConfidence;
};

// Accepted positive predictions become entries; duplicates collapse.
Blacklist build_blacklist(const std::vector<Prediction>& predictions,
                          DefaultValueSet defaults, std::string built_from);

// File format is a JSON array of {"app","key"}; defaults and provenance
// travel in the run manifest instead.
void save_blacklist(const Blacklist& bl, std::ostream& out);
Blacklist load_blacklist(std::istream& in, DefaultValueSet defaults);
Blacklist load_blacklist_file(const std::string& path, DefaultValueSet defaults);

struct LeakEvent {
    std::string user_id;
    std::string app_id;
    std::int64_t timestamp_ms = 0;
    std::string domain;
    std::string key;
    std::string value; // non-empty, non-default
};

std::string leak_event_to_jsonl(const LeakEvent& ev);

struct MatchSummary {
    std::uint64_t total = 0;
    std::map<std::string, std::uint64_t> per_app;
    std::map<PairKey, std::uint64_t> per_pair;
    std::map<std::string, std::uint64_t> per_pi_type; // filled when types given
    // pairs seen in the stream but absent from the list, kept for retraining
    std::map<PairKey, std::uint64_t> unseen_pairs;
};

using LeakSink = std::function<void(const LeakEvent&)>;

// One event per blacklisted kv occurrence with a non-default value.
// Summary counts are order-independent.
MatchSummary match_stream(const Blacklist& bl, const std::vector<TrafficRecord>& records,
                          const LeakSink& sink,
                          const std::map<PairKey, std::string>* pair_types = nullptr);

// CSV `level,app,key,pi_type,count` (levels: total, app, pair, pi_type).
void write_match_summary_csv(const MatchSummary& s, std::ostream& out);
// CSV `app,key,requests` of pairs not on the list.
void write_unseen_pairs_csv(const MatchSummary& s, std::ostream& out);

// CSV with app,key columns plus a pi_type/pi_kind column (ground truth
// files fit); used for the per-PI summary breakdown.
std::map<PairKey, std::string> load_pair_types_file(const std::string& path);

} // namespace pisentry
