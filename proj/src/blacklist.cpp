#include "pisentry/blacklist.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "pisentry/csv.hpp"
#include "pisentry/errors.hpp"

namespace pisentry {

namespace {
using nlohmann::json;
}

Blacklist build_blacklist(const std::vector<Prediction>& predictions, DefaultValueSet defaults,
                          std::string built_from) {
    Blacklist bl;
    bl.default_values = std::move(defaults);
    bl.built_from = std::move(built_from);
    if (!predictions.empty()) bl.threshold = predictions.front().threshold;
    for (const Prediction& p : predictions) {
        if (p.label == PredictedLabel::positive) bl.entries.insert(p.pair);
    }
    return bl;
}

void save_blacklist(const Blacklist& bl, std::ostream& out) {
    json arr = json::array();
    for (const PairKey& pair : bl.entries) {
        arr.push_back({{"app", pair.app_id}, {"key", pair.key}});
    }
    out << arr.dump() << '\n';
}

Blacklist load_blacklist(std::istream& in, DefaultValueSet defaults) {
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_array()) throw SchemaError("blacklist file: not a JSON array");
    Blacklist bl;
    bl.default_values = std::move(defaults);
    try {
        for (const json& e : j) {
            bl.entries.insert({e.at("app").get<std::string>(), e.at("key").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("blacklist file: ") + e.what());
    }
    return bl;
}

Blacklist load_blacklist_file(const std::string& path, DefaultValueSet defaults) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open blacklist file: " + path);
    return load_blacklist(in, std::move(defaults));
}

std::string leak_event_to_jsonl(const LeakEvent& ev) {
    json j{{"user", ev.user_id}, {"app", ev.app_id},  {"ts", ev.timestamp_ms},
           {"domain", ev.domain}, {"key", ev.key},     {"value", ev.value}};
    return j.dump();
}

MatchSummary match_stream(const Blacklist& bl, const std::vector<TrafficRecord>& records,
                          const LeakSink& sink,
                          const std::map<PairKey, std::string>* pair_types) {
    MatchSummary summary;
    for (const TrafficRecord& rec : records) {
        for (const KvPair& kv : rec.kvs) {
            PairKey pair{rec.app_id, kv.key};
            if (!bl.entries.count(pair)) {
                summary.unseen_pairs[pair] += 1;
                continue;
            }
            if (bl.default_values.contains(kv.value)) continue;
            LeakEvent ev{rec.user_id, rec.app_id, rec.timestamp_ms,
                         rec.domain,  kv.key,     kv.value};
            if (sink) sink(ev);
            summary.total += 1;
            summary.per_app[rec.app_id] += 1;
            summary.per_pair[pair] += 1;
            if (pair_types) {
                auto it = pair_types->find(pair);
                if (it != pair_types->end()) summary.per_pi_type[it->second] += 1;
            }
        }
    }
    return summary;
}

void write_match_summary_csv(const MatchSummary& s, std::ostream& out) {
    csv::write_row(out, {"level", "app", "key", "pi_type", "count"});
    csv::write_row(out, {"total", "", "", "", std::to_string(s.total)});
    for (const auto& [app, count] : s.per_app) {
        csv::write_row(out, {"app", app, "", "", std::to_string(count)});
    }
    for (const auto& [pair, count] : s.per_pair) {
        csv::write_row(out, {"pair", pair.app_id, pair.key, "", std::to_string(count)});
    }
    for (const auto& [pi_type, count] : s.per_pi_type) {
        csv::write_row(out, {"pi_type", "", "", pi_type, std::to_string(count)});
    }
}

void write_unseen_pairs_csv(const MatchSummary& s, std::ostream& out) {
    csv::write_row(out, {"app", "key", "requests"});
    for (const auto& [pair, count] : s.unseen_pairs) {
        csv::write_row(out, {pair.app_id, pair.key, std::to_string(count)});
    }
}

std::map<PairKey, std::string> load_pair_types_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open pair types file: " + path);
    auto rows = csv::read(in);
    if (rows.empty()) throw SchemaError("pair types csv: empty file");
    const auto& header = rows.front();
    std::size_t app_col = header.size(), key_col = header.size(), type_col = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "app") app_col = i;
        if (header[i] == "key") key_col = i;
        if (header[i] == "pi_type" || header[i] == "pi_kind") type_col = i;
    }
    if (app_col == header.size() || key_col == header.size() || type_col == header.size()) {
        throw SchemaError("pair types csv: needs app, key and pi_type/pi_kind columns");
    }
    std::map<PairKey, std::string> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() <= std::max({app_col, key_col, type_col})) continue;
        out[{row[app_col], row[key_col]}] = row[type_col];
    }
    return out;
}

} // namespace pisentry
