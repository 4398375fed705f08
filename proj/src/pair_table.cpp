#include "pisentry/pair_table.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "pisentry/errors.hpp"

namespace pisentry {

namespace {

using nlohmann::json;

constexpr int kTableSchemaVersion = 1;
constexpr const char* kTableKind = "pisentry.pair_table";

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool bracketed(std::string_view v) {
    return v.size() >= 2 && v.front() == '[' && v.back() == ']';
}

} // namespace

DefaultValueSet::DefaultValueSet(const std::vector<std::string>& values) {
    for (const auto& v : values) {
        if (v.empty()) continue; // the empty string is always default
        entries_.insert(v);
        if (bracketed(v)) {
            exact_.insert(v);
        } else {
            lowered_.insert(ascii_lower(v));
        }
    }
}

DefaultValueSet DefaultValueSet::builtin() {
    return DefaultValueSet({"none", "unknown", "-", "[IMEI]", "[MAC]"});
}

DefaultValueSet DefaultValueSet::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open defaults file: " + path);
    std::vector<std::string> values;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) values.push_back(line);
    }
    return DefaultValueSet(values);
}

bool DefaultValueSet::contains(std::string_view value) const {
    if (value.empty()) return true;
    if (exact_.count(std::string(value))) return true;
    return lowered_.count(ascii_lower(value)) > 0;
}

std::set<std::string> PairStats::value_set() const {
    std::set<std::string> out;
    for (const auto& [user, counts] : per_user_values) {
        for (const auto& [value, n] : counts) out.insert(value);
    }
    return out;
}

std::map<std::string, std::uint64_t> PairStats::value_counts() const {
    std::map<std::string, std::uint64_t> out;
    for (const auto& [user, counts] : per_user_values) {
        for (const auto& [value, n] : counts) out[value] += n;
    }
    return out;
}

PairTable build_table(const std::vector<TrafficRecord>& records, DefaultValueSet defaults) {
    if (records.empty()) throw DomainError("cannot build a pair table from zero records");

    PairTable table;
    table.defaults = std::move(defaults);
    std::set<std::string_view> keys_in_record;
    for (const TrafficRecord& rec : records) {
        AppStats& app = table.apps[rec.app_id];
        app.total_requests += 1;
        app.users.insert(rec.user_id);
        app.domains.insert(rec.domain);

        keys_in_record.clear();
        for (const KvPair& kv : rec.kvs) {
            app.keys.insert(kv.key);
            PairStats& pair = table.pairs[{rec.app_id, kv.key}];
            pair.domains.insert(rec.domain);
            if (keys_in_record.insert(kv.key).second) {
                pair.requests_with_key += 1;
            }
            if (!table.defaults.contains(kv.value)) {
                pair.per_user_values[rec.user_id][kv.value] += 1;
                ValueOccurrence& vo = app.value_index[kv.value];
                vo.users.insert(rec.user_id);
                vo.count += 1;
            }
        }
    }
    return table;
}

void PairTable::merge(const PairTable& other) {
    for (const auto& [key, stats] : other.pairs) {
        PairStats& mine = pairs[key];
        mine.requests_with_key += stats.requests_with_key;
        mine.domains.insert(stats.domains.begin(), stats.domains.end());
        for (const auto& [user, counts] : stats.per_user_values) {
            auto& dest = mine.per_user_values[user];
            for (const auto& [value, n] : counts) dest[value] += n;
        }
    }
    for (const auto& [app_id, stats] : other.apps) {
        AppStats& mine = apps[app_id];
        mine.total_requests += stats.total_requests;
        mine.users.insert(stats.users.begin(), stats.users.end());
        mine.keys.insert(stats.keys.begin(), stats.keys.end());
        mine.domains.insert(stats.domains.begin(), stats.domains.end());
        for (const auto& [value, occ] : stats.value_index) {
            ValueOccurrence& vo = mine.value_index[value];
            vo.count += occ.count;
            vo.users.insert(occ.users.begin(), occ.users.end());
        }
    }
}

PruneReport prune(PairTable& table) {
    PruneReport report;
    for (auto it = table.pairs.begin(); it != table.pairs.end();) {
        const PairStats& stats = it->second;
        if (stats.per_user_values.empty()) {
            ++report.default_only;
            it = table.pairs.erase(it);
        } else if (stats.requests_with_key <= 1) {
            ++report.singleton;
            it = table.pairs.erase(it);
        } else {
            ++it;
        }
    }
    return report;
}

void save_table(const PairTable& table, std::ostream& out) {
    json apps = json::object();
    for (const auto& [app_id, stats] : table.apps) {
        json vi = json::object();
        for (const auto& [value, occ] : stats.value_index) {
            vi[value] = {{"count", occ.count}, {"users", occ.users}};
        }
        apps[app_id] = {{"total_requests", stats.total_requests},
                        {"users", stats.users},
                        {"keys", stats.keys},
                        {"domains", stats.domains},
                        {"value_index", std::move(vi)}};
    }
    json pairs = json::array();
    for (const auto& [key, stats] : table.pairs) {
        json puv = json::object();
        for (const auto& [user, counts] : stats.per_user_values) {
            puv[user] = counts;
        }
        pairs.push_back({{"app", key.app_id},
                         {"key", key.key},
                         {"requests_with_key", stats.requests_with_key},
                         {"domains", stats.domains},
                         {"per_user_values", std::move(puv)}});
    }
    json j{{"schema_version", kTableSchemaVersion},
           {"kind", kTableKind},
           {"default_values", table.defaults.entries()},
           {"apps", std::move(apps)},
           {"pairs", std::move(pairs)}};
    out << j.dump() << '\n';
}

void save_table_file(const PairTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write table file: " + path);
    save_table(table, out);
}

namespace {

PairTable load_table_json(const json& j) {
    PairTable table;
    std::vector<std::string> defaults;
    for (const json& v : j.at("default_values")) defaults.push_back(v.get<std::string>());
    table.defaults = DefaultValueSet(defaults);

    for (const auto& [app_id, a] : j.at("apps").items()) {
        AppStats stats;
        stats.total_requests = a.at("total_requests").get<std::uint64_t>();
        for (const json& u : a.at("users")) stats.users.insert(u.get<std::string>());
        for (const json& k : a.at("keys")) stats.keys.insert(k.get<std::string>());
        for (const json& d : a.at("domains")) stats.domains.insert(d.get<std::string>());
        for (const auto& [value, occ] : a.at("value_index").items()) {
            ValueOccurrence vo;
            vo.count = occ.at("count").get<std::uint64_t>();
            for (const json& u : occ.at("users")) vo.users.insert(u.get<std::string>());
            stats.value_index.emplace(value, std::move(vo));
        }
        table.apps.emplace(app_id, std::move(stats));
    }
    for (const json& p : j.at("pairs")) {
        PairKey key{p.at("app").get<std::string>(), p.at("key").get<std::string>()};
        PairStats stats;
        stats.requests_with_key = p.at("requests_with_key").get<std::uint64_t>();
        for (const json& d : p.at("domains")) stats.domains.insert(d.get<std::string>());
        for (const auto& [user, counts] : p.at("per_user_values").items()) {
            auto& dest = stats.per_user_values[user];
            for (const auto& [value, n] : counts.items()) {
                dest[value] = n.get<std::uint64_t>();
            }
        }
        table.pairs.emplace(std::move(key), std::move(stats));
    }
    return table;
}

} // namespace

PairTable load_table(std::istream& in) {
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw SchemaError("table snapshot: not a JSON object");
    if (j.value("kind", "") != kTableKind) throw SchemaError("table snapshot: wrong kind");
    if (j.value("schema_version", -1) != kTableSchemaVersion) {
        throw SchemaError("table snapshot: unsupported schema version");
    }
    try {
        return load_table_json(j);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("table snapshot: ") + e.what());
    }
}

PairTable load_table_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open table file: " + path);
    return load_table(in);
}

} // namespace pisentry
