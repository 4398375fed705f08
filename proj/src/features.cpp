#include "pisentry/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "pisentry/csv.hpp"
#include "pisentry/errors.hpp"

namespace pisentry {

const std::array<const char*, kFeatureCount> kFeatureNames = {
    "max_distinct_per_user", "min_distinct_per_user", "avg_distinct_per_user",
    "var_distinct_per_user", "max_entropy_per_user",  "min_entropy_per_user",
    "avg_entropy_per_user",  "var_entropy_per_user",  "lvrd",
    "key_frequency",         "num_users",             "krd",
    "drd",                   "weighted_gvrd",         "weighted_ard",
    "weighted_urd",          "weighted_nurd",
};

std::array<double, kFeatureCount> FeatureVector::values() const {
    return {max_distinct_per_user, min_distinct_per_user, avg_distinct_per_user,
            var_distinct_per_user, max_entropy_per_user,  min_entropy_per_user,
            avg_entropy_per_user,  var_entropy_per_user,  lvrd,
            key_frequency,         num_users,             krd,
            drd,                   weighted_gvrd,         weighted_ard,
            weighted_urd,          weighted_nurd};
}

FeatureVector FeatureVector::from_values(const std::array<double, kFeatureCount>& v) {
    FeatureVector f;
    f.max_distinct_per_user = v[0];
    f.min_distinct_per_user = v[1];
    f.avg_distinct_per_user = v[2];
    f.var_distinct_per_user = v[3];
    f.max_entropy_per_user = v[4];
    f.min_entropy_per_user = v[5];
    f.avg_entropy_per_user = v[6];
    f.var_entropy_per_user = v[7];
    f.lvrd = v[8];
    f.key_frequency = v[9];
    f.num_users = v[10];
    f.krd = v[11];
    f.drd = v[12];
    f.weighted_gvrd = v[13];
    f.weighted_ard = v[14];
    f.weighted_urd = v[15];
    f.weighted_nurd = v[16];
    return f;
}

double value_entropy(const std::map<std::string, std::uint64_t>& counts) {
    if (counts.empty()) throw DomainError("value_entropy: empty count map");
    double total = 0;
    for (const auto& [value, n] : counts) total += static_cast<double>(n);
    double h = 0;
    for (const auto& [value, n] : counts) {
        double p = static_cast<double>(n) / total;
        h -= p * std::log2(p);
    }
    return h;
}

namespace {

struct SummaryStats {
    double max = 0, min = 0, mean = 0, var = 0; // population variance
};

SummaryStats summarize(const std::vector<double>& xs) {
    SummaryStats s;
    s.max = *std::max_element(xs.begin(), xs.end());
    s.min = *std::min_element(xs.begin(), xs.end());
    double sum = 0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(xs.size());
    double sq = 0;
    for (double x : xs) sq += (x - s.mean) * (x - s.mean);
    s.var = sq / static_cast<double>(xs.size());
    return s;
}

const PairStats& stats_for(const PairTable& table, const PairKey& pair) {
    auto it = table.pairs.find(pair);
    if (it == table.pairs.end()) {
        throw DomainError("pair not in table: <" + pair.app_id + ", " + pair.key + ">");
    }
    return it->second;
}

} // namespace

FeatureVector local_features(const PairTable& table, const PairKey& pair) {
    const PairStats& stats = stats_for(table, pair);
    const AppStats& app = table.apps.at(pair.app_id);
    if (stats.per_user_values.empty()) {
        throw DomainError("pair has no surviving values: <" + pair.app_id + ", " + pair.key + ">");
    }

    std::vector<double> distinct;
    std::vector<double> entropies;
    distinct.reserve(stats.per_user_values.size());
    for (const auto& [user, counts] : stats.per_user_values) {
        distinct.push_back(static_cast<double>(counts.size()));
        entropies.push_back(value_entropy(counts));
    }
    SummaryStats d = summarize(distinct);
    SummaryStats e = summarize(entropies);

    // users per value, for the reuse ratio
    std::map<std::string, std::uint64_t> users_per_value;
    for (const auto& [user, counts] : stats.per_user_values) {
        for (const auto& [value, n] : counts) users_per_value[value] += 1;
    }
    std::uint64_t reused = 0;
    for (const auto& [value, users] : users_per_value) {
        if (users >= 2) ++reused;
    }

    FeatureVector f;
    f.max_distinct_per_user = d.max;
    f.min_distinct_per_user = d.min;
    f.avg_distinct_per_user = d.mean;
    f.var_distinct_per_user = d.var;
    f.max_entropy_per_user = e.max;
    f.min_entropy_per_user = e.min;
    f.avg_entropy_per_user = e.mean;
    f.var_entropy_per_user = e.var;
    f.lvrd = static_cast<double>(reused) / static_cast<double>(users_per_value.size());
    f.key_frequency =
        static_cast<double>(stats.requests_with_key) / static_cast<double>(app.total_requests);
    f.num_users = static_cast<double>(app.users.size());
    return f;
}

std::uint64_t krd(const PairTable& table, const PairKey& pair) {
    std::uint64_t n = 0;
    for (const auto& [app_id, stats] : table.apps) {
        if (app_id == pair.app_id) continue;
        if (stats.keys.count(pair.key)) ++n;
    }
    return n;
}

std::uint64_t drd(const PairTable& table, const PairKey& pair) {
    const PairStats& stats = stats_for(table, pair);
    std::uint64_t n = 0;
    for (const auto& [app_id, app] : table.apps) {
        if (app_id == pair.app_id) continue;
        bool hit = false;
        for (const auto& domain : stats.domains) {
            if (app.domains.count(domain)) {
                hit = true;
                break;
            }
        }
        if (hit) ++n;
    }
    return n;
}

VdmFeatures weighted_vdm_features(const PairTable& table, const PairKey& pair) {
    const PairStats& stats = stats_for(table, pair);
    auto counts = stats.value_counts();
    if (counts.empty()) {
        throw DomainError("pair has no values after default filtering: <" + pair.app_id + ", " +
                          pair.key + ">");
    }
    double total = 0;
    for (const auto& [value, n] : counts) total += static_cast<double>(n);

    // users of this pair, for the new-user variant
    std::set<std::string> pair_users;
    for (const auto& [user, vc] : stats.per_user_values) pair_users.insert(user);

    VdmFeatures out;
    std::set<std::string> users_of_value;
    for (const auto& [value, n] : counts) {
        double weight = static_cast<double>(n) / total;
        std::uint64_t occurrences = 0;
        std::uint64_t apps_with_value = 0;
        users_of_value.clear();
        for (const auto& [app_id, app] : table.apps) {
            if (app_id == pair.app_id) continue;
            auto it = app.value_index.find(value);
            if (it == app.value_index.end()) continue;
            occurrences += it->second.count;
            ++apps_with_value;
            users_of_value.insert(it->second.users.begin(), it->second.users.end());
        }
        std::uint64_t new_users = 0;
        for (const auto& user : users_of_value) {
            if (!pair_users.count(user)) ++new_users;
        }
        out.gvrd += weight * static_cast<double>(occurrences);
        out.ard += weight * static_cast<double>(apps_with_value);
        out.urd += weight * static_cast<double>(users_of_value.size());
        out.nurd += weight * static_cast<double>(new_users);
    }
    return out;
}

FeatureVector compute_features(const PairTable& table, const PairKey& pair) {
    FeatureVector f = local_features(table, pair);
    f.krd = static_cast<double>(krd(table, pair));
    f.drd = static_cast<double>(drd(table, pair));
    VdmFeatures v = weighted_vdm_features(table, pair);
    f.weighted_gvrd = v.gvrd;
    f.weighted_ard = v.ard;
    f.weighted_urd = v.urd;
    f.weighted_nurd = v.nurd;
    return f;
}

FeatureMatrix feature_matrix(const PairTable& table) {
    FeatureMatrix m;
    for (const auto& [pair, stats] : table.pairs) {
        m.emplace(pair, compute_features(table, pair));
    }
    return m;
}

void write_feature_csv(const FeatureMatrix& m, std::ostream& out) {
    std::vector<std::string> header{"app", "key"};
    for (const char* name : kFeatureNames) header.emplace_back(name);
    csv::write_row(out, header);
    for (const auto& [pair, features] : m) {
        std::vector<std::string> row{pair.app_id, pair.key};
        for (double v : features.values()) row.push_back(csv::format_double(v));
        csv::write_row(out, row);
    }
}

FeatureMatrix read_feature_csv(std::istream& in) {
    auto rows = csv::read(in);
    if (rows.empty()) throw SchemaError("feature csv: empty file");
    std::vector<std::string> expected{"app", "key"};
    for (const char* name : kFeatureNames) expected.emplace_back(name);
    if (rows.front() != expected) throw SchemaError("feature csv: unexpected header");

    FeatureMatrix m;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() != 2 + kFeatureCount) {
            throw SchemaError("feature csv: row " + std::to_string(i + 1) + " has " +
                              std::to_string(row.size()) + " fields");
        }
        std::array<double, kFeatureCount> v{};
        for (std::size_t k = 0; k < kFeatureCount; ++k) {
            v[k] = csv::parse_double(row[2 + k]);
        }
        m.emplace(PairKey{row[0], row[1]}, FeatureVector::from_values(v));
    }
    return m;
}

FeatureMatrix read_feature_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open feature csv: " + path);
    return read_feature_csv(in);
}

} // namespace pisentry
