#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <map>

#include "pisentry/pair_table.hpp"

namespace pisentry {

inline constexpr std::size_t kFeatureCount = 17;

// Export order for matrices and model feature indices.
extern const std::array<const char*, kFeatureCount> kFeatureNames;

// 11 local + 6 global occurrence-pattern features of one pair.
struct FeatureVector {
    // key-value statistics over the pair's users (population variance)
    double max_distinct_per_user = 0;
    double min_distinct_per_user = 0;
    double avg_distinct_per_user = 0;
    double var_distinct_per_user = 0;
    double max_entropy_per_user = 0;
    double min_entropy_per_user = 0;
    double avg_entropy_per_user = 0;
    double var_entropy_per_user = 0;
    double lvrd = 0;          // share of values used by >= 2 users
    double key_frequency = 0; // requests with key / app requests
    double num_users = 0;     // users of the whole app's traffic

    double krd = 0; // other apps sharing the key
    double drd = 0; // other apps sharing a visited domain
    double weighted_gvrd = 0;
    double weighted_ard = 0;
    double weighted_urd = 0;
    double weighted_nurd = 0;

    std::array<double, kFeatureCount> values() const;
    static FeatureVector from_values(const std::array<double, kFeatureCount>& v);

    bool operator==(const FeatureVector&) const = default;
};

// Shannon entropy (base 2) of the empirical distribution count/total.
// Throws DomainError on an empty map.
double value_entropy(const std::map<std::string, std::uint64_t>& counts);

// Fills the 11 local fields; global fields are left at zero.
// Throws DomainError when the pair is absent or has no surviving values.
FeatureVector local_features(const PairTable& table, const PairKey& pair);

std::uint64_t krd(const PairTable& table, const PairKey& pair);
std::uint64_t drd(const PairTable& table, const PairKey& pair);

struct VdmFeatures {
    double gvrd = 0; // weighted occurrence count in other apps
    double ard = 0;  // weighted count of other apps carrying the value
    double urd = 0;  // weighted distinct users of the value elsewhere
    double nurd = 0; // same, restricted to users outside the pair
};

// Weights are the default-filtered occurrence shares of the pair's values.
VdmFeatures weighted_vdm_features(const PairTable& table, const PairKey& pair);

FeatureVector compute_features(const PairTable& table, const PairKey& pair);

using FeatureMatrix = std::map<PairKey, FeatureVector>;

FeatureMatrix feature_matrix(const PairTable& table);

// CSV: header "app,key,<17 names>", RFC 4180 quoting.
void write_feature_csv(const FeatureMatrix& m, std::ostream& out);
FeatureMatrix read_feature_csv(std::istream& in); // throws SchemaError
FeatureMatrix read_feature_csv_file(const std::string& path);

} // namespace pisentry
