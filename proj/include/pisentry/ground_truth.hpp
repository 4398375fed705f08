#pragma once

#include <iosfwd>
#include <map>

#include "pisentry/labeling.hpp"

namespace pisentry {

struct GroundTruthEntry {
    Label label = Label::negative;
    std::string pi_kind; // generator kind, e.g. "imei", "neutral:imei", "timestamp"
};

// Exhaustive labels for a generated corpus: every emitted pair has one.
struct GroundTruth {
    std::map<PairKey, GroundTruthEntry> entries;
};

// CSV `app,key,label,pi_kind` with header.
void save_ground_truth(const GroundTruth& gt, std::ostream& out);
GroundTruth load_ground_truth(std::istream& in); // throws SchemaError
GroundTruth load_ground_truth_file(const std::string& path);

// Seeded sample of up to n ground-truth-negative pairs present in the
// table and not in `exclude`; stands in for manual negative labeling on
// synthetic corpora.
std::vector<Override> negatives_from_ground_truth(const PairTable& table,
                                                  const GroundTruth& gt,
                                                  const std::set<PairKey>& exclude,
                                                  std::size_t n,
                                                  std::uint64_t seed);

} // namespace pisentry
