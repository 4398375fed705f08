#include "pisentry/ground_truth.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "pisentry/csv.hpp"
#include "pisentry/errors.hpp"
#include "pisentry/rng.hpp"

namespace pisentry {

void save_ground_truth(const GroundTruth& gt, std::ostream& out) {
    csv::write_row(out, {"app", "key", "label", "pi_kind"});
    for (const auto& [pair, entry] : gt.entries) {
        csv::write_row(out, {pair.app_id, pair.key, to_string(entry.label), entry.pi_kind});
    }
}

GroundTruth load_ground_truth(std::istream& in) {
    auto rows = csv::read(in);
    if (rows.empty()) throw SchemaError("ground truth csv: empty file");
    if (rows.front() != std::vector<std::string>{"app", "key", "label", "pi_kind"}) {
        throw SchemaError("ground truth csv: unexpected header");
    }
    GroundTruth gt;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() != 4) {
            throw SchemaError("ground truth csv: row " + std::to_string(i + 1) +
                              " has " + std::to_string(row.size()) + " fields");
        }
        gt.entries[{row[0], row[1]}] = {label_from_string(row[2]), row[3]};
    }
    return gt;
}

GroundTruth load_ground_truth_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open ground truth file: " + path);
    return load_ground_truth(in);
}

std::vector<Override> negatives_from_ground_truth(const PairTable& table,
                                                  const GroundTruth& gt,
                                                  const std::set<PairKey>& exclude,
                                                  std::size_t n,
                                                  std::uint64_t seed) {
    std::vector<const PairKey*> eligible;
    for (const auto& [pair, stats] : table.pairs) { // sorted order
        if (exclude.count(pair)) continue;
        auto it = gt.entries.find(pair);
        if (it != gt.entries.end() && it->second.label == Label::negative) {
            eligible.push_back(&pair);
        }
    }
    Rng rng(derive_seed(seed, 0x6e656761)); // "nega"
    rng.shuffle(eligible);
    if (eligible.size() > n) eligible.resize(n);

    std::vector<Override> out;
    out.reserve(eligible.size());
    for (const PairKey* pair : eligible) {
        out.push_back({*pair, Label::negative, ""});
    }
    return out;
}

} // namespace pisentry
