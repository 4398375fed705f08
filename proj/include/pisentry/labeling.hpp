#pragma once

#include <iosfwd>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "pisentry/features.hpp"

namespace pisentry {

enum class Label { positive, negative };
enum class LabelSource { rule_keyword, rule_regex, propagated, manual };

const char* to_string(Label l);
const char* to_string(LabelSource s);
Label label_from_string(std::string_view s);             // accepts pos/neg too
LabelSource label_source_from_string(std::string_view s);

// String-form rules: exact lowercase keyword match on the key, or a regex
// matched against entire values.
class RuleSet {
public:
    struct CompiledRegex {
        std::string pattern;
        std::regex re;
    };

    struct TypeRules {
        std::set<std::string> keywords; // stored lowercase
        std::vector<CompiledRegex> regexes;
    };

    std::map<std::string, TypeRules> types; // PI type -> rules

    // User/device identifiers, MAC, location, email and CN phone rules.
    static RuleSet builtin();

    // JSON: { "<pi_type>": {"keywords": [...], "regexes": [...]}, ... }
    static RuleSet load(std::istream& in); // throws SchemaError
    static RuleSet load_file(const std::string& path);

    void add_keyword(const std::string& pi_type, std::string keyword);
    void add_regex(const std::string& pi_type, const std::string& pattern); // throws SchemaError
};

struct RuleMatch {
    PairKey pair;
    std::string pi_type;
    LabelSource source; // rule_keyword or rule_regex
};

// All matches, sorted by (pair, keyword-before-regex, pi_type). A pair may
// match several types; downstream keeps the first.
std::vector<RuleMatch> apply_rules(const PairTable& table, const RuleSet& rules);

// Guard for value propagation: long enough to be an identifier and not a
// short plain number.
bool propagatable_value(std::string_view v, const DefaultValueSet& defaults);

// Marks unlabeled pairs sharing a propagatable value with a labeled pair
// for the same user; runs to fixpoint. Returns seeds plus additions.
std::set<PairKey> propagate(const PairTable& table, const std::set<PairKey>& seeds);

struct LabeledSample {
    PairKey pair;
    FeatureVector features;
    Label label = Label::negative;
    LabelSource source = LabelSource::manual;
    std::string pi_type; // empty when unknown

    bool operator==(const LabeledSample&) const = default;
};

struct Override {
    PairKey pair;
    Label label = Label::negative;
    std::string pi_type;
};

// CSV `app,key,label(pos|neg),pi_type?`; optional header row.
std::vector<Override> load_overrides(std::istream& in);
std::vector<Override> load_overrides_file(const std::string& path);

struct DatasetReport {
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::vector<std::string> warnings;
};

// Combines rule matches, propagation and manual overrides (which win).
// Unknown override pairs warn and are skipped; conflicting duplicates
// throw DomainError, as does an empty result.
std::vector<LabeledSample> assemble_dataset(const PairTable& table,
                                            const FeatureMatrix& matrix,
                                            const std::vector<RuleMatch>& rule_matches,
                                            const std::set<PairKey>& propagated,
                                            const std::vector<Override>& overrides,
                                            DatasetReport* report = nullptr);

// CSV `app,key,label,source,pi_type,<17 features>`.
void write_dataset_csv(const std::vector<LabeledSample>& samples, std::ostream& out);
std::vector<LabeledSample> read_dataset_csv(std::istream& in); // throws SchemaError
std::vector<LabeledSample> read_dataset_csv_file(const std::string& path);

} // namespace pisentry
