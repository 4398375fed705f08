#include "pisentry/labeling.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "pisentry/csv.hpp"
#include "pisentry/errors.hpp"

namespace pisentry {

namespace {

using nlohmann::json;

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

int source_rank(LabelSource s) {
    switch (s) {
    case LabelSource::rule_keyword: return 0;
    case LabelSource::rule_regex: return 1;
    case LabelSource::propagated: return 2;
    case LabelSource::manual: return 3;
    }
    return 3;
}

} // namespace

const char* to_string(Label l) {
    return l == Label::positive ? "positive" : "negative";
}

const char* to_string(LabelSource s) {
    switch (s) {
    case LabelSource::rule_keyword: return "rule_keyword";
    case LabelSource::rule_regex: return "rule_regex";
    case LabelSource::propagated: return "propagated";
    case LabelSource::manual: return "manual";
    }
    return "manual";
}

Label label_from_string(std::string_view s) {
    if (s == "positive" || s == "pos") return Label::positive;
    if (s == "negative" || s == "neg") return Label::negative;
    throw ParseError("unknown label '" + std::string(s) + "'");
}

LabelSource label_source_from_string(std::string_view s) {
    if (s == "rule_keyword") return LabelSource::rule_keyword;
    if (s == "rule_regex") return LabelSource::rule_regex;
    if (s == "propagated") return LabelSource::propagated;
    if (s == "manual") return LabelSource::manual;
    throw ParseError("unknown label source '" + std::string(s) + "'");
}

void RuleSet::add_keyword(const std::string& pi_type, std::string keyword) {
    types[pi_type].keywords.insert(ascii_lower(keyword));
}

void RuleSet::add_regex(const std::string& pi_type, const std::string& pattern) {
    try {
        CompiledRegex cr{pattern, std::regex(pattern, std::regex::ECMAScript)};
        types[pi_type].regexes.push_back(std::move(cr));
    } catch (const std::regex_error& e) {
        throw SchemaError("bad regex for '" + pi_type + "': " + e.what());
    }
}

RuleSet RuleSet::builtin() {
    RuleSet r;
    for (const char* kw : {"user", "userid", "user_cid", "user_id", "user-id"}) {
        r.add_keyword("User Identifier", kw);
    }
    for (const char* kw :
         {"imei", "meid", "imsi", "misi", "deviceid", "device_id", "serialnumber"}) {
        r.add_keyword("Device Identifier", kw);
    }
    r.add_keyword("MAC Address", "mac");
    r.add_keyword("MAC Address", "mac_address");
    // colon- or dash-separated six-group form
    r.add_regex("MAC Address", "(([0-9a-fA-F]{2}:){5}|([0-9a-fA-F]{2}-){5})[0-9a-fA-F]{2}");
    for (const char* kw : {"location", "gps", "latlng", "longitude", "ltt", "lat", "latitude",
                           "lgt", "lng", "lon", "address"}) {
        r.add_keyword("Location", kw);
    }
    r.add_regex("Email", "[a-zA-Z0-9_.+-]+@[a-zA-Z0-9-]+\\.[a-zA-Z0-9-.]+");
    // CN mobile prefixes; the [5|7]-style groups also admit '|', which is harmless
    r.add_regex("Phone Number",
                "^(86)?(13[0-9]|14[5|7]|15[0-9]|166|17[3|6|7|8]|18[0-9]|19[1|8|9])\\d{8}$");
    return r;
}

RuleSet RuleSet::load(std::istream& in) {
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw SchemaError("rules file: not a JSON object");
    RuleSet r;
    for (const auto& [pi_type, spec] : j.items()) {
        if (!spec.is_object()) throw SchemaError("rules file: type entries must be objects");
        if (spec.contains("keywords")) {
            for (const json& kw : spec.at("keywords")) {
                if (!kw.is_string()) throw SchemaError("rules file: keywords must be strings");
                r.add_keyword(pi_type, kw.get<std::string>());
            }
        }
        if (spec.contains("regexes")) {
            for (const json& re : spec.at("regexes")) {
                if (!re.is_string()) throw SchemaError("rules file: regexes must be strings");
                r.add_regex(pi_type, re.get<std::string>());
            }
        }
        if (!r.types.count(pi_type) || (r.types[pi_type].keywords.empty() &&
                                        r.types[pi_type].regexes.empty())) {
            throw SchemaError("rules file: type '" + pi_type + "' declares no rules");
        }
    }
    return r;
}

RuleSet RuleSet::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open rules file: " + path);
    return load(in);
}

std::vector<RuleMatch> apply_rules(const PairTable& table, const RuleSet& rules) {
    std::vector<RuleMatch> out;
    for (const auto& [pair, stats] : table.pairs) {
        std::string key_lower = ascii_lower(pair.key);
        auto values = stats.value_set();
        for (const auto& [pi_type, type_rules] : rules.types) {
            if (type_rules.keywords.count(key_lower)) {
                out.push_back({pair, pi_type, LabelSource::rule_keyword});
                continue;
            }
            bool hit = false;
            for (const auto& cr : type_rules.regexes) {
                for (const auto& value : values) {
                    if (std::regex_match(value, cr.re)) {
                        hit = true;
                        break;
                    }
                }
                if (hit) break;
            }
            if (hit) out.push_back({pair, pi_type, LabelSource::rule_regex});
        }
    }
    std::sort(out.begin(), out.end(), [](const RuleMatch& a, const RuleMatch& b) {
        if (a.pair != b.pair) return a.pair < b.pair;
        if (a.source != b.source) return source_rank(a.source) < source_rank(b.source);
        return a.pi_type < b.pi_type;
    });
    return out;
}

bool propagatable_value(std::string_view v, const DefaultValueSet& defaults) {
    if (v.size() < 6 || defaults.contains(v)) return false;
    bool numeric = std::all_of(v.begin(), v.end(),
                               [](unsigned char c) { return std::isdigit(c) != 0; });
    if (numeric && v.size() < 8) return false;
    return true;
}

std::set<PairKey> propagate(const PairTable& table, const std::set<PairKey>& seeds) {
    // (value, user) -> pairs holding that value for that user
    std::map<std::pair<std::string, std::string>, std::vector<const PairKey*>> index;
    for (const auto& [pair, stats] : table.pairs) {
        for (const auto& [user, counts] : stats.per_user_values) {
            for (const auto& [value, n] : counts) {
                if (propagatable_value(value, table.defaults)) {
                    index[{value, user}].push_back(&pair);
                }
            }
        }
    }

    std::set<PairKey> labeled = seeds;
    std::vector<PairKey> queue(seeds.begin(), seeds.end());
    while (!queue.empty()) {
        PairKey current = std::move(queue.back());
        queue.pop_back();
        auto it = table.pairs.find(current);
        if (it == table.pairs.end()) continue; // seed outside the table
        for (const auto& [user, counts] : it->second.per_user_values) {
            for (const auto& [value, n] : counts) {
                if (!propagatable_value(value, table.defaults)) continue;
                auto bucket = index.find({value, user});
                if (bucket == index.end()) continue;
                for (const PairKey* other : bucket->second) {
                    if (labeled.insert(*other).second) queue.push_back(*other);
                }
            }
        }
    }
    return labeled;
}

std::vector<Override> load_overrides(std::istream& in) {
    auto rows = csv::read(in);
    std::vector<Override> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (i == 0 && row.size() >= 3 && row[0] == "app" && row[1] == "key") continue;
        if (row.size() < 3 || row.size() > 4) {
            throw SchemaError("overrides row " + std::to_string(i + 1) +
                              ": expected app,key,label[,pi_type]");
        }
        Override o;
        o.pair = {row[0], row[1]};
        try {
            o.label = label_from_string(row[2]);
        } catch (const ParseError& e) {
            throw SchemaError("overrides row " + std::to_string(i + 1) + ": " + e.what());
        }
        if (row.size() == 4) o.pi_type = row[3];
        out.push_back(std::move(o));
    }
    return out;
}

std::vector<Override> load_overrides_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open overrides file: " + path);
    return load_overrides(in);
}

std::vector<LabeledSample> assemble_dataset(const PairTable& table,
                                            const FeatureMatrix& matrix,
                                            const std::vector<RuleMatch>& rule_matches,
                                            const std::set<PairKey>& propagated,
                                            const std::vector<Override>& overrides,
                                            DatasetReport* report) {
    DatasetReport local;
    DatasetReport& rep = report ? *report : local;

    struct Assigned {
        Label label;
        LabelSource source;
        std::string pi_type;
    };
    std::map<PairKey, Assigned> labels;

    for (const RuleMatch& m : rule_matches) { // sorted; first match per pair wins
        labels.try_emplace(m.pair, Assigned{Label::positive, m.source, m.pi_type});
    }
    for (const PairKey& pair : propagated) {
        labels.try_emplace(pair, Assigned{Label::positive, LabelSource::propagated, ""});
    }

    std::map<PairKey, const Override*> seen_overrides;
    for (const Override& o : overrides) {
        auto [it, inserted] = seen_overrides.emplace(o.pair, &o);
        if (!inserted) {
            if (it->second->label != o.label || it->second->pi_type != o.pi_type) {
                throw DomainError("conflicting overrides for <" + o.pair.app_id + ", " +
                                  o.pair.key + ">");
            }
            continue; // identical duplicate
        }
        if (!table.pairs.count(o.pair)) {
            rep.warnings.push_back("override for unknown pair <" + o.pair.app_id + ", " +
                                   o.pair.key + "> skipped");
            continue;
        }
        labels[o.pair] = Assigned{o.label, LabelSource::manual, o.pi_type};
    }

    std::vector<LabeledSample> samples;
    samples.reserve(labels.size());
    for (const auto& [pair, assigned] : labels) {
        auto fit = matrix.find(pair);
        if (fit == matrix.end()) continue; // pruned after labeling input was produced
        LabeledSample s;
        s.pair = pair;
        s.features = fit->second;
        s.label = assigned.label;
        s.source = assigned.source;
        s.pi_type = assigned.pi_type;
        if (s.label == Label::positive) {
            ++rep.positives;
        } else {
            ++rep.negatives;
        }
        samples.push_back(std::move(s));
    }
    if (samples.empty()) throw DomainError("labeling produced an empty dataset");
    return samples;
}

void write_dataset_csv(const std::vector<LabeledSample>& samples, std::ostream& out) {
    std::vector<std::string> header{"app", "key", "label", "source", "pi_type"};
    for (const char* name : kFeatureNames) header.emplace_back(name);
    csv::write_row(out, header);
    for (const LabeledSample& s : samples) {
        std::vector<std::string> row{s.pair.app_id, s.pair.key, to_string(s.label),
                                     to_string(s.source), s.pi_type};
        for (double v : s.features.values()) row.push_back(csv::format_double(v));
        csv::write_row(out, row);
    }
}

std::vector<LabeledSample> read_dataset_csv(std::istream& in) {
    auto rows = csv::read(in);
    if (rows.empty()) throw SchemaError("dataset csv: empty file");
    std::vector<std::string> expected{"app", "key", "label", "source", "pi_type"};
    for (const char* name : kFeatureNames) expected.emplace_back(name);
    if (rows.front() != expected) throw SchemaError("dataset csv: unexpected header");

    std::vector<LabeledSample> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() != 5 + kFeatureCount) {
            throw SchemaError("dataset csv: row " + std::to_string(i + 1) + " has " +
                              std::to_string(row.size()) + " fields");
        }
        LabeledSample s;
        s.pair = {row[0], row[1]};
        s.label = label_from_string(row[2]);
        s.source = label_source_from_string(row[3]);
        s.pi_type = row[4];
        std::array<double, kFeatureCount> v{};
        for (std::size_t k = 0; k < kFeatureCount; ++k) v[k] = csv::parse_double(row[5 + k]);
        s.features = FeatureVector::from_values(v);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<LabeledSample> read_dataset_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset csv: " + path);
    return read_dataset_csv(in);
}

} // namespace pisentry
