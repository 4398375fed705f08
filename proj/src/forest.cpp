#include "pisentry/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "pisentry/csv.hpp"
#include "pisentry/errors.hpp"
#include "pisentry/rng.hpp"

namespace pisentry {

namespace {

using nlohmann::json;

constexpr int kModelSchemaVersion = 1;
constexpr const char* kModelKind = "pisentry.forest";
// ceil(sqrt(17)) candidate features per split
constexpr std::size_t kSplitCandidates = 5;

} // namespace

bool DecisionTree::vote_positive(const std::array<double, kFeatureCount>& x) const {
    int i = 0;
    while (!nodes[i].is_leaf()) {
        const TreeNode& n = nodes[i];
        i = (x[static_cast<std::size_t>(n.feature)] <= n.threshold) ? n.left : n.right;
    }
    return nodes[i].n_pos > nodes[i].n_neg;
}

double ForestModel::probability_positive(const std::array<double, kFeatureCount>& x) const {
    int votes = 0;
    for (const DecisionTree& t : trees) {
        if (t.vote_positive(x)) ++votes;
    }
    return static_cast<double>(votes) / static_cast<double>(trees.size());
}

TrainTestSplit stratified_split(std::vector<LabeledSample> dataset, double ratio,
                                std::uint64_t seed) {
    if (dataset.size() < 10) throw DomainError("split needs at least 10 samples");
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw DomainError("split ratio must lie strictly between 0 and 1");
    }
    std::sort(dataset.begin(), dataset.end(),
              [](const LabeledSample& a, const LabeledSample& b) { return a.pair < b.pair; });

    std::vector<std::size_t> pos_idx, neg_idx;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        (dataset[i].label == Label::positive ? pos_idx : neg_idx).push_back(i);
    }
    if (pos_idx.empty() || neg_idx.empty()) {
        throw DomainError("split needs both classes present");
    }

    TrainTestSplit out;
    int cls = 0;
    for (auto* idx : {&pos_idx, &neg_idx}) {
        Rng rng(derive_seed(seed, 0x73706c69, static_cast<std::uint64_t>(cls++)));
        rng.shuffle(*idx);
        auto n_train = static_cast<std::size_t>(
            std::llround(static_cast<double>(idx->size()) * ratio));
        if (n_train == 0 || n_train == idx->size()) {
            throw DomainError("split ratio leaves an empty side for one class");
        }
        for (std::size_t i = 0; i < idx->size(); ++i) {
            (i < n_train ? out.train : out.test).push_back(dataset[(*idx)[i]]);
        }
    }
    auto by_pair = [](const LabeledSample& a, const LabeledSample& b) { return a.pair < b.pair; };
    std::sort(out.train.begin(), out.train.end(), by_pair);
    std::sort(out.test.begin(), out.test.end(), by_pair);
    return out;
}

namespace {

struct TreeBuilder {
    const std::vector<std::array<double, kFeatureCount>>& x;
    const std::vector<int>& y;
    Rng& rng;
    std::vector<TreeNode> nodes;

    int build(std::vector<std::size_t> idx) {
        std::uint32_t n_pos = 0, n_neg = 0;
        for (std::size_t i : idx) {
            if (y[i]) {
                ++n_pos;
            } else {
                ++n_neg;
            }
        }
        int node_id = static_cast<int>(nodes.size());
        nodes.emplace_back();
        if (n_pos == 0 || n_neg == 0 || idx.size() < 2) {
            make_leaf(node_id, n_pos, n_neg);
            return node_id;
        }

        // candidate features in seeded permutation order; extend past the
        // candidate window only while no valid split has been found
        std::array<std::size_t, kFeatureCount> perm;
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = kFeatureCount; i > 1; --i) {
            std::swap(perm[i - 1], perm[rng.below(i)]);
        }

        double best_impurity = std::numeric_limits<double>::infinity();
        std::size_t best_feature = kFeatureCount;
        double best_threshold = 0;
        std::size_t examined = 0;
        for (std::size_t f : perm) {
            if (examined >= kSplitCandidates && best_feature != kFeatureCount) break;
            ++examined;
            evaluate_feature(idx, f, n_pos, n_neg, best_impurity, best_feature, best_threshold);
        }
        if (best_feature == kFeatureCount) { // constant within every feature
            make_leaf(node_id, n_pos, n_neg);
            return node_id;
        }

        std::vector<std::size_t> left, right;
        for (std::size_t i : idx) {
            (x[i][best_feature] <= best_threshold ? left : right).push_back(i);
        }
        idx.clear();
        idx.shrink_to_fit();
        int l = build(std::move(left));
        int r = build(std::move(right));
        nodes[node_id].feature = static_cast<int>(best_feature);
        nodes[node_id].threshold = best_threshold;
        nodes[node_id].left = l;
        nodes[node_id].right = r;
        return node_id;
    }

    void make_leaf(int node_id, std::uint32_t n_pos, std::uint32_t n_neg) {
        nodes[node_id].feature = -1;
        nodes[node_id].n_pos = n_pos;
        nodes[node_id].n_neg = n_neg;
    }

    void evaluate_feature(const std::vector<std::size_t>& idx, std::size_t f,
                          std::uint32_t n_pos, std::uint32_t n_neg, double& best_impurity,
                          std::size_t& best_feature, double& best_threshold) const {
        std::vector<std::pair<double, int>> vals;
        vals.reserve(idx.size());
        for (std::size_t i : idx) vals.emplace_back(x[i][f], y[i]);
        std::sort(vals.begin(), vals.end());

        double total = static_cast<double>(vals.size());
        double left_pos = 0, left_n = 0;
        const double all_pos = n_pos;
        for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
            left_pos += vals[i].second;
            left_n += 1;
            if (vals[i].first == vals[i + 1].first) continue; // not a boundary
            double right_n = total - left_n;
            double right_pos = all_pos - left_pos;
            double gl = gini(left_pos, left_n);
            double gr = gini(right_pos, right_n);
            double impurity = (left_n * gl + right_n * gr) / total;
            if (impurity < best_impurity) {
                double lo = vals[i].first;
                double hi = vals[i + 1].first;
                double mid = lo + (hi - lo) / 2.0;
                if (!(mid >= lo && mid < hi)) mid = lo; // keep the split separating
                best_impurity = impurity;
                best_feature = f;
                best_threshold = mid;
            }
        }
        (void)n_neg;
    }

    static double gini(double pos, double n) {
        double p = pos / n;
        return 2.0 * p * (1.0 - p);
    }
};

} // namespace

ForestModel train_forest(const std::vector<LabeledSample>& train, int n_trees,
                         std::uint64_t seed, TrainInfo* info) {
    if (train.empty()) throw DomainError("cannot train on an empty set");
    if (n_trees <= 0) throw DomainError("tree count must be positive");

    // bootstrap draws are defined over the sorted-by-pair order, so the
    // caller's row order cannot change the model
    std::vector<const LabeledSample*> ordered;
    ordered.reserve(train.size());
    for (const LabeledSample& s : train) ordered.push_back(&s);
    std::sort(ordered.begin(), ordered.end(),
              [](const LabeledSample* a, const LabeledSample* b) { return a->pair < b->pair; });

    std::vector<std::array<double, kFeatureCount>> x;
    std::vector<int> y;
    x.reserve(ordered.size());
    y.reserve(ordered.size());
    bool has_pos = false, has_neg = false;
    for (const LabeledSample* s : ordered) {
        x.push_back(s->features.values());
        y.push_back(s->label == Label::positive ? 1 : 0);
        (s->label == Label::positive ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) throw DomainError("training set needs both classes");

    if (info) {
        bool all_identical = std::all_of(x.begin(), x.end(),
                                         [&](const auto& row) { return row == x.front(); });
        if (all_identical) {
            info->degenerate = true;
            info->warnings.push_back(
                "all feature rows identical across classes; trees fall back to majority leaves");
        }
    }

    ForestModel model;
    model.n_trees = n_trees;
    model.seed = seed;
    model.feature_names.assign(kFeatureNames.begin(), kFeatureNames.end());
    model.trees.reserve(static_cast<std::size_t>(n_trees));

    const std::size_t n = x.size();
    for (int t = 0; t < n_trees; ++t) {
        Rng rng(derive_seed(seed, 0x74726565, static_cast<std::uint64_t>(t)));
        std::vector<std::size_t> sample(n);
        for (std::size_t i = 0; i < n; ++i) sample[i] = rng.below(n);
        std::sort(sample.begin(), sample.end()); // draw order must not matter downstream

        TreeBuilder builder{x, y, rng, {}};
        builder.build(std::move(sample));
        model.trees.push_back(DecisionTree{std::move(builder.nodes)});
    }
    return model;
}

const char* to_string(PredictedLabel l) {
    switch (l) {
    case PredictedLabel::positive: return "positive";
    case PredictedLabel::negative: return "negative";
    case PredictedLabel::rejected: return "rejected";
    }
    return "rejected";
}

PredictedLabel predicted_label_from_string(std::string_view s) {
    if (s == "positive") return PredictedLabel::positive;
    if (s == "negative") return PredictedLabel::negative;
    if (s == "rejected") return PredictedLabel::rejected;
    throw ParseError("unknown predicted label '" + std::string(s) + "'");
}

Prediction predict(const ForestModel& model, const PairKey& pair,
                   const FeatureVector& features, double threshold) {
    if (model.trees.empty()) throw DomainError("model has no trees");
    Prediction pred;
    pred.pair = pair;
    pred.threshold = threshold;
    pred.probability_positive = model.probability_positive(features.values());
    double confidence = std::max(pred.probability_positive, 1.0 - pred.probability_positive);
    if (confidence < threshold) {
        pred.label = PredictedLabel::rejected;
    } else {
        pred.label = pred.probability_positive > 0.5 ? PredictedLabel::positive
                                                     : PredictedLabel::negative;
    }
    return pred;
}

EvalReport evaluate(const ForestModel& model, const std::vector<LabeledSample>& test,
                    double threshold) {
    if (test.empty()) throw DomainError("evaluation set is empty");
    EvalReport rep;
    rep.threshold = threshold;
    rep.total = test.size();

    std::map<std::uint64_t, std::pair<std::size_t, std::size_t>> by_users; // preds, false
    std::map<double, std::pair<std::size_t, std::size_t>> by_prob;         // correct, incorrect

    for (const LabeledSample& s : test) {
        Prediction pred = predict(model, s.pair, s.features, threshold);
        bool truth_positive = s.label == Label::positive;
        bool vote_positive = pred.probability_positive > 0.5;
        auto& prob_row = by_prob[pred.probability_positive];
        if (vote_positive == truth_positive) {
            ++prob_row.first;
        } else {
            ++prob_row.second;
        }

        if (pred.label == PredictedLabel::rejected) {
            ++rep.rejected;
            continue;
        }
        ++rep.accepted;
        bool predicted_positive = pred.label == PredictedLabel::positive;
        if (predicted_positive && truth_positive) ++rep.tp;
        if (predicted_positive && !truth_positive) ++rep.fp;
        if (!predicted_positive && !truth_positive) ++rep.tn;
        if (!predicted_positive && truth_positive) ++rep.fn;

        auto& row = by_users[static_cast<std::uint64_t>(s.features.num_users)];
        ++row.first;
        if (predicted_positive != truth_positive) ++row.second;
    }

    rep.coverage = static_cast<double>(rep.accepted) / static_cast<double>(rep.total);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rep.precision = (rep.tp + rep.fp) ? static_cast<double>(rep.tp) / (rep.tp + rep.fp) : nan;
    rep.recall = (rep.tp + rep.fn) ? static_cast<double>(rep.tp) / (rep.tp + rep.fn) : nan;
    rep.accuracy = rep.accepted ? static_cast<double>(rep.tp + rep.tn) / rep.accepted : nan;
    rep.f1 = (std::isnan(rep.precision) || std::isnan(rep.recall) ||
              rep.precision + rep.recall == 0)
                 ? nan
                 : 2.0 * rep.precision * rep.recall / (rep.precision + rep.recall);
    if (rep.accepted == 0) {
        rep.warnings.push_back("all predictions rejected at threshold " +
                               csv::format_double(threshold) + "; metrics undefined");
    }

    for (const auto& [users, counts] : by_users) {
        rep.false_by_user_count.push_back({users, counts.first, counts.second});
    }
    for (const auto& [prob, counts] : by_prob) {
        rep.probability_histogram.push_back({prob, counts.first, counts.second});
    }
    return rep;
}

void save_model(const ForestModel& model, std::ostream& out) {
    json trees = json::array();
    for (const DecisionTree& t : model.trees) {
        json nodes = json::array();
        for (const TreeNode& n : t.nodes) {
            if (n.is_leaf()) {
                nodes.push_back({{"pos", n.n_pos}, {"neg", n.n_neg}});
            } else {
                nodes.push_back({{"feature", n.feature},
                                 {"threshold", n.threshold},
                                 {"left", n.left},
                                 {"right", n.right}});
            }
        }
        trees.push_back({{"nodes", std::move(nodes)}});
    }
    json j{{"schema_version", kModelSchemaVersion},
           {"kind", kModelKind},
           {"n_trees", model.n_trees},
           {"seed", model.seed},
           {"trained_at_ms", model.trained_at_ms},
           {"feature_names", model.feature_names},
           {"trees", std::move(trees)}};
    out << j.dump() << '\n';
}

void save_model_file(const ForestModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write model file: " + path);
    save_model(model, out);
}

ForestModel load_model(std::istream& in) {
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw SchemaError("model file: not a JSON object");
    if (j.value("kind", "") != kModelKind) throw SchemaError("model file: wrong kind");
    if (j.value("schema_version", -1) != kModelSchemaVersion) {
        throw SchemaError("model file: unsupported schema version");
    }
    try {
        ForestModel model;
        model.n_trees = j.at("n_trees").get<int>();
        model.seed = j.at("seed").get<std::uint64_t>();
        model.trained_at_ms = j.at("trained_at_ms").get<std::int64_t>();
        for (const json& name : j.at("feature_names")) {
            model.feature_names.push_back(name.get<std::string>());
        }
        if (model.feature_names.size() != kFeatureCount) {
            throw SchemaError("model file: expected 17 feature names");
        }
        for (std::size_t i = 0; i < kFeatureCount; ++i) {
            if (model.feature_names[i] != kFeatureNames[i]) {
                throw SchemaError("model file: feature order mismatch at index " +
                                  std::to_string(i));
            }
        }
        for (const json& t : j.at("trees")) {
            DecisionTree tree;
            for (const json& n : t.at("nodes")) {
                TreeNode node;
                if (n.contains("feature")) {
                    node.feature = n.at("feature").get<int>();
                    node.threshold = n.at("threshold").get<double>();
                    node.left = n.at("left").get<int>();
                    node.right = n.at("right").get<int>();
                    if (node.feature < 0 || node.feature >= static_cast<int>(kFeatureCount)) {
                        throw SchemaError("model file: split feature index out of range");
                    }
                } else {
                    node.n_pos = n.at("pos").get<std::uint32_t>();
                    node.n_neg = n.at("neg").get<std::uint32_t>();
                }
                tree.nodes.push_back(node);
            }
            if (tree.nodes.empty()) throw SchemaError("model file: empty tree");
            model.trees.push_back(std::move(tree));
        }
        if (static_cast<int>(model.trees.size()) != model.n_trees) {
            throw SchemaError("model file: tree count mismatch");
        }
        return model;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("model file: ") + e.what());
    }
}

ForestModel load_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file: " + path);
    return load_model(in);
}

std::string eval_report_to_json(const EvalReport& rep) {
    auto num = [](double v) { return std::isnan(v) ? json() : json(v); };
    json by_users = json::array();
    for (const auto& row : rep.false_by_user_count) {
        by_users.push_back({{"num_users", row.num_users},
                            {"predictions", row.predictions},
                            {"false_predictions", row.false_predictions}});
    }
    json by_prob = json::array();
    for (const auto& row : rep.probability_histogram) {
        by_prob.push_back({{"probability", row.probability},
                           {"correct", row.correct},
                           {"incorrect", row.incorrect}});
    }
    json j{{"schema_version", 1},
           {"kind", "pisentry.eval_report"},
           {"threshold", rep.threshold},
           {"total", rep.total},
           {"accepted", rep.accepted},
           {"rejected", rep.rejected},
           {"coverage", rep.coverage},
           {"tp", rep.tp},
           {"fp", rep.fp},
           {"tn", rep.tn},
           {"fn", rep.fn},
           {"precision", num(rep.precision)},
           {"recall", num(rep.recall)},
           {"accuracy", num(rep.accuracy)},
           {"f1", num(rep.f1)},
           {"false_by_user_count", std::move(by_users)},
           {"probability_histogram", std::move(by_prob)},
           {"warnings", rep.warnings}};
    return j.dump();
}

void write_false_by_user_count_csv(const EvalReport& rep, std::ostream& out) {
    csv::write_row(out, {"num_users", "predictions", "false_predictions"});
    for (const auto& row : rep.false_by_user_count) {
        csv::write_row(out, {std::to_string(row.num_users), std::to_string(row.predictions),
                             std::to_string(row.false_predictions)});
    }
}

void write_probability_histogram_csv(const EvalReport& rep, std::ostream& out) {
    csv::write_row(out, {"probability", "correct", "incorrect"});
    for (const auto& row : rep.probability_histogram) {
        csv::write_row(out, {csv::format_double(row.probability), std::to_string(row.correct),
                             std::to_string(row.incorrect)});
    }
}

void write_predictions_csv(const std::vector<Prediction>& preds, std::ostream& out) {
    csv::write_row(out, {"app", "key", "probability_positive", "label"});
    for (const Prediction& p : preds) {
        csv::write_row(out, {p.pair.app_id, p.pair.key,
                             csv::format_double(p.probability_positive), to_string(p.label)});
    }
}

std::vector<Prediction> read_predictions_csv(std::istream& in) {
    auto rows = csv::read(in);
    if (rows.empty()) throw SchemaError("predictions csv: empty file");
    if (rows.front() !=
        std::vector<std::string>{"app", "key", "probability_positive", "label"}) {
        throw SchemaError("predictions csv: unexpected header");
    }
    std::vector<Prediction> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() != 4) throw SchemaError("predictions csv: row " + std::to_string(i + 1));
        Prediction p;
        p.pair = {row[0], row[1]};
        p.probability_positive = csv::parse_double(row[2]);
        p.label = predicted_label_from_string(row[3]);
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<Prediction> read_predictions_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open predictions csv: " + path);
    return read_predictions_csv(in);
}

} // namespace pisentry
