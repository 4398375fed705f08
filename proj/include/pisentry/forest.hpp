#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pisentry/labeling.hpp"

namespace pisentry {

inline constexpr int kDefaultTreeCount = 20;
inline constexpr double kDefaultConfidence = 0.75;
inline constexpr double kDefaultSplitRatio = 0.8;

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::uint32_t n_pos = 0; // leaf class counts
    std::uint32_t n_neg = 0;

    bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
    std::vector<TreeNode> nodes; // nodes[0] is the root

    // majority vote of the reached leaf; ties vote negative
    bool vote_positive(const std::array<double, kFeatureCount>& x) const;
};

struct ForestModel {
    int n_trees = kDefaultTreeCount;
    std::uint64_t seed = 0;
    std::int64_t trained_at_ms = 0; // caller-provided; 0 keeps files reproducible
    std::vector<std::string> feature_names;
    std::vector<DecisionTree> trees;

    double probability_positive(const std::array<double, kFeatureCount>& x) const;
};

struct TrainTestSplit {
    std::vector<LabeledSample> train;
    std::vector<LabeledSample> test;
};

// Seeded stratified split over the sorted-by-pair dataset. Requires
// >= 10 samples, both classes, 0 < ratio < 1 and a nonempty test side.
TrainTestSplit stratified_split(std::vector<LabeledSample> dataset, double ratio,
                                std::uint64_t seed);

struct TrainInfo {
    bool degenerate = false; // identical feature rows across classes
    std::vector<std::string> warnings;
};

// Bootstrap-resampled trees, Gini splits, ceil(sqrt(17)) = 5 candidate
// features per split (extended only while no valid split exists), grown
// until pure with min leaf 1. Bootstrap draws run over the sorted-by-pair
// order, so row order does not matter. Deterministic for a fixed seed.
ForestModel train_forest(const std::vector<LabeledSample>& train, int n_trees,
                         std::uint64_t seed, TrainInfo* info = nullptr);

enum class PredictedLabel { positive, negative, rejected };
const char* to_string(PredictedLabel l);
PredictedLabel predicted_label_from_string(std::string_view s);

struct Prediction {
    PairKey pair;
    double probability_positive = 0;
    PredictedLabel label = PredictedLabel::rejected;
    double threshold = kDefaultConfidence;
};

// Confidence gate: rejected when max(p, 1-p) < threshold; otherwise
// positive when p > 0.5 (a tie at 0.5 resolves to negative).
Prediction predict(const ForestModel& model, const PairKey& pair,
                   const FeatureVector& features, double threshold = kDefaultConfidence);

struct EvalReport {
    double threshold = kDefaultConfidence;
    std::size_t total = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0; // accepted predictions only
    double precision = 0, recall = 0, accuracy = 0, f1 = 0; // NaN when undefined
    double coverage = 0;

    struct UserCountRow {
        std::uint64_t num_users = 0;
        std::size_t predictions = 0; // accepted
        std::size_t false_predictions = 0;
    };
    std::vector<UserCountRow> false_by_user_count;

    // ungated correctness per vote fraction, over the whole test set
    struct ProbabilityRow {
        double probability = 0;
        std::size_t correct = 0;
        std::size_t incorrect = 0;
    };
    std::vector<ProbabilityRow> probability_histogram;

    std::vector<std::string> warnings;
};

EvalReport evaluate(const ForestModel& model, const std::vector<LabeledSample>& test,
                    double threshold);

// Self-describing JSON with schema version.
void save_model(const ForestModel& model, std::ostream& out);
void save_model_file(const ForestModel& model, const std::string& path);
ForestModel load_model(std::istream& in); // throws SchemaError
ForestModel load_model_file(const std::string& path);

std::string eval_report_to_json(const EvalReport& report);
void write_false_by_user_count_csv(const EvalReport& report, std::ostream& out);
void write_probability_histogram_csv(const EvalReport& report, std::ostream& out);

// CSV `app,key,probability_positive,label`.
void write_predictions_csv(const std::vector<Prediction>& preds, std::ostream& out);
std::vector<Prediction> read_predictions_csv(std::istream& in);
std::vector<Prediction> read_predictions_csv_file(const std::string& path);

} // namespace pisentry
