// pi-sentry: end-to-end pipeline driver. Stages talk through files only,
// so every stage can be re-run in isolation.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pisentry/blacklist.hpp"
#include "pisentry/csv.hpp"
#include "pisentry/errors.hpp"
#include "pisentry/features.hpp"
#include "pisentry/forest.hpp"
#include "pisentry/ground_truth.hpp"
#include "pisentry/ingest.hpp"
#include "pisentry/labeling.hpp"
#include "pisentry/pair_table.hpp"
#include "pisentry/synth.hpp"
#include "pisentry/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pisentry;

namespace {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };

LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("PI_SENTRY_LOG");
        if (!env) return LogLevel::info;
        std::string v(env);
        if (v == "debug") return LogLevel::debug;
        if (v == "warn") return LogLevel::warn;
        if (v == "error" || v == "quiet") return LogLevel::error;
        return LogLevel::info;
    }();
    return level;
}

void log_at(LogLevel level, const std::string& msg) {
    if (level < log_level()) return;
    std::fprintf(stderr, "[pi-sentry] %s\n", msg.c_str());
}

void log_info(const std::string& msg) { log_at(LogLevel::info, msg); }
void log_warn(const std::string& msg) { log_at(LogLevel::warn, "warning: " + msg); }

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

void require_input(const std::string& path) {
    if (!fs::exists(path)) throw IoError("missing input file: " + path);
}

std::ofstream open_output(const std::string& path) {
    if (auto dir = fs::path(path).parent_path(); !dir.empty()) {
        fs::create_directories(dir);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write output file: " + path);
    return out;
}

// Every run drops a manifest next to its primary output.
class Manifest {
public:
    Manifest(std::string subcommand, std::string primary_output)
        : subcommand_(std::move(subcommand)), primary_(std::move(primary_output)),
          started_ms_(now_ms()) {}

    void input(const std::string& name, const std::string& path) { inputs_[name] = path; }
    void output(const std::string& name, const std::string& path) { outputs_[name] = path; }
    void seed(std::uint64_t s) { seed_ = static_cast<std::int64_t>(s); }
    void flag(const std::string& name, const std::string& value) {
        flags_[name] = value;
    }

    void write() const {
        fs::path base(primary_);
        fs::path path = fs::is_directory(base) ? base / (subcommand_ + ".manifest.json")
                                               : base.parent_path() /
                                                     (base.stem().string() + ".manifest.json");
        std::string canonical;
        for (const auto& [k, v] : flags_) canonical += k + "=" + v + ";";
        char hash[32];
        std::snprintf(hash, sizeof(hash), "%016llx",
                      static_cast<unsigned long long>(fnv1a(canonical)));
        json j{{"kind", "pisentry.run_manifest"},
               {"schema_version", 1},
               {"subcommand", subcommand_},
               {"tool_version", kVersion},
               {"inputs", inputs_},
               {"outputs", outputs_},
               {"config_hash", hash},
               {"started_unix_ms", started_ms_},
               {"duration_ms", now_ms() - started_ms_}};
        if (seed_ >= 0) j["seed"] = seed_;
        std::ofstream out(path, std::ios::binary);
        if (out) out << j.dump(2) << '\n';
    }

private:
    std::string subcommand_;
    std::string primary_;
    std::int64_t started_ms_;
    std::int64_t seed_ = -1;
    std::map<std::string, std::string> inputs_;
    std::map<std::string, std::string> outputs_;
    std::map<std::string, std::string> flags_;
};

DefaultValueSet defaults_from(const std::string& defaults_file) {
    if (defaults_file.empty()) return DefaultValueSet::builtin();
    require_input(defaults_file);
    return DefaultValueSet::from_file(defaults_file);
}

std::string sibling(const std::string& path, const std::string& suffix) {
    fs::path p(path);
    return (p.parent_path() / (p.stem().string() + suffix)).string();
}

// ---- subcommands ----

struct SynthArgs {
    std::string output_dir = ".";
    std::string config_file;
    std::uint64_t seed = 1;
    int users = -1;
    int apps = -1;
};

void run_synth(const SynthArgs& args) {
    SynthConfig config =
        args.config_file.empty() ? SynthConfig::defaults()
                                 : (require_input(args.config_file),
                                    SynthConfig::from_json_file(args.config_file));
    config.seed = args.seed;
    if (args.users > 0) config.n_users = args.users;
    if (args.apps > 0) config.n_apps = args.apps;

    fs::create_directories(args.output_dir);
    fs::path dir(args.output_dir);
    std::string corpus_path = (dir / "corpus.jsonl").string();
    std::string truth_path = (dir / "ground_truth.csv").string();
    std::string echo_path = (dir / "synth_config.json").string();

    Manifest manifest("synth", args.output_dir);
    manifest.seed(config.seed);
    manifest.flag("seed", std::to_string(config.seed));
    manifest.flag("users", std::to_string(config.n_users));
    manifest.flag("apps", std::to_string(config.n_apps));

    auto corpus = open_output(corpus_path);
    SynthResult result = generate_corpus(config, corpus);
    corpus.close();

    auto truth = open_output(truth_path);
    save_ground_truth(result.truth, truth);

    json echo = json::parse(config.to_json());
    echo["stats"] = {{"records", result.stats.records},
                     {"planted_leaks", result.stats.planted_leaks},
                     {"planted_default_occurrences", result.stats.planted_default_occurrences},
                     {"ground_truth_pairs", result.truth.entries.size()}};
    open_output(echo_path) << echo.dump(2) << '\n';

    manifest.output("corpus", corpus_path);
    manifest.output("ground_truth", truth_path);
    manifest.output("config_echo", echo_path);
    manifest.write();
    log_info("synth: " + std::to_string(result.stats.records) + " records, " +
             std::to_string(result.truth.entries.size()) + " ground-truth pairs");
    std::cout << echo["stats"].dump() << '\n';
}

void run_ingest(const std::string& input, const std::string& output) {
    require_input(input);
    Manifest manifest("ingest", output);
    manifest.input("corpus", input);

    CorpusReadResult res = read_corpus_file(input);
    auto out = open_output(output);
    for (const TrafficRecord& rec : res.records) out << record_to_jsonl(rec) << '\n';

    for (const std::string& sample : res.error_samples) log_warn("parse error: " + sample);
    manifest.output("records", output);
    manifest.write();
    json stats{{"lines", res.lines},
               {"records", res.records.size()},
               {"errors", res.errors},
               {"unparsed_bodies", res.unparsed_bodies}};
    log_info("ingest: " + stats.dump());
    std::cout << stats.dump() << '\n';
}

void run_aggregate(const std::string& input, const std::string& output,
                   const std::string& defaults_file, bool no_prune) {
    require_input(input);
    Manifest manifest("aggregate", output);
    manifest.input("records", input);
    manifest.flag("no_prune", no_prune ? "1" : "0");
    if (!defaults_file.empty()) manifest.input("defaults", defaults_file);

    CorpusReadResult res = read_corpus_file(input);
    if (res.errors) log_warn(std::to_string(res.errors) + " malformed lines skipped");
    PairTable table = build_table(res.records, defaults_from(defaults_file));
    PruneReport report;
    if (!no_prune) report = prune(table);

    auto out = open_output(output);
    save_table(table, out);
    manifest.output("table", output);
    manifest.write();
    json stats{{"records", res.records.size()},
               {"pairs", table.pairs.size()},
               {"apps", table.apps.size()},
               {"pruned_default_only", report.default_only},
               {"pruned_singleton", report.singleton}};
    log_info("aggregate: " + stats.dump());
    std::cout << stats.dump() << '\n';
}

void run_features(const std::string& input, const std::string& output) {
    require_input(input);
    Manifest manifest("features", output);
    manifest.input("table", input);

    PairTable table = load_table_file(input);
    FeatureMatrix matrix = feature_matrix(table);
    auto out = open_output(output);
    write_feature_csv(matrix, out);
    manifest.output("features", output);
    manifest.write();
    json stats{{"pairs", matrix.size()}};
    log_info("features: " + stats.dump());
    std::cout << stats.dump() << '\n';
}

struct LabelArgs {
    std::string table;
    std::string features;
    std::string rules;
    std::string overrides;
    std::string ground_truth;
    std::string output;
    std::uint64_t seed = 1;
};

void run_label(const LabelArgs& args) {
    require_input(args.table);
    require_input(args.features);
    Manifest manifest("label", args.output);
    manifest.input("table", args.table);
    manifest.input("features", args.features);
    manifest.seed(args.seed);

    PairTable table = load_table_file(args.table);
    FeatureMatrix matrix = read_feature_csv_file(args.features);
    RuleSet rules = args.rules.empty()
                        ? RuleSet::builtin()
                        : (require_input(args.rules), RuleSet::load_file(args.rules));
    if (!args.rules.empty()) manifest.input("rules", args.rules);

    auto matches = apply_rules(table, rules);
    std::set<PairKey> seeds;
    for (const RuleMatch& m : matches) seeds.insert(m.pair);
    std::set<PairKey> propagated = propagate(table, seeds);

    std::vector<Override> overrides;
    if (!args.overrides.empty()) {
        require_input(args.overrides);
        manifest.input("overrides", args.overrides);
        overrides = load_overrides_file(args.overrides);
    }
    if (!args.ground_truth.empty()) {
        require_input(args.ground_truth);
        manifest.input("ground_truth", args.ground_truth);
        GroundTruth gt = load_ground_truth_file(args.ground_truth);
        auto negatives =
            negatives_from_ground_truth(table, gt, propagated, propagated.size(), args.seed);
        log_info("label: sampled " + std::to_string(negatives.size()) +
                 " ground-truth negatives");
        overrides.insert(overrides.end(), negatives.begin(), negatives.end());
    }

    DatasetReport report;
    auto samples = assemble_dataset(table, matrix, matches, propagated, overrides, &report);
    for (const std::string& warning : report.warnings) log_warn(warning);

    auto out = open_output(args.output);
    write_dataset_csv(samples, out);
    manifest.output("dataset", args.output);
    manifest.write();
    json stats{{"samples", samples.size()},
               {"positives", report.positives},
               {"negatives", report.negatives},
               {"rule_matches", matches.size()},
               {"propagated", propagated.size()}};
    log_info("label: " + stats.dump());
    std::cout << stats.dump() << '\n';
}

struct TrainArgs {
    std::string input;
    std::string output;
    std::string test_output;
    int trees = kDefaultTreeCount;
    double split = kDefaultSplitRatio;
    std::uint64_t seed = 1;
};

void run_train(const TrainArgs& args) {
    require_input(args.input);
    Manifest manifest("train", args.output);
    manifest.input("dataset", args.input);
    manifest.seed(args.seed);
    manifest.flag("trees", std::to_string(args.trees));
    manifest.flag("split", csv::format_double(args.split));

    auto dataset = read_dataset_csv_file(args.input);
    TrainTestSplit split = stratified_split(dataset, args.split, args.seed);
    TrainInfo info;
    ForestModel model = train_forest(split.train, args.trees, args.seed, &info);
    for (const std::string& warning : info.warnings) log_warn(warning);

    save_model_file(model, args.output);
    manifest.output("model", args.output);
    std::string test_path =
        args.test_output.empty() ? sibling(args.output, "_heldout.csv") : args.test_output;
    auto test_out = open_output(test_path);
    write_dataset_csv(split.test, test_out);
    manifest.output("heldout", test_path);
    manifest.write();
    json stats{{"train", split.train.size()}, {"test", split.test.size()},
               {"trees", args.trees},         {"seed", args.seed}};
    log_info("train: " + stats.dump());
    std::cout << stats.dump() << '\n';
}

void run_evaluate(const std::string& model_path, const std::string& test_path, double threshold,
                  const std::string& output) {
    require_input(model_path);
    require_input(test_path);
    Manifest manifest("evaluate", output);
    manifest.input("model", model_path);
    manifest.input("test", test_path);
    manifest.flag("threshold", csv::format_double(threshold));

    ForestModel model = load_model_file(model_path);
    auto test = read_dataset_csv_file(test_path);
    EvalReport report = evaluate(model, test, threshold);
    for (const std::string& warning : report.warnings) log_warn(warning);

    open_output(output) << eval_report_to_json(report) << '\n';
    std::string users_csv = sibling(output, "_false_by_users.csv");
    std::string prob_csv = sibling(output, "_probability_histogram.csv");
    {
        auto out = open_output(users_csv);
        write_false_by_user_count_csv(report, out);
    }
    {
        auto out = open_output(prob_csv);
        write_probability_histogram_csv(report, out);
    }
    manifest.output("report", output);
    manifest.output("false_by_users", users_csv);
    manifest.output("probability_histogram", prob_csv);
    manifest.write();
    json stats = json::parse(eval_report_to_json(report));
    stats.erase("false_by_user_count");
    stats.erase("probability_histogram");
    log_info("evaluate: " + stats.dump());
    std::cout << stats.dump() << '\n';
}

void run_predict(const std::string& model_path, const std::string& features_path,
                 double threshold, const std::string& output) {
    require_input(model_path);
    require_input(features_path);
    Manifest manifest("predict", output);
    manifest.input("model", model_path);
    manifest.input("features", features_path);
    manifest.flag("threshold", csv::format_double(threshold));

    ForestModel model = load_model_file(model_path);
    FeatureMatrix matrix = read_feature_csv_file(features_path);
    std::vector<Prediction> predictions;
    predictions.reserve(matrix.size());
    std::size_t positives = 0, rejected = 0;
    for (const auto& [pair, features] : matrix) {
        Prediction p = predict(model, pair, features, threshold);
        if (p.label == PredictedLabel::positive) ++positives;
        if (p.label == PredictedLabel::rejected) ++rejected;
        predictions.push_back(std::move(p));
    }
    auto out = open_output(output);
    write_predictions_csv(predictions, out);
    manifest.output("predictions", output);
    manifest.write();
    json stats{{"pairs", predictions.size()}, {"positives", positives}, {"rejected", rejected}};
    log_info("predict: " + stats.dump());
    std::cout << stats.dump() << '\n';
}

void run_blacklist(const std::string& predictions_path, const std::string& output,
                   const std::string& defaults_file) {
    require_input(predictions_path);
    Manifest manifest("blacklist", output);
    manifest.input("predictions", predictions_path);

    auto predictions = read_predictions_csv_file(predictions_path);
    Blacklist bl = build_blacklist(predictions, defaults_from(defaults_file),
                                   fs::path(predictions_path).filename().string());
    if (bl.entries.empty()) log_warn("blacklist is empty: no accepted positive predictions");
    auto out = open_output(output);
    save_blacklist(bl, out);
    manifest.output("blacklist", output);
    manifest.write();
    json stats{{"entries", bl.entries.size()}};
    log_info("blacklist: " + stats.dump());
    std::cout << stats.dump() << '\n';
}

struct MatchArgs {
    std::string blacklist;
    std::string input;
    std::string output;
    std::string summary;
    std::string unseen;
    std::string types;
    std::string defaults_file;
};

void run_match(const MatchArgs& args) {
    require_input(args.blacklist);
    require_input(args.input);
    Manifest manifest("match", args.output);
    manifest.input("blacklist", args.blacklist);
    manifest.input("records", args.input);

    Blacklist bl = load_blacklist_file(args.blacklist, defaults_from(args.defaults_file));
    if (bl.entries.empty()) log_warn("matching against an empty blacklist");
    CorpusReadResult res = read_corpus_file(args.input);
    if (res.errors) log_warn(std::to_string(res.errors) + " malformed lines skipped");

    std::map<PairKey, std::string> types;
    const std::map<PairKey, std::string>* types_ptr = nullptr;
    if (!args.types.empty()) {
        require_input(args.types);
        manifest.input("types", args.types);
        types = load_pair_types_file(args.types);
        types_ptr = &types;
    }

    auto out = open_output(args.output);
    MatchSummary summary = match_stream(
        bl, res.records, [&](const LeakEvent& ev) { out << leak_event_to_jsonl(ev) << '\n'; },
        types_ptr);
    manifest.output("leaks", args.output);

    std::string summary_path =
        args.summary.empty() ? sibling(args.output, "_summary.csv") : args.summary;
    {
        auto s = open_output(summary_path);
        write_match_summary_csv(summary, s);
    }
    manifest.output("summary", summary_path);
    if (!args.unseen.empty()) {
        auto u = open_output(args.unseen);
        write_unseen_pairs_csv(summary, u);
        manifest.output("unseen", args.unseen);
    }
    manifest.write();
    json stats{{"records", res.records.size()},
               {"events", summary.total},
               {"apps_leaking", summary.per_app.size()},
               {"unseen_pairs", summary.unseen_pairs.size()}};
    log_info("match: " + stats.dump());
    std::cout << stats.dump() << '\n';
}

void run_report(const std::string& table_path, const std::string& eval_path,
                const std::string& output_dir) {
    fs::create_directories(output_dir);
    fs::path dir(output_dir);
    Manifest manifest("report", output_dir);

    if (!table_path.empty()) {
        require_input(table_path);
        manifest.input("table", table_path);
        PairTable table = load_table_file(table_path);
        std::map<std::uint64_t, std::uint64_t> histogram; // pair users -> count
        for (const auto& [pair, stats] : table.pairs) {
            histogram[stats.per_user_values.size()] += 1;
        }
        std::string cdf_path = (dir / "user_cdf.csv").string();
        auto out = open_output(cdf_path);
        csv::write_row(out, {"num_users", "pairs", "cumulative_fraction"});
        std::uint64_t running = 0;
        for (const auto& [users, count] : histogram) {
            running += count;
            out << users << ',' << count << ','
                << csv::format_double(static_cast<double>(running) /
                                      static_cast<double>(table.pairs.size()))
                << '\n';
        }
        manifest.output("user_cdf", cdf_path);
    }
    if (!eval_path.empty()) {
        require_input(eval_path);
        manifest.input("eval", eval_path);
        std::ifstream in(eval_path, std::ios::binary);
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded() || j.value("kind", "") != "pisentry.eval_report") {
            throw SchemaError("eval report: unexpected file format");
        }
        EvalReport report;
        for (const json& row : j.at("false_by_user_count")) {
            report.false_by_user_count.push_back({row.at("num_users").get<std::uint64_t>(),
                                                  row.at("predictions").get<std::size_t>(),
                                                  row.at("false_predictions").get<std::size_t>()});
        }
        for (const json& row : j.at("probability_histogram")) {
            report.probability_histogram.push_back({row.at("probability").get<double>(),
                                                    row.at("correct").get<std::size_t>(),
                                                    row.at("incorrect").get<std::size_t>()});
        }
        std::string users_path = (dir / "false_by_users.csv").string();
        std::string prob_path = (dir / "probability_histogram.csv").string();
        {
            auto out = open_output(users_path);
            write_false_by_user_count_csv(report, out);
        }
        {
            auto out = open_output(prob_path);
            write_probability_histogram_csv(report, out);
        }
        manifest.output("false_by_users", users_path);
        manifest.output("probability_histogram", prob_path);
    }
    if (table_path.empty() && eval_path.empty()) {
        throw DomainError("report needs --table and/or --eval");
    }
    manifest.write();
    log_info("report: written to " + output_dir);
    std::cout << json{{"output_dir", output_dir}}.dump() << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"statistical personal-information leak detection for mobile HTTP traffic"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // synth
    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "generate a seeded synthetic corpus");
    synth->add_option("--output", synth_args.output_dir, "output directory")->required();
    synth->add_option("--seed", synth_args.seed, "generator seed");
    synth->add_option("--users", synth_args.users, "number of users");
    synth->add_option("--apps", synth_args.apps, "number of apps");
    synth->add_option("--config", synth_args.config_file, "synth config json");
    synth->callback([&] { run_synth(synth_args); });

    // ingest
    std::string ingest_in, ingest_out;
    auto* ingest = app.add_subcommand("ingest", "normalize a corpus (parses raw requests)");
    ingest->add_option("--input", ingest_in, "corpus jsonl")->required();
    ingest->add_option("--output", ingest_out, "normalized records jsonl")->required();
    ingest->callback([&] { run_ingest(ingest_in, ingest_out); });

    // aggregate
    std::string agg_in, agg_out, agg_defaults;
    bool agg_no_prune = false;
    auto* aggregate = app.add_subcommand("aggregate", "build and prune the pair table");
    aggregate->add_option("--input", agg_in, "records jsonl")->required();
    aggregate->add_option("--output", agg_out, "table snapshot json")->required();
    aggregate->add_option("--defaults", agg_defaults, "default values file, one per line");
    aggregate->add_flag("--no-prune", agg_no_prune, "keep default-only and singleton pairs");
    aggregate->callback([&] { run_aggregate(agg_in, agg_out, agg_defaults, agg_no_prune); });

    // features
    std::string feat_in, feat_out;
    auto* features = app.add_subcommand("features", "compute the 17 features per pair");
    features->add_option("--input", feat_in, "table snapshot json")->required();
    features->add_option("--output", feat_out, "feature matrix csv")->required();
    features->callback([&] { run_features(feat_in, feat_out); });

    // label
    LabelArgs label_args;
    auto* label = app.add_subcommand("label", "bootstrap a labeled dataset");
    label->add_option("--table", label_args.table, "table snapshot json")->required();
    label->add_option("--features", label_args.features, "feature matrix csv")->required();
    label->add_option("--rules", label_args.rules, "rules json (defaults to built-in)");
    label->add_option("--overrides", label_args.overrides, "manual overrides csv");
    label->add_option("--ground-truth", label_args.ground_truth,
                      "ground truth csv for sampling negatives (synthetic corpora)");
    label->add_option("--seed", label_args.seed, "negative sampling seed");
    label->add_option("--output", label_args.output, "dataset csv")->required();
    label->callback([&] { run_label(label_args); });

    // train
    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "split the dataset and train the forest");
    train->add_option("--input", train_args.input, "dataset csv")->required();
    train->add_option("--output", train_args.output, "model json")->required();
    train->add_option("--test-output", train_args.test_output,
                      "held-out csv (default <model>_heldout.csv)");
    train->add_option("--trees", train_args.trees, "tree count")->default_val(kDefaultTreeCount);
    train->add_option("--split", train_args.split, "train fraction")
        ->default_val(kDefaultSplitRatio);
    train->add_option("--seed", train_args.seed, "split/bootstrap seed");
    train->callback([&] { run_train(train_args); });

    // evaluate
    std::string eval_model, eval_test, eval_out;
    double eval_threshold = kDefaultConfidence;
    auto* evaluate = app.add_subcommand("evaluate", "score a model on a labeled set");
    evaluate->add_option("--model", eval_model, "model json")->required();
    evaluate->add_option("--test", eval_test, "labeled csv")->required();
    evaluate->add_option("--threshold", eval_threshold, "confidence gate")
        ->default_val(kDefaultConfidence);
    evaluate->add_option("--output", eval_out, "report json")->required();
    evaluate->callback([&] { run_evaluate(eval_model, eval_test, eval_threshold, eval_out); });

    // predict
    std::string pred_model, pred_features, pred_out;
    double pred_threshold = kDefaultConfidence;
    auto* predict_cmd = app.add_subcommand("predict", "classify every pair in a feature matrix");
    predict_cmd->add_option("--model", pred_model, "model json")->required();
    predict_cmd->add_option("--features", pred_features, "feature matrix csv")->required();
    predict_cmd->add_option("--threshold", pred_threshold, "confidence gate")
        ->default_val(kDefaultConfidence);
    predict_cmd->add_option("--output", pred_out, "predictions csv")->required();
    predict_cmd->callback(
        [&] { run_predict(pred_model, pred_features, pred_threshold, pred_out); });

    // blacklist
    std::string bl_preds, bl_out, bl_defaults;
    auto* blacklist = app.add_subcommand("blacklist", "collect accepted positives into a list");
    blacklist->add_option("--predictions", bl_preds, "predictions csv")->required();
    blacklist->add_option("--output", bl_out, "blacklist json")->required();
    blacklist->add_option("--defaults", bl_defaults, "default values file");
    blacklist->callback([&] { run_blacklist(bl_preds, bl_out, bl_defaults); });

    // match
    MatchArgs match_args;
    auto* match = app.add_subcommand("match", "flag blacklisted pairs in traffic");
    match->add_option("--blacklist", match_args.blacklist, "blacklist json")->required();
    match->add_option("--input", match_args.input, "records jsonl")->required();
    match->add_option("--output", match_args.output, "leak events jsonl")->required();
    match->add_option("--summary", match_args.summary, "summary csv");
    match->add_option("--unseen", match_args.unseen, "unseen pairs csv (for retraining)");
    match->add_option("--types", match_args.types, "pair type csv for the per-PI breakdown");
    match->add_option("--defaults", match_args.defaults_file, "default values file");
    match->callback([&] { run_match(match_args); });

    // report
    std::string report_table, report_eval, report_dir = ".";
    auto* report = app.add_subcommand("report", "render user-count and probability csv reports");
    report->add_option("--table", report_table, "table snapshot json");
    report->add_option("--eval", report_eval, "evaluation report json");
    report->add_option("--output", report_dir, "output directory")->required();
    report->callback([&] { run_report(report_table, report_eval, report_dir); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const IoError& e) {
        std::cerr << json{{"error", e.what()}, {"code", 2}}.dump() << '\n';
        return 2;
    } catch (const SchemaError& e) {
        std::cerr << json{{"error", e.what()}, {"code", 3}}.dump() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", e.what()}, {"code", 1}}.dump() << '\n';
        return 1;
    }
    return 0;
}
