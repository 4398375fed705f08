// pybind11 surface over the core operations: parsing, aggregation,
// features, labeling, the forest and blacklist matching.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pisentry/blacklist.hpp"
#include "pisentry/errors.hpp"
#include "pisentry/features.hpp"
#include "pisentry/forest.hpp"
#include "pisentry/ground_truth.hpp"
#include "pisentry/ingest.hpp"
#include "pisentry/labeling.hpp"
#include "pisentry/pair_table.hpp"
#include "pisentry/synth.hpp"
#include "pisentry/version.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace pisentry;

namespace {

DefaultValueSet defaults_from(const std::optional<std::vector<std::string>>& values) {
    return values ? DefaultValueSet(*values) : DefaultValueSet::builtin();
}

PairKey pair_of(const std::pair<std::string, std::string>& t) { return {t.first, t.second}; }

std::pair<std::string, std::string> tuple_of(const PairKey& k) { return {k.app_id, k.key}; }

std::array<double, kFeatureCount> array_of(const std::vector<double>& v) {
    if (v.size() != kFeatureCount) {
        throw DomainError("feature vectors carry exactly 17 values, got " +
                          std::to_string(v.size()));
    }
    std::array<double, kFeatureCount> out{};
    std::copy(v.begin(), v.end(), out.begin());
    return out;
}

py::dict sample_dict(const LabeledSample& s) {
    py::dict d;
    d["app"] = s.pair.app_id;
    d["key"] = s.pair.key;
    d["label"] = to_string(s.label);
    d["source"] = to_string(s.source);
    d["pi_type"] = s.pi_type;
    auto values = s.features.values();
    d["features"] = std::vector<double>(values.begin(), values.end());
    return d;
}

LabeledSample sample_from(const py::dict& d) {
    LabeledSample s;
    s.pair = {d["app"].cast<std::string>(), d["key"].cast<std::string>()};
    s.label = label_from_string(d["label"].cast<std::string>());
    if (d.contains("source")) s.source = label_source_from_string(d["source"].cast<std::string>());
    if (d.contains("pi_type")) s.pi_type = d["pi_type"].cast<std::string>();
    s.features = FeatureVector::from_values(array_of(d["features"].cast<std::vector<double>>()));
    return s;
}

std::vector<LabeledSample> samples_from(const std::vector<py::dict>& dicts) {
    std::vector<LabeledSample> out;
    out.reserve(dicts.size());
    for (const py::dict& d : dicts) out.push_back(sample_from(d));
    return out;
}

py::dict eval_dict(const EvalReport& r) {
    py::dict d;
    d["threshold"] = r.threshold;
    d["total"] = r.total;
    d["accepted"] = r.accepted;
    d["rejected"] = r.rejected;
    d["coverage"] = r.coverage;
    d["tp"] = r.tp;
    d["fp"] = r.fp;
    d["tn"] = r.tn;
    d["fn"] = r.fn;
    d["precision"] = r.precision;
    d["recall"] = r.recall;
    d["accuracy"] = r.accuracy;
    d["f1"] = r.f1;
    d["warnings"] = r.warnings;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "statistical personal-information leak detection for mobile HTTP traffic";
    m.attr("__version__") = kVersion;

    {
        py::list names;
        for (const char* n : kFeatureNames) names.append(std::string(n));
        m.attr("FEATURE_NAMES") = names;
    }

    py::register_exception<IoError>(m, "IoError", PyExc_IOError);
    py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);

    py::class_<TrafficRecord>(m, "TrafficRecord")
        .def(py::init([](std::string user, std::string app, std::int64_t ts, std::string domain,
                         std::string path,
                         std::vector<std::tuple<std::string, std::string, std::string>> kvs) {
                 TrafficRecord rec;
                 rec.user_id = std::move(user);
                 rec.app_id = std::move(app);
                 rec.timestamp_ms = ts;
                 rec.domain = std::move(domain);
                 rec.path = std::move(path);
                 for (auto& [k, v, src] : kvs) {
                     rec.kvs.push_back(
                         {std::move(k), std::move(v), kv_source_from_string(src)});
                 }
                 return rec;
             }),
             py::arg("user"), py::arg("app"), py::arg("ts"), py::arg("domain"),
             py::arg("path") = "", py::arg("kvs") = py::list())
        .def_readonly("user", &TrafficRecord::user_id)
        .def_readonly("app", &TrafficRecord::app_id)
        .def_readonly("ts", &TrafficRecord::timestamp_ms)
        .def_readonly("domain", &TrafficRecord::domain)
        .def_readonly("path", &TrafficRecord::path)
        .def_property_readonly("kvs",
                               [](const TrafficRecord& rec) {
                                   std::vector<std::tuple<std::string, std::string, std::string>>
                                       out;
                                   for (const KvPair& kv : rec.kvs) {
                                       out.emplace_back(kv.key, kv.value, to_string(kv.source));
                                   }
                                   return out;
                               })
        .def("to_jsonl", &record_to_jsonl)
        .def("__repr__", [](const TrafficRecord& rec) {
            return "<TrafficRecord " + rec.app_id + "/" + rec.user_id + " " +
                   std::to_string(rec.kvs.size()) + " kvs>";
        });

    m.def("percent_decode", &percent_decode, py::arg("text"));
    m.def(
        "parse_http_request",
        [](const std::string& raw) {
            HttpRequestKv parsed = parse_http_request(raw);
            py::dict d;
            d["domain"] = parsed.domain;
            d["path"] = parsed.path;
            std::vector<std::tuple<std::string, std::string, std::string>> kvs;
            for (const KvPair& kv : parsed.kvs) {
                kvs.emplace_back(kv.key, kv.value, to_string(kv.source));
            }
            d["kvs"] = kvs;
            d["body_unparsed"] = parsed.body_unparsed;
            return d;
        },
        py::arg("raw"));
    m.def("parse_record_line",
          [](const std::string& line) { return record_from_jsonl(line); });
    m.def(
        "read_corpus",
        [](const std::string& path) {
            CorpusReadResult res = read_corpus_file(path);
            py::dict stats;
            stats["lines"] = res.lines;
            stats["errors"] = res.errors;
            stats["unparsed_bodies"] = res.unparsed_bodies;
            stats["error_samples"] = res.error_samples;
            return py::make_tuple(std::move(res.records), stats);
        },
        py::arg("path"));

    m.def(
        "value_entropy",
        [](const std::map<std::string, std::uint64_t>& counts) { return value_entropy(counts); },
        py::arg("counts"));

    py::class_<PairTable>(m, "PairTable")
        .def_property_readonly("pair_count",
                               [](const PairTable& t) { return t.pairs.size(); })
        .def_property_readonly("app_count", [](const PairTable& t) { return t.apps.size(); })
        .def("pairs",
             [](const PairTable& t) {
                 std::vector<std::pair<std::string, std::string>> out;
                 for (const auto& [pair, stats] : t.pairs) out.push_back(tuple_of(pair));
                 return out;
             })
        .def("prune",
             [](PairTable& t) {
                 PruneReport r = prune(t);
                 py::dict d;
                 d["default_only"] = r.default_only;
                 d["singleton"] = r.singleton;
                 return d;
             })
        .def("save",
             [](const PairTable& t, const std::string& path) { save_table_file(t, path); })
        .def_static("load", [](const std::string& path) { return load_table_file(path); });

    m.def(
        "build_table",
        [](const std::vector<TrafficRecord>& records,
           const std::optional<std::vector<std::string>>& defaults) {
            return build_table(records, defaults_from(defaults));
        },
        py::arg("records"), py::arg("defaults") = py::none());

    m.def(
        "feature_matrix",
        [](const PairTable& table) {
            std::map<std::pair<std::string, std::string>, std::vector<double>> out;
            for (const auto& [pair, features] : feature_matrix(table)) {
                auto values = features.values();
                out[tuple_of(pair)] = std::vector<double>(values.begin(), values.end());
            }
            return out;
        },
        py::arg("table"));
    m.def(
        "compute_features",
        [](const PairTable& table, const std::string& app, const std::string& key) {
            auto values = compute_features(table, {app, key}).values();
            return std::vector<double>(values.begin(), values.end());
        },
        py::arg("table"), py::arg("app"), py::arg("key"));

    py::class_<RuleSet>(m, "RuleSet")
        .def_static("builtin", &RuleSet::builtin)
        .def_static("load", &RuleSet::load_file, py::arg("path"))
        .def("add_keyword", &RuleSet::add_keyword, py::arg("pi_type"), py::arg("keyword"))
        .def("add_regex", &RuleSet::add_regex, py::arg("pi_type"), py::arg("pattern"));

    m.def(
        "apply_rules",
        [](const PairTable& table, const std::optional<RuleSet>& rules) {
            std::vector<std::tuple<std::string, std::string, std::string, std::string>> out;
            for (const RuleMatch& match :
                 apply_rules(table, rules ? *rules : RuleSet::builtin())) {
                out.emplace_back(match.pair.app_id, match.pair.key, match.pi_type,
                                 to_string(match.source));
            }
            return out;
        },
        py::arg("table"), py::arg("rules") = py::none());

    m.def(
        "propagate",
        [](const PairTable& table,
           const std::vector<std::pair<std::string, std::string>>& seeds) {
            std::set<PairKey> seed_set;
            for (const auto& s : seeds) seed_set.insert(pair_of(s));
            std::vector<std::pair<std::string, std::string>> out;
            for (const PairKey& pair : propagate(table, seed_set)) out.push_back(tuple_of(pair));
            return out;
        },
        py::arg("table"), py::arg("seeds"));

    m.def(
        "label_dataset",
        [](const PairTable& table, const std::optional<RuleSet>& rules,
           const std::vector<std::tuple<std::string, std::string, std::string, std::string>>&
               overrides,
           const std::optional<std::string>& ground_truth_path, std::uint64_t seed) {
            FeatureMatrix matrix = feature_matrix(table);
            auto matches = apply_rules(table, rules ? *rules : RuleSet::builtin());
            std::set<PairKey> seeds;
            for (const RuleMatch& match : matches) seeds.insert(match.pair);
            std::set<PairKey> propagated = propagate(table, seeds);

            std::vector<Override> ovr;
            for (const auto& [app, key, label, pi_type] : overrides) {
                ovr.push_back({{app, key}, label_from_string(label), pi_type});
            }
            if (ground_truth_path) {
                GroundTruth gt = load_ground_truth_file(*ground_truth_path);
                auto negatives = negatives_from_ground_truth(table, gt, propagated,
                                                             propagated.size(), seed);
                ovr.insert(ovr.end(), negatives.begin(), negatives.end());
            }
            DatasetReport report;
            auto samples = assemble_dataset(table, matrix, matches, propagated, ovr, &report);
            std::vector<py::dict> out;
            out.reserve(samples.size());
            for (const LabeledSample& s : samples) out.push_back(sample_dict(s));
            return out;
        },
        py::arg("table"), py::arg("rules") = py::none(), py::arg("overrides") = py::list(),
        py::arg("ground_truth") = py::none(), py::arg("seed") = 1);

    m.def(
        "stratified_split",
        [](const std::vector<py::dict>& samples, double ratio, std::uint64_t seed) {
            TrainTestSplit split = stratified_split(samples_from(samples), ratio, seed);
            std::vector<py::dict> train, test;
            for (const auto& s : split.train) train.push_back(sample_dict(s));
            for (const auto& s : split.test) test.push_back(sample_dict(s));
            return py::make_tuple(train, test);
        },
        py::arg("samples"), py::arg("ratio") = kDefaultSplitRatio, py::arg("seed") = 1);

    py::class_<ForestModel>(m, "ForestModel")
        .def_readonly("n_trees", &ForestModel::n_trees)
        .def_readonly("seed", &ForestModel::seed)
        .def(
            "predict",
            [](const ForestModel& model, const std::vector<double>& features, double threshold) {
                Prediction p = predict(model, {"", ""},
                                       FeatureVector::from_values(array_of(features)), threshold);
                return py::make_tuple(p.probability_positive, std::string(to_string(p.label)));
            },
            py::arg("features"), py::arg("threshold") = kDefaultConfidence)
        .def("save",
             [](const ForestModel& model, const std::string& path) {
                 save_model_file(model, path);
             })
        .def_static("load", [](const std::string& path) { return load_model_file(path); });

    m.def(
        "train_forest",
        [](const std::vector<py::dict>& samples, int n_trees, std::uint64_t seed) {
            return train_forest(samples_from(samples), n_trees, seed);
        },
        py::arg("samples"), py::arg("n_trees") = kDefaultTreeCount, py::arg("seed") = 1);

    m.def(
        "evaluate",
        [](const ForestModel& model, const std::vector<py::dict>& samples, double threshold) {
            return eval_dict(evaluate(model, samples_from(samples), threshold));
        },
        py::arg("model"), py::arg("samples"), py::arg("threshold") = kDefaultConfidence);

    m.def(
        "match_blacklist",
        [](const std::vector<std::pair<std::string, std::string>>& entries,
           const std::vector<TrafficRecord>& records,
           const std::optional<std::vector<std::string>>& defaults) {
            Blacklist bl;
            bl.default_values = defaults_from(defaults);
            for (const auto& e : entries) bl.entries.insert(pair_of(e));
            std::vector<py::dict> events;
            MatchSummary summary = match_stream(bl, records, [&](const LeakEvent& ev) {
                py::dict d;
                d["user"] = ev.user_id;
                d["app"] = ev.app_id;
                d["ts"] = ev.timestamp_ms;
                d["domain"] = ev.domain;
                d["key"] = ev.key;
                d["value"] = ev.value;
                events.push_back(std::move(d));
            });
            py::dict s;
            s["total"] = summary.total;
            std::map<std::pair<std::string, std::string>, std::uint64_t> per_pair;
            for (const auto& [pair, count] : summary.per_pair) per_pair[tuple_of(pair)] = count;
            s["per_pair"] = per_pair;
            s["per_app"] = summary.per_app;
            std::vector<std::pair<std::string, std::string>> unseen;
            for (const auto& [pair, count] : summary.unseen_pairs) {
                unseen.push_back(tuple_of(pair));
            }
            s["unseen_pairs"] = unseen;
            return py::make_tuple(events, s);
        },
        py::arg("entries"), py::arg("records"), py::arg("defaults") = py::none());

    m.def(
        "generate_corpus",
        [](const std::string& output_dir, std::uint64_t seed, int users, int apps,
           std::optional<int> min_requests, std::optional<int> max_requests) {
            SynthConfig config = SynthConfig::defaults();
            config.seed = seed;
            config.n_users = users;
            config.n_apps = apps;
            if (min_requests) config.min_requests_per_app_user = *min_requests;
            if (max_requests) config.max_requests_per_app_user = *max_requests;

            fs::create_directories(output_dir);
            fs::path dir(output_dir);
            std::ofstream corpus(dir / "corpus.jsonl", std::ios::binary);
            if (!corpus) throw IoError("cannot write corpus under " + output_dir);
            SynthResult result = generate_corpus(config, corpus);
            corpus.close();
            std::ofstream truth(dir / "ground_truth.csv", std::ios::binary);
            save_ground_truth(result.truth, truth);

            py::dict d;
            d["records"] = result.stats.records;
            d["planted_leaks"] = result.stats.planted_leaks;
            d["planted_default_occurrences"] = result.stats.planted_default_occurrences;
            d["ground_truth_pairs"] = result.truth.entries.size();
            d["corpus"] = (dir / "corpus.jsonl").string();
            d["ground_truth"] = (dir / "ground_truth.csv").string();
            return d;
        },
        py::arg("output_dir"), py::arg("seed") = 1, py::arg("users") = 100,
        py::arg("apps") = 50, py::arg("min_requests") = py::none(),
        py::arg("max_requests") = py::none());

    m.def(
        "load_ground_truth",
        [](const std::string& path) {
            std::vector<std::tuple<std::string, std::string, std::string, std::string>> out;
            for (const auto& [pair, entry] : load_ground_truth_file(path).entries) {
                out.emplace_back(pair.app_id, pair.key, to_string(entry.label), entry.pi_kind);
            }
            return out;
        },
        py::arg("path"));
}
