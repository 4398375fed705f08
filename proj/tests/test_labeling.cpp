#include <doctest.h>

#include <sstream>

#include "pisentry/errors.hpp"
#include "pisentry/ground_truth.hpp"
#include "pisentry/labeling.hpp"
#include "test_support.hpp"

using namespace pisentry;
using namespace pisentry::testing;

namespace {

PairTable table_with_pairs(
    std::vector<std::tuple<std::string, std::string, std::string, std::string>> rows) {
    // (user, app, key, value); every pair emitted twice so pruning keeps it
    std::vector<TrafficRecord> records;
    for (const auto& [user, app, key, value] : rows) {
        records.push_back(make_record(user, app, "d1", {{key, value}}));
        records.push_back(make_record(user, app, "d1", {{key, value}}));
    }
    auto table = build_table(records, DefaultValueSet::builtin());
    prune(table);
    return table;
}

} // namespace

TEST_CASE("keyword rules match exactly on the lowercased key") {
    auto table = table_with_pairs({{"u1", "a", "imei", "865412039812345"},
                                   {"u1", "a", "IMEI", "865412039812345"},
                                   {"u1", "a", "emailcount", "3"},
                                   {"u1", "a", "startDate", "20200526"}});
    auto matches = apply_rules(table, RuleSet::builtin());
    REQUIRE(matches.size() == 2);
    CHECK(matches[0].pair == PairKey{"a", "IMEI"});
    CHECK(matches[0].pi_type == "Device Identifier");
    CHECK(matches[0].source == LabelSource::rule_keyword);
    CHECK(matches[1].pair == PairKey{"a", "imei"});
}

TEST_CASE("regex rules match whole values only") {
    auto table = table_with_pairs({{"u1", "a", "m1", "ab:cd:ef:01:23:45"},
                                   {"u1", "a", "m2", "AB-CD-EF-01-23-45"},
                                   {"u1", "a", "m3", "ab:cd:ef:01:23"},
                                   {"u1", "a", "m4", "xx:cd:ef:01:23:45"},
                                   {"u1", "a", "m5", "prefix ab:cd:ef:01:23:45"},
                                   {"u1", "a", "e1", "a.b+c@mail-x.org"},
                                   {"u1", "a", "e2", "a@b"},
                                   {"u1", "a", "p1", "13812345678"},
                                   {"u1", "a", "p2", "8613812345678"},
                                   {"u1", "a", "p3", "12812345678"},
                                   {"u1", "a", "p4", "1381234567"}});
    auto matches = apply_rules(table, RuleSet::builtin());
    std::map<PairKey, std::string> by_pair;
    for (const auto& m : matches) {
        CHECK(m.source == LabelSource::rule_regex);
        by_pair[m.pair] = m.pi_type;
    }
    CHECK(by_pair == std::map<PairKey, std::string>{{{"a", "e1"}, "Email"},
                                                    {{"a", "m1"}, "MAC Address"},
                                                    {{"a", "m2"}, "MAC Address"},
                                                    {{"a", "p1"}, "Phone Number"},
                                                    {{"a", "p2"}, "Phone Number"}});
}

TEST_CASE("rule matching ignores default values") {
    auto table = table_with_pairs({{"u1", "a", "k", "none"}, {"u1", "a", "k", "13812345678"}});
    auto matches = apply_rules(table, RuleSet::builtin());
    REQUIRE(matches.size() == 1); // the real value still matches
    CHECK(matches[0].pi_type == "Phone Number");
}

TEST_CASE("rule files load and apply") {
    std::istringstream in(R"({"Session": {"keywords": ["sid"], "regexes": ["tok-[0-9]+"]}})");
    RuleSet rules = RuleSet::load(in);
    auto table = table_with_pairs({{"u1", "a", "sid", "whatever"},
                                   {"u1", "a", "other", "tok-123"},
                                   {"u1", "a", "other2", "tok-123-suffix"}});
    auto matches = apply_rules(table, rules);
    REQUIRE(matches.size() == 2);
    CHECK(matches[0].pair == PairKey{"a", "other"}); // anchored: suffix form fails
    CHECK(matches[1].pair == PairKey{"a", "sid"});

    std::istringstream bad(R"({"X": {"keywords": [], "regexes": ["("]}})");
    CHECK_THROWS_AS(RuleSet::load(bad), SchemaError);
    std::istringstream empty_type(R"({"X": {}})");
    CHECK_THROWS_AS(RuleSet::load(empty_type), SchemaError);
}

TEST_CASE("propagation guard") {
    auto defaults = DefaultValueSet::builtin();
    CHECK(propagatable_value("HJS5T19626000575", defaults));
    CHECK(propagatable_value("abcdef", defaults));
    CHECK(propagatable_value("12345678", defaults)); // numeric but long
    CHECK_FALSE(propagatable_value("1", defaults));
    CHECK_FALSE(propagatable_value("123456", defaults)); // short plain number
    CHECK_FALSE(propagatable_value("none", defaults));
    CHECK_FALSE(propagatable_value("abc", defaults));
}

TEST_CASE("value propagation") {
    SUBCASE("shared identifier for the same user propagates") {
        auto table = table_with_pairs({{"u1", "a", "imei", "HJS5T19626000575"},
                                       {"u1", "b", "zz", "HJS5T19626000575"},
                                       {"u2", "c", "ww", "unrelated-value"}});
        auto out = propagate(table, {{"a", "imei"}});
        CHECK(out == std::set<PairKey>{{"a", "imei"}, {"b", "zz"}});
    }
    SUBCASE("different user does not propagate") {
        auto table = table_with_pairs({{"u1", "a", "imei", "HJS5T19626000575"},
                                       {"u2", "b", "zz", "HJS5T19626000575"}});
        auto out = propagate(table, {{"a", "imei"}});
        CHECK(out == std::set<PairKey>{{"a", "imei"}});
    }
    SUBCASE("short values are guarded") {
        auto table = table_with_pairs({{"u1", "a", "imei", "1"}, {"u1", "b", "zz", "1"}});
        auto out = propagate(table, {{"a", "imei"}});
        CHECK(out == std::set<PairKey>{{"a", "imei"}});
    }
    SUBCASE("no shared values: output equals seeds") {
        auto table = table_with_pairs({{"u1", "a", "imei", "HJS5T19626000575"},
                                       {"u1", "b", "zz", "something-else-01"}});
        auto out = propagate(table, {{"a", "imei"}});
        CHECK(out == std::set<PairKey>{{"a", "imei"}});
    }
    SUBCASE("chains run to fixpoint") {
        auto table = table_with_pairs({{"u1", "a", "k", "value-alpha"},
                                       {"u1", "b", "l", "value-alpha"},
                                       {"u1", "b", "l", "value-beta1"},
                                       {"u1", "c", "m", "value-beta1"}});
        auto out = propagate(table, {{"a", "k"}});
        CHECK(out.size() == 3);
        CHECK(out.count({"c", "m"}));
    }
}

TEST_CASE("override files") {
    std::istringstream in("app,key,label,pi_type\na,imei,neg,\nb,zz,pos,Device Identifier\n");
    auto overrides = load_overrides(in);
    REQUIRE(overrides.size() == 2);
    CHECK(overrides[0].pair == PairKey{"a", "imei"});
    CHECK(overrides[0].label == Label::negative);
    CHECK(overrides[1].label == Label::positive);
    CHECK(overrides[1].pi_type == "Device Identifier");

    std::istringstream bad("a,b\n");
    CHECK_THROWS_AS(load_overrides(bad), SchemaError);
}

TEST_CASE("dataset assembly") {
    auto table = table_with_pairs({{"u1", "a", "imei", "865412039812345"},
                                   {"u1", "a", "ts", "900001"},
                                   {"u1", "b", "zz", "865412039812345"}});
    auto matrix = feature_matrix(table);
    auto matches = apply_rules(table, RuleSet::builtin());
    auto propagated = propagate(table, {{"a", "imei"}});

    SUBCASE("rules plus propagation plus manual negative") {
        std::vector<Override> overrides{{{"a", "ts"}, Label::negative, ""}};
        DatasetReport report;
        auto samples = assemble_dataset(table, matrix, matches, propagated, overrides, &report);
        REQUIRE(samples.size() == 3);
        CHECK(report.positives == 2);
        CHECK(report.negatives == 1);
        std::map<PairKey, LabelSource> sources;
        for (const auto& s : samples) sources[s.pair] = s.source;
        CHECK(sources.at({"a", "imei"}) == LabelSource::rule_keyword);
        CHECK(sources.at({"b", "zz"}) == LabelSource::propagated);
        CHECK(sources.at({"a", "ts"}) == LabelSource::manual);
    }
    SUBCASE("override flips a rule positive") {
        std::vector<Override> overrides{{{"a", "imei"}, Label::negative, ""}};
        auto samples = assemble_dataset(table, matrix, matches, {}, overrides, nullptr);
        for (const auto& s : samples) {
            if (s.pair == PairKey{"a", "imei"}) {
                CHECK(s.label == Label::negative);
                CHECK(s.source == LabelSource::manual);
            }
        }
    }
    SUBCASE("unknown override pair warns and is skipped") {
        std::vector<Override> overrides{{{"nope", "nope"}, Label::negative, ""}};
        DatasetReport report;
        auto samples = assemble_dataset(table, matrix, matches, {}, overrides, &report);
        CHECK(!samples.empty());
        REQUIRE(report.warnings.size() == 1);
    }
    SUBCASE("conflicting duplicate overrides are an error") {
        std::vector<Override> overrides{{{"a", "ts"}, Label::negative, ""},
                                        {{"a", "ts"}, Label::positive, ""}};
        CHECK_THROWS_AS(assemble_dataset(table, matrix, matches, {}, overrides, nullptr),
                        DomainError);
    }
    SUBCASE("nothing labeled is an error") {
        auto quiet = table_with_pairs({{"u1", "a", "plain", "justdata99"}});
        auto quiet_matrix = feature_matrix(quiet);
        CHECK_THROWS_AS(assemble_dataset(quiet, quiet_matrix, {}, {}, {}, nullptr), DomainError);
    }
}

TEST_CASE("dataset csv round-trips") {
    auto table = table_with_pairs({{"u1", "a", "imei", "865412039812345"},
                                   {"u1", "a", "ts", "900001"}});
    auto matrix = feature_matrix(table);
    auto matches = apply_rules(table, RuleSet::builtin());
    std::vector<Override> overrides{{{"a", "ts"}, Label::negative, ""}};
    auto samples = assemble_dataset(table, matrix, matches, {}, overrides, nullptr);

    std::stringstream buf;
    write_dataset_csv(samples, buf);
    auto back = read_dataset_csv(buf);
    CHECK(back == samples);
}

TEST_CASE("ground truth io and negative sampling") {
    GroundTruth gt;
    gt.entries[{"a", "imei"}] = {Label::positive, "imei"};
    gt.entries[{"a", "ts"}] = {Label::negative, "timestamp"};
    gt.entries[{"a", "seq"}] = {Label::negative, "counter"};

    std::stringstream buf;
    save_ground_truth(gt, buf);
    GroundTruth back = load_ground_truth(buf);
    CHECK(back.entries.size() == 3);
    CHECK(back.entries.at({"a", "imei"}).label == Label::positive);
    CHECK(back.entries.at({"a", "ts"}).pi_kind == "timestamp");

    auto table = table_with_pairs({{"u1", "a", "imei", "865412039812345"},
                                   {"u1", "a", "ts", "900001"},
                                   {"u1", "a", "seq", "s1"}});
    auto negs = negatives_from_ground_truth(table, gt, {{"a", "ts"}}, 5, 1);
    REQUIRE(negs.size() == 1); // imei is positive, ts excluded
    CHECK(negs[0].pair == PairKey{"a", "seq"});
    CHECK(negs[0].label == Label::negative);

    auto one = negatives_from_ground_truth(table, gt, {}, 1, 1);
    CHECK(one.size() == 1);
    auto same = negatives_from_ground_truth(table, gt, {}, 1, 1);
    CHECK(one[0].pair == same[0].pair); // seeded
}
