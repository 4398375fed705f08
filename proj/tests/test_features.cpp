#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracle.hpp"
#include "pisentry/errors.hpp"
#include "pisentry/features.hpp"
#include "test_support.hpp"

using namespace pisentry;
using namespace pisentry::testing;

namespace {

constexpr double kOracleTolerance = 1e-9;

void check_close(const FeatureVector& got, const FeatureVector& want, double tol) {
    auto g = got.values();
    auto w = want.values();
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        INFO("feature ", kFeatureNames[i]);
        CHECK(std::abs(g[i] - w[i]) <= tol);
    }
}

} // namespace

TEST_CASE("value entropy") {
    CHECK(value_entropy({{"v", 5}}) == doctest::Approx(0.0));
    CHECK(value_entropy({{"a", 1}, {"b", 1}}) == doctest::Approx(1.0));
    CHECK(value_entropy({{"x1", 2}, {"x2", 1}}) == doctest::Approx(0.9183).epsilon(1e-4));
    CHECK_THROWS_AS(value_entropy({}), DomainError);
}

TEST_CASE("local features on the T1 fixture") {
    auto table = build_table(corpus_t1(), DefaultValueSet::builtin());
    FeatureVector f = local_features(table, {"A", "k"});
    CHECK(f.max_distinct_per_user == doctest::Approx(2.0));
    CHECK(f.min_distinct_per_user == doctest::Approx(1.0));
    CHECK(f.avg_distinct_per_user == doctest::Approx(1.5));
    CHECK(f.var_distinct_per_user == doctest::Approx(0.25));
    CHECK(f.max_entropy_per_user == doctest::Approx(0.9183).epsilon(1e-4));
    CHECK(f.min_entropy_per_user == doctest::Approx(0.0));
    CHECK(f.avg_entropy_per_user == doctest::Approx(0.4591).epsilon(1e-4));
    CHECK(f.lvrd == doctest::Approx(0.5));
    CHECK(f.key_frequency == doctest::Approx(1.0));
    CHECK(f.num_users == doctest::Approx(2.0));
}

TEST_CASE("single-user single-value pair degenerates cleanly") {
    auto table = build_table({make_record("u", "a", "d", {{"k", "v"}}),
                              make_record("u", "a", "d", {{"k", "v"}})},
                             DefaultValueSet::builtin());
    FeatureVector f = local_features(table, {"a", "k"});
    CHECK(f.max_distinct_per_user == doctest::Approx(1.0));
    CHECK(f.min_distinct_per_user == doctest::Approx(1.0));
    CHECK(f.var_distinct_per_user == doctest::Approx(0.0));
    CHECK(f.max_entropy_per_user == doctest::Approx(0.0));
    CHECK(f.var_entropy_per_user == doctest::Approx(0.0));
    CHECK(f.lvrd == doctest::Approx(0.0));
}

TEST_CASE("key frequency counts presence over app requests") {
    std::vector<TrafficRecord> records;
    for (int i = 0; i < 12; ++i) {
        std::vector<std::pair<std::string, std::string>> kvs = {{"other", "o"}};
        if (i < 3) kvs.push_back({"k", "v" + std::to_string(i)});
        records.push_back(make_record("u", "a", "d", kvs));
    }
    auto table = build_table(records, DefaultValueSet::builtin());
    FeatureVector f = local_features(table, {"a", "k"});
    CHECK(f.key_frequency == doctest::Approx(0.25));
}

TEST_CASE("key and domain reuse degrees") {
    auto table = build_table(corpus_t1(), DefaultValueSet::builtin());
    SUBCASE("key unique to its app") {
        CHECK(krd(table, {"A", "k"}) == 0);
        CHECK(krd(table, {"B", "q"}) == 0);
    }
    SUBCASE("domain shared through d1") {
        CHECK(drd(table, {"A", "k"}) == 1);
        CHECK(drd(table, {"B", "q"}) == 1);
    }
    SUBCASE("key reused across apps") {
        auto records = corpus_t1();
        records.push_back(make_record("u1", "C", "d9", {{"k", "zz"}}));
        auto more = build_table(records, DefaultValueSet::builtin());
        CHECK(krd(more, {"A", "k"}) == 1);
        CHECK(drd(more, {"A", "k"}) == 1); // d9 does not intersect H
    }
    SUBCASE("disjoint domains") {
        auto records = std::vector<TrafficRecord>{
            make_record("u1", "a", "d1", {{"k", "v1"}}),
            make_record("u1", "a", "d1", {{"k", "v2"}}),
            make_record("u1", "b", "d2", {{"z", "w"}}),
        };
        auto t = build_table(records, DefaultValueSet::builtin());
        CHECK(drd(t, {"a", "k"}) == 0);
    }
}

TEST_CASE("weighted value distribution features on T1") {
    SUBCASE("reuse by a pair user") {
        auto table = build_table(corpus_t1(), DefaultValueSet::builtin());
        VdmFeatures v = weighted_vdm_features(table, {"A", "k"});
        CHECK(v.gvrd == doctest::Approx(0.75));
        CHECK(v.ard == doctest::Approx(0.75));
        CHECK(v.urd == doctest::Approx(0.75));
        CHECK(v.nurd == doctest::Approx(0.0));
    }
    SUBCASE("reuse by a new user") {
        auto table = build_table(corpus_t1_new_user(), DefaultValueSet::builtin());
        VdmFeatures v = weighted_vdm_features(table, {"A", "k"});
        CHECK(v.urd == doctest::Approx(0.75));
        CHECK(v.nurd == doctest::Approx(0.75));
    }
    SUBCASE("values unseen elsewhere give zeros") {
        auto table = build_table({make_record("u1", "a", "d", {{"k", "only-here"}}),
                                  make_record("u2", "a", "d", {{"k", "only-here"}}),
                                  make_record("u1", "b", "d", {{"z", "other"}})},
                                 DefaultValueSet::builtin());
        VdmFeatures v = weighted_vdm_features(table, {"a", "k"});
        CHECK(v.gvrd == 0.0);
        CHECK(v.ard == 0.0);
        CHECK(v.urd == 0.0);
        CHECK(v.nurd == 0.0);
    }
}

TEST_CASE("feature matrix covers exactly the surviving pairs") {
    auto table = build_table(corpus_t1(), DefaultValueSet::builtin());
    prune(table);
    auto m = feature_matrix(table);
    CHECK(m.size() == 2);
    CHECK(m.count({"A", "k"}));
    CHECK(m.count({"B", "q"}));

    // a pruned pair is absent
    auto with_junk = corpus_t1();
    with_junk.push_back(make_record("u1", "A", "d1", {{"solo", "abcdef"}}));
    auto table2 = build_table(with_junk, DefaultValueSet::builtin());
    prune(table2);
    auto m2 = feature_matrix(table2);
    CHECK_FALSE(m2.count({"A", "solo"}));
}

TEST_CASE("brute-force oracle agrees on T1 and randomized micro-corpora") {
    auto defaults = DefaultValueSet::builtin();
    SUBCASE("T1") {
        auto table = build_table(corpus_t1(), defaults);
        prune(table);
        for (const auto& [pair, stats] : table.pairs) {
            check_close(compute_features(table, pair), oracle_features(corpus_t1(), defaults, pair),
                        kOracleTolerance);
        }
    }
    SUBCASE("randomized") {
        Rng rng(9001);
        int corpora = 0;
        while (corpora < 25) {
            auto records = random_micro_corpus(rng);
            auto table = build_table(records, defaults);
            prune(table);
            if (table.pairs.empty()) continue;
            ++corpora;
            auto matrix = feature_matrix(table);
            for (const auto& [pair, features] : matrix) {
                check_close(features, oracle_features(records, defaults, pair), kOracleTolerance);
            }
        }
    }
}

TEST_CASE("duplicating every record scales only the occurrence count") {
    Rng rng(9002);
    int tested = 0;
    while (tested < 8) {
        auto records = random_micro_corpus(rng);
        auto table = build_table(records, DefaultValueSet::builtin());
        prune(table);
        if (table.pairs.empty()) continue;
        ++tested;

        auto doubled = records;
        doubled.insert(doubled.end(), records.begin(), records.end());
        auto table2 = build_table(doubled, DefaultValueSet::builtin());
        prune(table2);

        for (const auto& [pair, stats] : table.pairs) {
            FeatureVector a = compute_features(table, pair);
            FeatureVector b = compute_features(table2, pair);
            CHECK(b.lvrd == doctest::Approx(a.lvrd));
            CHECK(b.key_frequency == doctest::Approx(a.key_frequency));
            CHECK(b.num_users == doctest::Approx(a.num_users));
            CHECK(b.krd == doctest::Approx(a.krd));
            CHECK(b.drd == doctest::Approx(a.drd));
            CHECK(b.weighted_ard == doctest::Approx(a.weighted_ard));
            CHECK(b.weighted_urd == doctest::Approx(a.weighted_urd));
            CHECK(b.weighted_nurd == doctest::Approx(a.weighted_nurd));
            CHECK(b.weighted_gvrd == doctest::Approx(2.0 * a.weighted_gvrd));
            CHECK(b.max_distinct_per_user == doctest::Approx(a.max_distinct_per_user));
            CHECK(b.avg_distinct_per_user == doctest::Approx(a.avg_distinct_per_user));
            CHECK(b.max_entropy_per_user == doctest::Approx(a.max_entropy_per_user));
            CHECK(b.avg_entropy_per_user == doctest::Approx(a.avg_entropy_per_user));
        }
    }
}

TEST_CASE("a new app reusing a value cannot decrease ard or urd") {
    Rng rng(9003);
    int tested = 0;
    while (tested < 8) {
        auto records = random_micro_corpus(rng);
        auto table = build_table(records, DefaultValueSet::builtin());
        prune(table);
        if (table.pairs.empty()) continue;
        const auto& [pair, stats] = *table.pairs.begin();
        auto values = stats.value_set();
        if (values.empty()) continue;
        ++tested;

        VdmFeatures before = weighted_vdm_features(table, pair);
        auto extended = records;
        extended.push_back(
            make_record("u1", "brand-new-app", "d1.com", {{"some_key", *values.begin()}}));
        auto table2 = build_table(extended, DefaultValueSet::builtin());
        VdmFeatures after = weighted_vdm_features(table2, pair);
        CHECK(after.ard >= before.ard - 1e-12);
        CHECK(after.urd >= before.urd - 1e-12);
    }
}

TEST_CASE("nurd never exceeds urd") {
    Rng rng(9004);
    for (int trial = 0; trial < 15; ++trial) {
        auto records = random_micro_corpus(rng);
        auto table = build_table(records, DefaultValueSet::builtin());
        prune(table);
        for (const auto& [pair, stats] : table.pairs) {
            VdmFeatures v = weighted_vdm_features(table, pair);
            CHECK(v.nurd <= v.urd + 1e-12);
        }
    }
}

TEST_CASE("feature csv round-trips exactly") {
    auto table = build_table(corpus_t1(), DefaultValueSet::builtin());
    prune(table);
    auto matrix = feature_matrix(table);

    std::stringstream buf;
    write_feature_csv(matrix, buf);
    auto back = read_feature_csv(buf);
    REQUIRE(back.size() == matrix.size());
    for (const auto& [pair, features] : matrix) {
        REQUIRE(back.count(pair));
        CHECK(back.at(pair).values() == features.values());
    }

    std::istringstream bad("app,key,nope\n");
    CHECK_THROWS_AS(read_feature_csv(bad), SchemaError);
}

TEST_CASE("missing pair raises") {
    auto table = build_table(corpus_t1(), DefaultValueSet::builtin());
    CHECK_THROWS_AS(local_features(table, {"A", "nope"}), DomainError);
    CHECK_THROWS_AS(compute_features(table, {"zz", "k"}), DomainError);
}
