#include <doctest.h>

#include <cmath>
#include <sstream>

#include "pisentry/errors.hpp"
#include "pisentry/features.hpp"
#include "pisentry/ingest.hpp"
#include "pisentry/synth.hpp"

using namespace pisentry;

namespace {

SynthConfig small_config(std::uint64_t seed = 1) {
    SynthConfig c = SynthConfig::defaults();
    c.seed = seed;
    c.n_users = 6;
    c.n_apps = 6;
    c.min_requests_per_app_user = 5;
    c.max_requests_per_app_user = 9;
    c.raw_fraction = 0.3;
    return c;
}

} // namespace

TEST_CASE("generation is byte-identical under a fixed seed") {
    std::ostringstream a, b;
    SynthResult ra = generate_corpus(small_config(), a);
    SynthResult rb = generate_corpus(small_config(), b);
    CHECK(a.str() == b.str());
    CHECK(ra.stats.records == rb.stats.records);
    CHECK(ra.stats.planted_leaks == rb.stats.planted_leaks);
    CHECK(ra.truth.entries.size() == rb.truth.entries.size());

    std::ostringstream c;
    generate_corpus(small_config(2), c);
    CHECK(a.str() != c.str());
}

TEST_CASE("generated corpus parses cleanly and matches the plan") {
    std::stringstream corpus;
    SynthResult result = generate_corpus(small_config(), corpus);
    auto read = parse_jsonl_corpus(corpus);
    CHECK(read.errors == 0);
    CHECK(read.unparsed_bodies == 0);
    CHECK(read.records.size() == result.stats.records);
    CHECK(result.stats.planted_leaks > 0);
    CHECK(result.stats.planted_default_occurrences > 0);

    auto table = build_table(read.records, DefaultValueSet::builtin());
    prune(table);
    REQUIRE_FALSE(table.pairs.empty());

    SUBCASE("ground truth covers every surviving pair") {
        for (const auto& [pair, stats] : table.pairs) {
            const PairKey& key = pair;
            INFO("pair <", key.app_id, ", ", key.key, ">");
            CHECK(result.truth.entries.count(key));
        }
    }
    SUBCASE("identifier plants hold one stable value per user") {
        int checked = 0;
        for (const auto& [pair, entry] : result.truth.entries) {
            if (entry.pi_kind != "imei" && entry.pi_kind != "neutral:imei") continue;
            auto it = table.pairs.find(pair);
            if (it == table.pairs.end()) continue;
            for (const auto& [user, counts] : it->second.per_user_values) {
                CHECK(counts.size() == 1);
                ++checked;
            }
        }
        CHECK(checked > 0);
    }
    SUBCASE("identifier pairs have zero value reuse across users") {
        for (const auto& [pair, entry] : result.truth.entries) {
            if (entry.pi_kind != "imei" && entry.pi_kind != "hash32" &&
                entry.pi_kind != "obfuscated:hash32") {
                continue;
            }
            if (!table.pairs.count(pair)) continue;
            FeatureVector f = local_features(table, pair);
            CHECK(f.lvrd == doctest::Approx(0.0));
        }
    }
    SUBCASE("timestamp pairs vary per request") {
        int checked = 0;
        for (const auto& [pair, entry] : result.truth.entries) {
            if (entry.pi_kind != "timestamp") continue;
            auto it = table.pairs.find(pair);
            if (it == table.pairs.end()) continue;
            for (const auto& [user, counts] : it->second.per_user_values) {
                // every occurrence distinct: entropy is log2 of the count
                std::uint64_t total = 0;
                for (const auto& [value, n] : counts) total += n;
                CHECK(counts.size() == total);
                CHECK(value_entropy(counts) ==
                      doctest::Approx(std::log2(static_cast<double>(total))));
                ++checked;
            }
        }
        CHECK(checked > 0);
    }
    SUBCASE("default-only and singleton texture pairs get pruned") {
        bool saw_default_only = false, saw_singleton = false;
        for (const auto& [pair, entry] : result.truth.entries) {
            if (entry.pi_kind == "default_only") {
                saw_default_only = true;
                CHECK_FALSE(table.pairs.count(pair));
            }
            if (entry.pi_kind == "singleton") {
                saw_singleton = true;
                CHECK_FALSE(table.pairs.count(pair));
            }
        }
        CHECK(saw_default_only);
        CHECK(saw_singleton);
    }
    SUBCASE("third-party plants share the tracker domain") {
        int tracker_pairs = 0;
        for (const auto& [pair, entry] : result.truth.entries) {
            if (entry.pi_kind != "mac") continue;
            auto it = table.pairs.find(pair);
            if (it == table.pairs.end()) continue;
            CHECK(it->second.domains.count("t.metrics.example.com"));
            ++tracker_pairs;
        }
        CHECK(tracker_pairs > 1);
    }
}

TEST_CASE("infeasible configs are rejected") {
    SynthConfig c = small_config();
    c.plants.push_back({"imei", KeyNaming::neutral, 0.05, false}); // 0.05 * 6 < 1
    std::ostringstream out;
    CHECK_THROWS_AS(generate_corpus(c, out), DomainError);

    SynthConfig single_user = small_config();
    single_user.n_users = 1;
    CHECK_THROWS_AS(generate_corpus(single_user, out), DomainError);

    SynthConfig bad_kind = small_config();
    bad_kind.plants.push_back({"wat", KeyNaming::keyword, 0.5, false});
    CHECK_THROWS_AS(generate_corpus(bad_kind, out), SchemaError);
}

TEST_CASE("config json round-trip keeps the plant list") {
    SynthConfig c = small_config(42);
    std::string text = c.to_json();
    CHECK(text.find("\"seed\": 42") != std::string::npos);
    CHECK(text.find("device_hex") != std::string::npos);
}
