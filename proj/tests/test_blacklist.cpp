#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "pisentry/blacklist.hpp"
#include "pisentry/rng.hpp"
#include "test_support.hpp"

using namespace pisentry;
using namespace pisentry::testing;

namespace {

Prediction pred(std::string app, std::string key, double p, PredictedLabel label) {
    Prediction out;
    out.pair = {std::move(app), std::move(key)};
    out.probability_positive = p;
    out.label = label;
    return out;
}

} // namespace

TEST_CASE("building the blacklist") {
    std::vector<Prediction> preds{
        pred("a", "imei", 1.0, PredictedLabel::positive),
        pred("a", "imei", 0.95, PredictedLabel::positive), // duplicate collapses
        pred("a", "ts", 0.1, PredictedLabel::negative),
        pred("b", "zz", 0.6, PredictedLabel::rejected),
    };
    Blacklist bl = build_blacklist(preds, DefaultValueSet::builtin(), "model-1");
    CHECK(bl.entries == std::set<PairKey>{{"a", "imei"}});
    CHECK(bl.built_from == "model-1");

    SUBCASE("all rejected gives an empty list") {
        std::vector<Prediction> all_rejected{pred("a", "x", 0.6, PredictedLabel::rejected)};
        Blacklist empty = build_blacklist(all_rejected, DefaultValueSet::builtin(), "m");
        CHECK(empty.entries.empty());
    }
    SUBCASE("file round-trip") {
        std::stringstream buf;
        save_blacklist(bl, buf);
        Blacklist back = load_blacklist(buf, DefaultValueSet::builtin());
        CHECK(back.entries == bl.entries);
    }
}

TEST_CASE("matching flags exactly the blacklisted non-default occurrences") {
    Blacklist bl;
    bl.default_values = DefaultValueSet::builtin();
    bl.entries = {{"wechat", "imei"}};

    std::vector<TrafficRecord> records{
        make_record("u1", "wechat", "short.weixin.qq.com",
                    {{"imei", "HJS5T19626000575"},
                     {"startDate", "20200526"},
                     {"endDate", "20200527"}}),
        make_record("u1", "wechat", "short.weixin.qq.com", {{"imei", "none"}}),
        make_record("u1", "wechat", "short.weixin.qq.com", {{"imei", ""}}),
        make_record("u2", "other", "x.com", {{"imei", "alsothere1234567"}}),
    };

    std::vector<LeakEvent> events;
    MatchSummary summary =
        match_stream(bl, records, [&](const LeakEvent& ev) { events.push_back(ev); });

    REQUIRE(events.size() == 1);
    CHECK(events[0].app_id == "wechat");
    CHECK(events[0].key == "imei");
    CHECK(events[0].value == "HJS5T19626000575");
    CHECK(summary.total == 1);
    CHECK(summary.per_app.at("wechat") == 1);
    CHECK(summary.per_pair.at({"wechat", "imei"}) == 1);

    // unseen pairs recorded for retraining
    CHECK(summary.unseen_pairs.count({"other", "imei"}));
    CHECK(summary.unseen_pairs.count({"wechat", "startDate"}));
}

TEST_CASE("summary counts are order-independent") {
    Blacklist bl;
    bl.default_values = DefaultValueSet::builtin();
    bl.entries = {{"a", "k"}, {"b", "q"}};

    Rng rng(8);
    auto records = random_micro_corpus(rng);
    records.push_back(make_record("u1", "a", "d1", {{"k", "leak-value-1"}}));
    records.push_back(make_record("u2", "b", "d2", {{"q", "leak-value-2"}}));

    MatchSummary first = match_stream(bl, records, nullptr);
    auto shuffled = records;
    rng.shuffle(shuffled);
    MatchSummary second = match_stream(bl, shuffled, nullptr);

    CHECK(first.total == second.total);
    CHECK(first.per_app == second.per_app);
    CHECK(first.per_pair == second.per_pair);
    CHECK(first.unseen_pairs == second.unseen_pairs);
}

TEST_CASE("per-PI breakdown uses the provided type map") {
    Blacklist bl;
    bl.default_values = DefaultValueSet::builtin();
    bl.entries = {{"a", "imei"}, {"a", "mac"}};
    std::map<PairKey, std::string> types{{{"a", "imei"}, "imei"}, {{"a", "mac"}, "mac"}};

    std::vector<TrafficRecord> records{
        make_record("u1", "a", "d", {{"imei", "865412039812345"}}),
        make_record("u1", "a", "d", {{"imei", "865412039812345"}, {"mac", "ab:cd:ef:01:23:45"}}),
    };
    MatchSummary summary = match_stream(bl, records, nullptr, &types);
    CHECK(summary.per_pi_type.at("imei") == 2);
    CHECK(summary.per_pi_type.at("mac") == 1);

    std::stringstream buf;
    write_match_summary_csv(summary, buf);
    CHECK(buf.str().find("pi_type,,,imei,2") != std::string::npos);
}
