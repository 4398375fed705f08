#include "pisentry/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "pisentry/errors.hpp"
#include "pisentry/ingest.hpp"
#include "pisentry/rng.hpp"

namespace pisentry {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr const char* kTrackerDomain = "t.metrics.example.com";

// stream tags for seed derivation
enum : std::uint64_t {
    kStreamPlantApps = 1,
    kStreamPlantValue = 2,
    kStreamApp = 3,
    kStreamTraffic = 4,
    kStreamClock = 5,
};

std::string digit_string(Rng& rng, int n, bool nonzero_first) {
    std::string out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        int lo = (i == 0 && nonzero_first) ? 1 : 0;
        out.push_back(static_cast<char>('0' + rng.range(lo, 9)));
    }
    return out;
}

std::string hex_string(Rng& rng, int n) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back(digits[rng.below(16)]);
    return out;
}

const std::vector<std::string>& cn_phone_prefixes() {
    static const std::vector<std::string> prefixes = [] {
        std::vector<std::string> p;
        for (int d = 0; d <= 9; ++d) p.push_back("13" + std::to_string(d));
        p.push_back("145");
        p.push_back("147");
        for (int d = 0; d <= 9; ++d) p.push_back("15" + std::to_string(d));
        p.push_back("166");
        for (const char* s : {"173", "176", "177", "178"}) p.push_back(s);
        for (int d = 0; d <= 9; ++d) p.push_back("18" + std::to_string(d));
        for (const char* s : {"191", "198", "199"}) p.push_back(s);
        return p;
    }();
    return prefixes;
}

std::string pi_value(const std::string& kind, Rng& rng) {
    if (kind == "imei") return digit_string(rng, 15, true);
    if (kind == "device_hex") return hex_string(rng, 16);
    if (kind == "user_num") return digit_string(rng, 9, true);
    if (kind == "mac") {
        std::string out;
        for (int g = 0; g < 6; ++g) {
            if (g) out.push_back(':');
            out += hex_string(rng, 2);
        }
        return out;
    }
    if (kind == "email") {
        return "u" + digit_string(rng, 3, false) + "." + hex_string(rng, 4) + "@mail" +
               digit_string(rng, 1, false) + ".example.com";
    }
    if (kind == "cn_phone") {
        const auto& prefixes = cn_phone_prefixes();
        return prefixes[rng.below(prefixes.size())] + digit_string(rng, 8, false);
    }
    if (kind == "hash32") return hex_string(rng, 32);
    throw SchemaError("unknown pi kind '" + kind + "'");
}

std::string keyword_key_name(const std::string& kind) {
    if (kind == "imei") return "imei";
    if (kind == "device_hex") return "deviceid";
    if (kind == "user_num") return "userid";
    if (kind == "mac") return "mac";
    if (kind == "email") return "email";
    if (kind == "cn_phone") return "phone";
    if (kind == "hash32") return "sig";
    throw SchemaError("unknown pi kind '" + kind + "'");
}

std::string neutral_key_name(std::size_t plant_idx, int app_idx) {
    static const char* pool[] = {"zx", "qv", "kp", "mr", "tz", "wf", "jn", "dd"};
    std::size_t slot = (plant_idx + static_cast<std::size_t>(app_idx)) % 8;
    std::size_t num = (plant_idx * 131 + static_cast<std::size_t>(app_idx) * 17) % 97;
    return std::string(pool[slot]) + std::to_string(num);
}

std::string url_encode(std::string_view s) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        auto u = static_cast<unsigned char>(c);
        bool unreserved = (u >= 'A' && u <= 'Z') || (u >= 'a' && u <= 'z') ||
                          (u >= '0' && u <= '9') || u == '-' || u == '.' || u == '_' || u == '~';
        if (unreserved) {
            out.push_back(c);
        } else {
            out.push_back('%');
            out.push_back(hex[u >> 4]);
            out.push_back(hex[u & 0xf]);
        }
    }
    return out;
}

bool numeric_value(std::string_view s) {
    return !s.empty() &&
           std::all_of(s.begin(), s.end(), [](unsigned char c) { return c >= '0' && c <= '9'; });
}

std::string raw_request_line(const TrafficRecord& rec, int kind, const std::string& app_version) {
    std::string ua = "User-Agent: " + rec.app_id + "/" + app_version + "\r\n";
    if (kind == 0) { // GET, pairs in the query string
        std::string qs;
        for (const KvPair& kv : rec.kvs) {
            if (!qs.empty()) qs.push_back('&');
            qs += url_encode(kv.key) + "=" + url_encode(kv.value);
        }
        std::string target = rec.path + (qs.empty() ? "" : "?" + qs);
        return "GET " + target + " HTTP/1.1\r\nHost: " + rec.domain + "\r\n" + ua +
               "Connection: keep-alive\r\n\r\n";
    }
    if (kind == 1) { // POST, form body
        std::string body;
        for (const KvPair& kv : rec.kvs) {
            if (!body.empty()) body.push_back('&');
            body += url_encode(kv.key) + "=" + url_encode(kv.value);
        }
        return "POST " + rec.path + " HTTP/1.1\r\nHost: " + rec.domain + "\r\n" + ua +
               "Content-Type: application/x-www-form-urlencoded\r\nContent-Length: " +
               std::to_string(body.size()) + "\r\n\r\n" + body;
    }
    // POST, JSON body; plain integers ride as numbers
    ordered_json body = ordered_json::object();
    for (const KvPair& kv : rec.kvs) {
        if (numeric_value(kv.value) && kv.value.size() <= 15 &&
            (kv.value.size() == 1 || kv.value[0] != '0')) {
            body[kv.key] = std::stoll(kv.value);
        } else {
            body[kv.key] = kv.value;
        }
    }
    std::string text = body.dump();
    return "POST " + rec.path + " HTTP/1.1\r\nHost: " + rec.domain + "\r\n" + ua +
           "Content-Type: application/json\r\nContent-Length: " + std::to_string(text.size()) +
           "\r\n\r\n" + text;
}

struct AppPlan {
    int index = 0;
    std::string app_id;
    std::string domain;
    std::string version;
    std::vector<int> users;                    // sorted user indices
    std::vector<std::size_t> first_party;      // plant indices covering this app
    std::vector<std::size_t> third_party;
    std::map<std::size_t, std::string> plant_keys; // plant index -> key name
    bool has_optout = false;
    bool wants_debug_pair = false;
    std::vector<std::string> resource_pool;
};

} // namespace

const char* to_string(KeyNaming n) {
    switch (n) {
    case KeyNaming::keyword: return "keyword";
    case KeyNaming::neutral: return "neutral";
    case KeyNaming::obfuscated: return "obfuscated";
    }
    return "keyword";
}

KeyNaming key_naming_from_string(std::string_view s) {
    if (s == "keyword") return KeyNaming::keyword;
    if (s == "neutral") return KeyNaming::neutral;
    if (s == "obfuscated") return KeyNaming::obfuscated;
    throw SchemaError("unknown key naming '" + std::string(s) + "'");
}

SynthConfig SynthConfig::defaults() {
    SynthConfig c;
    c.plants = {
        {"imei", KeyNaming::keyword, 0.50, false},
        {"device_hex", KeyNaming::keyword, 0.40, false},
        {"user_num", KeyNaming::keyword, 0.40, false},
        {"mac", KeyNaming::keyword, 0.30, true},
        {"email", KeyNaming::neutral, 0.16, false},
        {"cn_phone", KeyNaming::keyword, 0.16, false},
        {"imei", KeyNaming::neutral, 0.30, false},
        {"hash32", KeyNaming::obfuscated, 0.30, false},
    };
    c.non_pi_kinds = {"timestamp", "counter", "app_version", "resource_path", "random_token"};
    return c;
}

std::string SynthConfig::to_json() const {
    json plants_json = json::array();
    for (const PlantSpec& p : plants) {
        plants_json.push_back({{"pi_kind", p.pi_kind},
                               {"naming", to_string(p.naming)},
                               {"app_coverage", p.app_coverage},
                               {"third_party", p.third_party}});
    }
    json j{{"seed", seed},
           {"n_users", n_users},
           {"n_apps", n_apps},
           {"min_requests_per_app_user", min_requests_per_app_user},
           {"max_requests_per_app_user", max_requests_per_app_user},
           {"plants", std::move(plants_json)},
           {"non_pi_kinds", non_pi_kinds},
           {"raw_fraction", raw_fraction},
           {"default_rate", default_rate},
           {"tracker_share", tracker_share}};
    return j.dump(2);
}

SynthConfig SynthConfig::from_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open synth config: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw SchemaError("synth config: not a JSON object");

    SynthConfig c = defaults();
    try {
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("n_users")) c.n_users = j.at("n_users").get<int>();
        if (j.contains("n_apps")) c.n_apps = j.at("n_apps").get<int>();
        if (j.contains("min_requests_per_app_user")) {
            c.min_requests_per_app_user = j.at("min_requests_per_app_user").get<int>();
        }
        if (j.contains("max_requests_per_app_user")) {
            c.max_requests_per_app_user = j.at("max_requests_per_app_user").get<int>();
        }
        if (j.contains("raw_fraction")) c.raw_fraction = j.at("raw_fraction").get<double>();
        if (j.contains("default_rate")) c.default_rate = j.at("default_rate").get<double>();
        if (j.contains("tracker_share")) c.tracker_share = j.at("tracker_share").get<double>();
        if (j.contains("non_pi_kinds")) {
            c.non_pi_kinds.clear();
            for (const json& k : j.at("non_pi_kinds")) c.non_pi_kinds.push_back(k.get<std::string>());
        }
        if (j.contains("plants")) {
            c.plants.clear();
            for (const json& p : j.at("plants")) {
                PlantSpec spec;
                spec.pi_kind = p.at("pi_kind").get<std::string>();
                spec.naming = key_naming_from_string(p.value("naming", "keyword"));
                spec.app_coverage = p.value("app_coverage", 0.5);
                spec.third_party = p.value("third_party", false);
                c.plants.push_back(std::move(spec));
            }
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("synth config: ") + e.what());
    }
    return c;
}

namespace {

void validate(const SynthConfig& c) {
    if (c.n_users < 2) throw DomainError("synth config: n_users must be >= 2");
    if (c.n_apps < 1) throw DomainError("synth config: n_apps must be >= 1");
    if (c.min_requests_per_app_user < 1 ||
        c.max_requests_per_app_user < c.min_requests_per_app_user) {
        throw DomainError("synth config: bad requests_per_app_user range");
    }
    for (double frac : {c.raw_fraction, c.default_rate, c.tracker_share}) {
        if (frac < 0.0 || frac > 1.0) throw DomainError("synth config: fraction out of [0,1]");
    }
    for (const PlantSpec& p : c.plants) {
        if (!(p.app_coverage > 0.0 && p.app_coverage <= 1.0)) {
            throw DomainError("synth config: app_coverage must lie in (0,1]");
        }
        if (std::llround(p.app_coverage * c.n_apps) < 1) {
            throw DomainError("synth config: plant '" + p.pi_kind +
                              "' covers no app (coverage * n_apps < 1)");
        }
        Rng probe(0); // kind check only
        pi_value(p.pi_kind, probe);
        if (p.naming == KeyNaming::keyword) keyword_key_name(p.pi_kind);
    }
    for (const std::string& kind : c.non_pi_kinds) {
        if (kind != "timestamp" && kind != "counter" && kind != "app_version" &&
            kind != "resource_path" && kind != "random_token") {
            throw SchemaError("unknown non-PI kind '" + kind + "'");
        }
    }
}

} // namespace

SynthResult generate_corpus(const SynthConfig& config, std::ostream& out) {
    validate(config);
    SynthResult result;

    const auto n_apps = static_cast<std::size_t>(config.n_apps);
    const auto n_users = static_cast<std::size_t>(config.n_users);

    // plant -> covered app indices
    std::vector<std::set<int>> coverage(config.plants.size());
    for (std::size_t p = 0; p < config.plants.size(); ++p) {
        std::vector<int> apps(n_apps);
        for (std::size_t a = 0; a < n_apps; ++a) apps[a] = static_cast<int>(a);
        Rng rng(derive_seed(config.seed, kStreamPlantApps, p));
        rng.shuffle(apps);
        auto count = static_cast<std::size_t>(
            std::llround(config.plants[p].app_coverage * config.n_apps));
        count = std::min(count, n_apps);
        coverage[p].insert(apps.begin(), apps.begin() + static_cast<std::ptrdiff_t>(count));
    }

    // per-user stable PI values, one row per plant
    std::vector<std::vector<std::string>> plant_values(config.plants.size());
    for (std::size_t p = 0; p < config.plants.size(); ++p) {
        plant_values[p].reserve(n_users);
        for (std::size_t u = 0; u < n_users; ++u) {
            Rng rng(derive_seed(config.seed, kStreamPlantValue, p * 1000003 + u));
            plant_values[p].push_back(pi_value(config.plants[p].pi_kind, rng));
        }
    }

    bool want_timestamp = false, want_counter = false, want_version = false,
         want_resource = false, want_token = false;
    for (const std::string& kind : config.non_pi_kinds) {
        if (kind == "timestamp") want_timestamp = true;
        if (kind == "counter") want_counter = true;
        if (kind == "app_version") want_version = true;
        if (kind == "resource_path") want_resource = true;
        if (kind == "random_token") want_token = true;
    }

    static const char* kPaths[] = {"/api/v1/sync", "/api/v1/event", "/u/profile", "/list",
                                   "/settings"};

    auto add_truth = [&](const std::string& app_id, const std::string& key, Label label,
                         std::string kind) {
        result.truth.entries.try_emplace(PairKey{app_id, key},
                                         GroundTruthEntry{label, std::move(kind)});
    };

    std::uint64_t record_counter = 0;
    for (std::size_t a = 0; a < n_apps; ++a) {
        AppPlan plan;
        plan.index = static_cast<int>(a);
        plan.app_id = "app" + std::to_string(a);
        plan.domain = "api.app" + std::to_string(a) + ".example.com";

        Rng app_rng(derive_seed(config.seed, kStreamApp, a));

        // user subset, at least 60% of the population
        std::vector<int> users(n_users);
        for (std::size_t u = 0; u < n_users; ++u) users[u] = static_cast<int>(u);
        auto min_users = static_cast<std::int64_t>((n_users * 3 + 4) / 5);
        auto user_count = static_cast<std::size_t>(
            app_rng.range(std::max<std::int64_t>(min_users, 2), static_cast<std::int64_t>(n_users)));
        app_rng.shuffle(users);
        users.resize(user_count);
        std::sort(users.begin(), users.end());
        plan.users = std::move(users);

        plan.version = std::to_string(4 + app_rng.below(5)) + "." +
                       std::to_string(app_rng.below(10)) + "." + std::to_string(app_rng.below(4));
        plan.has_optout = app_rng.chance(0.3);
        plan.wants_debug_pair = (a % 5 == 0);

        // roster: key names, deduplicated within the app
        std::set<std::string> roster{"ts", "seq", "appver", "res", "token", "optout", "dbg"};
        for (std::size_t p = 0; p < config.plants.size(); ++p) {
            if (!coverage[p].count(plan.index)) continue;
            const PlantSpec& spec = config.plants[p];
            std::string name = spec.naming == KeyNaming::keyword
                                   ? keyword_key_name(spec.pi_kind)
                                   : neutral_key_name(p, plan.index);
            while (!roster.insert(name).second) name += "x";
            plan.plant_keys[p] = name;
            (spec.third_party ? plan.third_party : plan.first_party).push_back(p);
        }

        if (want_resource) {
            for (int k = 0; k < 8; ++k) {
                plan.resource_pool.push_back("/res/img" + std::to_string(a) + "_" +
                                             std::to_string(k) + ".png");
            }
            plan.resource_pool.push_back("/favicon.ico");
            plan.resource_pool.push_back("/ping");
        }

        // ground truth for this app's roster
        for (std::size_t p : plan.first_party) {
            const PlantSpec& spec = config.plants[p];
            std::string kind = spec.naming == KeyNaming::keyword
                                   ? spec.pi_kind
                                   : std::string(to_string(spec.naming)) + ":" + spec.pi_kind;
            add_truth(plan.app_id, plan.plant_keys[p], Label::positive, kind);
        }
        for (std::size_t p : plan.third_party) {
            const PlantSpec& spec = config.plants[p];
            std::string kind = spec.naming == KeyNaming::keyword
                                   ? spec.pi_kind
                                   : std::string(to_string(spec.naming)) + ":" + spec.pi_kind;
            add_truth(plan.app_id, plan.plant_keys[p], Label::positive, kind);
        }
        if (want_timestamp) add_truth(plan.app_id, "ts", Label::negative, "timestamp");
        if (want_counter) add_truth(plan.app_id, "seq", Label::negative, "counter");
        if (want_version) add_truth(plan.app_id, "appver", Label::negative, "app_version");
        if (want_resource) add_truth(plan.app_id, "res", Label::negative, "resource_path");
        if (want_token) add_truth(plan.app_id, "token", Label::negative, "random_token");
        if (plan.has_optout) add_truth(plan.app_id, "optout", Label::negative, "default_only");
        if (plan.wants_debug_pair) add_truth(plan.app_id, "dbg", Label::negative, "singleton");

        bool debug_pair_pending = plan.wants_debug_pair;
        for (int user_idx : plan.users) {
            Rng rng(derive_seed(config.seed, kStreamTraffic,
                                a * 1000003 + static_cast<std::size_t>(user_idx)));
            std::int64_t clock =
                1'700'000'000'000LL +
                static_cast<std::int64_t>(
                    derive_seed(config.seed, kStreamClock,
                                a * 1000003 + static_cast<std::size_t>(user_idx)) %
                    86'400'000ULL);
            std::string user_id = "u" + std::to_string(user_idx);
            auto n_requests = static_cast<int>(rng.range(config.min_requests_per_app_user,
                                                         config.max_requests_per_app_user));

            for (int r = 0; r < n_requests; ++r) {
                clock += rng.range(800, 7000);
                bool tracker = !plan.third_party.empty() && rng.chance(config.tracker_share);

                TrafficRecord rec;
                rec.user_id = user_id;
                rec.app_id = plan.app_id;
                rec.timestamp_ms = clock;
                rec.domain = tracker ? kTrackerDomain : plan.domain;
                rec.path = tracker ? "/v1/collect" : kPaths[rng.below(5)];

                auto emit_plant = [&](std::size_t p) {
                    const std::string& key = plan.plant_keys[p];
                    if (rng.unit() < config.default_rate) {
                        rec.kvs.push_back({key, rng.chance(0.5) ? "none" : "", KvSource::query});
                        ++result.stats.planted_default_occurrences;
                    } else {
                        rec.kvs.push_back(
                            {key, plant_values[p][static_cast<std::size_t>(user_idx)],
                             KvSource::query});
                        ++result.stats.planted_leaks;
                    }
                };

                if (want_timestamp) {
                    rec.kvs.push_back({"ts", std::to_string(clock), KvSource::query});
                }
                if (tracker) {
                    if (want_token) {
                        rec.kvs.push_back({"token", hex_string(rng, 16), KvSource::query});
                    }
                    for (std::size_t p : plan.third_party) {
                        if (rng.chance(0.9)) emit_plant(p);
                    }
                } else {
                    if (want_counter) {
                        rec.kvs.push_back({"seq", std::to_string(r + 1), KvSource::query});
                    }
                    if (want_version && rng.chance(0.8)) {
                        rec.kvs.push_back({"appver", plan.version, KvSource::query});
                    }
                    if (want_resource && rng.chance(0.9)) {
                        rec.kvs.push_back(
                            {"res", plan.resource_pool[rng.below(plan.resource_pool.size())],
                             KvSource::query});
                    }
                    if (want_token && rng.chance(0.9)) {
                        rec.kvs.push_back({"token", hex_string(rng, 16), KvSource::query});
                    }
                    for (std::size_t p : plan.first_party) {
                        if (rng.chance(0.7)) emit_plant(p);
                    }
                    if (plan.has_optout && rng.chance(0.3)) {
                        rec.kvs.push_back({"optout", "none", KvSource::query});
                    }
                    if (debug_pair_pending) {
                        rec.kvs.push_back({"dbg", hex_string(rng, 8), KvSource::query});
                        debug_pair_pending = false;
                    }
                }

                ++result.stats.records;
                ++record_counter;
                if (rng.chance(config.raw_fraction)) {
                    json line{{"user", rec.user_id},
                              {"app", rec.app_id},
                              {"ts", rec.timestamp_ms},
                              {"raw", raw_request_line(rec, static_cast<int>(record_counter % 3),
                                                       plan.version)}};
                    out << line.dump() << '\n';
                } else {
                    out << record_to_jsonl(rec) << '\n';
                }
            }
        }
    }
    return result;
}

} // namespace pisentry
