#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pisentry/ground_truth.hpp"

namespace pisentry {

enum class KeyNaming { keyword, neutral, obfuscated };
const char* to_string(KeyNaming n);
KeyNaming key_naming_from_string(std::string_view s);

// One planted PI kind. Values are stable per user and reused across the
// covered fraction of apps; third-party plants ride requests to a tracker
// domain shared across apps.
struct PlantSpec {
    std::string pi_kind;  // imei | device_hex | user_num | mac | email | cn_phone | hash32
    KeyNaming naming = KeyNaming::keyword;
    double app_coverage = 0.5; // fraction of apps transmitting it, (0,1]
    bool third_party = false;
};

struct SynthConfig {
    std::uint64_t seed = 1;
    int n_users = 100; // >= 2; global features need cross-user signal
    int n_apps = 50;
    int min_requests_per_app_user = 18;
    int max_requests_per_app_user = 30;
    std::vector<PlantSpec> plants;
    // timestamp | counter | app_version | resource_path | random_token
    std::vector<std::string> non_pi_kinds;
    double raw_fraction = 0.1;   // share of lines emitted as raw HTTP text
    double default_rate = 0.04;  // share of PI occurrences sent as "none"/empty
    double tracker_share = 0.25; // share of requests to the tracker domain

    static SynthConfig defaults();
    static SynthConfig from_json_file(const std::string& path); // throws SchemaError
    std::string to_json() const;
};

struct SynthStats {
    std::uint64_t records = 0;
    std::uint64_t planted_leaks = 0; // PI occurrences carrying a real value
    std::uint64_t planted_default_occurrences = 0;
};

struct SynthResult {
    SynthStats stats;
    GroundTruth truth;
};

// Deterministic under config.seed; writes the corpus JSONL to `out`.
SynthResult generate_corpus(const SynthConfig& config, std::ostream& out);

} // namespace pisentry
