#include "pisentry/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>

#include <json.hpp>

#include "pisentry/errors.hpp"

namespace pisentry {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

int hex_digit(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

void flatten_json_member(const std::string& key, const ordered_json& v,
                         std::vector<KvPair>& out) {
    if (v.is_string()) {
        out.push_back({key, v.get<std::string>(), KvSource::body_json});
    } else if (v.is_number()) {
        out.push_back({key, v.dump(), KvSource::body_json});
    }
}

// Top-level string/number members; nested objects flattened one level,
// keys joined with '.'. Deeper nesting, arrays and booleans carry no kv.
void harvest_json_body(const ordered_json& obj, std::vector<KvPair>& out) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (it.key().empty()) continue;
        const ordered_json& v = it.value();
        if (v.is_object()) {
            for (auto jt = v.begin(); jt != v.end(); ++jt) {
                if (jt.key().empty()) continue;
                flatten_json_member(it.key() + "." + jt.key(), jt.value(), out);
            }
        } else {
            flatten_json_member(it.key(), v, out);
        }
    }
}

bool plausible_form_body(std::string_view body) {
    if (body.empty() || body.find('=') == std::string_view::npos) return false;
    for (char c : body) {
        auto u = static_cast<unsigned char>(c);
        if (u < 0x21 || u > 0x7e) return false;
    }
    return true;
}

std::string strip_port(std::string host) {
    if (!host.empty() && host.front() == '[') { // bracketed IPv6 literal
        auto close = host.find(']');
        if (close != std::string::npos) return host.substr(0, close + 1);
        return host;
    }
    auto colon = host.find(':');
    if (colon != std::string::npos) host.resize(colon);
    return host;
}

} // namespace

const char* to_string(KvSource src) {
    switch (src) {
    case KvSource::query: return "query";
    case KvSource::body_form: return "body_form";
    case KvSource::body_json: return "body_json";
    }
    return "query";
}

KvSource kv_source_from_string(std::string_view s) {
    if (s == "query") return KvSource::query;
    if (s == "body_form") return KvSource::body_form;
    if (s == "body_json") return KvSource::body_json;
    throw ParseError("unknown kv source '" + std::string(s) + "'");
}

std::string percent_decode(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c == '+') {
            out.push_back(' ');
        } else if (c == '%' && i + 2 < s.size()) {
            int hi = hex_digit(s[i + 1]);
            int lo = hex_digit(s[i + 2]);
            if (hi >= 0 && lo >= 0) {
                out.push_back(static_cast<char>(hi * 16 + lo));
                i += 2;
            } else {
                out.push_back(c);
            }
        } else {
            out.push_back(c);
        }
    }
    return out;
}

std::vector<KvPair> parse_query_string(std::string_view qs, KvSource src) {
    std::vector<KvPair> out;
    std::size_t start = 0;
    while (start <= qs.size()) {
        std::size_t amp = qs.find('&', start);
        if (amp == std::string_view::npos) amp = qs.size();
        std::string_view part = qs.substr(start, amp - start);
        start = amp + 1;
        if (part.empty()) continue;
        std::size_t eq = part.find('=');
        std::string key =
            percent_decode(eq == std::string_view::npos ? part : part.substr(0, eq));
        std::string value =
            eq == std::string_view::npos ? std::string() : percent_decode(part.substr(eq + 1));
        if (key.empty()) continue;
        out.push_back({std::move(key), std::move(value), src});
    }
    return out;
}

HttpRequestKv parse_http_request(std::string_view raw) {
    std::string_view head = raw;
    std::string_view body;
    if (auto sep = raw.find("\r\n\r\n"); sep != std::string_view::npos) {
        head = raw.substr(0, sep);
        body = raw.substr(sep + 4);
    } else if (auto nn = raw.find("\n\n"); nn != std::string_view::npos) {
        head = raw.substr(0, nn);
        body = raw.substr(nn + 2);
    }

    // request line
    std::size_t eol = head.find('\n');
    std::string_view line = trim(head.substr(0, eol));
    std::size_t sp1 = line.find(' ');
    std::size_t sp2 = line.rfind(' ');
    if (sp1 == std::string_view::npos || sp2 == sp1 ||
        !line.substr(sp2 + 1).starts_with("HTTP/")) {
        throw ParseError("malformed request line");
    }
    std::string_view target = trim(line.substr(sp1 + 1, sp2 - sp1 - 1));

    // headers
    std::string host;
    std::string content_type;
    std::size_t pos = (eol == std::string_view::npos) ? head.size() : eol + 1;
    while (pos < head.size()) {
        std::size_t next = head.find('\n', pos);
        if (next == std::string_view::npos) next = head.size();
        std::string_view hline = trim(head.substr(pos, next - pos));
        pos = next + 1;
        if (hline.empty()) continue;
        std::size_t colon = hline.find(':');
        if (colon == std::string_view::npos) continue;
        std::string name = ascii_lower(trim(hline.substr(0, colon)));
        std::string_view value = trim(hline.substr(colon + 1));
        if (name == "host") {
            host = ascii_lower(value);
        } else if (name == "content-type") {
            content_type = ascii_lower(value);
        }
    }
    if (host.empty()) throw ParseError("missing Host header");

    HttpRequestKv out;
    out.domain = strip_port(std::move(host));

    // absolute-form target: keep the path part only
    if (target.starts_with("http://") || target.starts_with("https://")) {
        auto scheme_end = target.find("//") + 2;
        auto slash = target.find('/', scheme_end);
        target = (slash == std::string_view::npos) ? std::string_view("/") : target.substr(slash);
    }
    std::size_t qpos = target.find('?');
    out.path = std::string(target.substr(0, qpos));
    if (qpos != std::string_view::npos) {
        out.kvs = parse_query_string(target.substr(qpos + 1), KvSource::query);
    }

    if (!body.empty()) {
        std::string ct = content_type.substr(0, content_type.find(';'));
        ct = std::string(trim(ct));
        bool try_json = ct.find("json") != std::string::npos;
        bool try_form = ct == "application/x-www-form-urlencoded";
        if (ct.empty()) { // sniff
            std::string_view b = trim(body);
            if (!b.empty() && (b.front() == '{' || b.front() == '[')) {
                try_json = true;
            } else if (plausible_form_body(b)) {
                try_form = true;
            }
        }
        if (try_json) {
            ordered_json j = ordered_json::parse(body, nullptr, false);
            if (j.is_object()) {
                harvest_json_body(j, out.kvs);
            } else {
                out.body_unparsed = true;
            }
        } else if (try_form) {
            auto pairs = parse_query_string(trim(body), KvSource::body_form);
            out.kvs.insert(out.kvs.end(), pairs.begin(), pairs.end());
        } else {
            out.body_unparsed = true;
        }
    }
    return out;
}

namespace {

std::string require_string(const json& j, const char* field, bool allow_empty = false) {
    auto it = j.find(field);
    if (it == j.end() || !it->is_string()) {
        throw ParseError(std::string("missing or non-string field '") + field + "'");
    }
    auto s = it->get<std::string>();
    if (s.empty() && !allow_empty) {
        throw ParseError(std::string("field '") + field + "' must be non-empty");
    }
    return s;
}

std::int64_t require_int(const json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end() || !it->is_number_integer()) {
        throw ParseError(std::string("field '") + field + "' must be an integer");
    }
    return it->get<std::int64_t>();
}

} // namespace

TrafficRecord record_from_jsonl(std::string_view line, bool* body_unparsed) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError("not a JSON object");

    TrafficRecord rec;
    rec.user_id = require_string(j, "user");
    rec.app_id = require_string(j, "app");
    rec.timestamp_ms = require_int(j, "ts");

    if (j.contains("raw")) {
        auto raw = require_string(j, "raw");
        HttpRequestKv parsed = parse_http_request(raw);
        rec.domain = std::move(parsed.domain);
        rec.path = std::move(parsed.path);
        rec.kvs = std::move(parsed.kvs);
        if (parsed.body_unparsed && body_unparsed) *body_unparsed = true;
        return rec;
    }

    rec.domain = ascii_lower(require_string(j, "domain"));
    auto pit = j.find("path");
    if (pit != j.end() && pit->is_string()) rec.path = pit->get<std::string>();
    auto kit = j.find("kv");
    if (kit == j.end() || !kit->is_array()) throw ParseError("field 'kv' must be an array");
    for (const json& e : *kit) {
        if (!e.is_object()) throw ParseError("kv entries must be objects");
        KvPair kv;
        kv.key = require_string(e, "k");
        kv.value = require_string(e, "v", /*allow_empty=*/true);
        kv.source = kv_source_from_string(require_string(e, "src"));
        rec.kvs.push_back(std::move(kv));
    }
    return rec;
}

std::string record_to_jsonl(const TrafficRecord& rec) {
    json arr = json::array();
    for (const KvPair& kv : rec.kvs) {
        arr.push_back({{"k", kv.key}, {"v", kv.value}, {"src", to_string(kv.source)}});
    }
    json j{{"user", rec.user_id}, {"app", rec.app_id},   {"ts", rec.timestamp_ms},
           {"domain", rec.domain}, {"path", rec.path},   {"kv", std::move(arr)}};
    return j.dump();
}

CorpusReadResult parse_jsonl_corpus(std::istream& in) {
    CorpusReadResult res;
    std::string line;
    std::uint64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        ++res.lines;
        try {
            bool unparsed = false;
            res.records.push_back(record_from_jsonl(line, &unparsed));
            if (unparsed) ++res.unparsed_bodies;
        } catch (const std::exception& e) {
            ++res.errors;
            if (res.error_samples.size() < 8) {
                res.error_samples.push_back("line " + std::to_string(lineno) + ": " + e.what());
            }
        }
    }
    if (in.bad()) throw IoError("corpus stream read failure");
    return res;
}

CorpusReadResult read_corpus_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path);
    return parse_jsonl_corpus(in);
}

} // namespace pisentry
