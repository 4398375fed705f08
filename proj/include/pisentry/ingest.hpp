#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "pisentry/record.hpp"

namespace pisentry {

// Decodes %HH escapes (one pass) and '+' as space. Malformed escapes are
// kept literally, as reference query-string decoders do.
std::string percent_decode(std::string_view s);

// Splits "a=1&b=&a=2" style strings. Duplicate keys and empty values are
// preserved; segments with an empty key are dropped.
std::vector<KvPair> parse_query_string(std::string_view qs, KvSource src);

struct HttpRequestKv {
    std::string domain; // Host header, lowercased, port stripped
    std::string path;
    std::vector<KvPair> kvs;
    bool body_unparsed = false;
};

// Parses an HTTP/1.x request: pairs come from the URL query string, a
// form-urlencoded body, and top-level string/number members of a JSON
// object body (nested objects flattened one level, keys joined with '.').
// Throws ParseError when the request line or Host header is missing; an
// unparseable body leaves the query pairs and sets body_unparsed.
HttpRequestKv parse_http_request(std::string_view raw);

struct CorpusReadResult {
    std::vector<TrafficRecord> records;
    std::uint64_t lines = 0;  // non-blank lines seen
    std::uint64_t errors = 0; // malformed lines skipped
    std::uint64_t unparsed_bodies = 0;
    std::vector<std::string> error_samples; // first few, for diagnostics
};

// Newline-delimited corpus; each line is either the extracted kv form or
// a {"user","app","ts","raw"} object whose raw request gets parsed. Bad
// lines are tallied and skipped, never silently dropped.
CorpusReadResult parse_jsonl_corpus(std::istream& in);
CorpusReadResult read_corpus_file(const std::string& path); // throws IoError

// One corpus line in the kv form; re-parsing the result yields an
// identical record.
std::string record_to_jsonl(const TrafficRecord& rec);

// Single-line parse; throws ParseError on schema violations. When the line
// carries a raw request with an unparseable body, *body_unparsed is set.
TrafficRecord record_from_jsonl(std::string_view line, bool* body_unparsed = nullptr);

} // namespace pisentry
