#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace bicl {

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

/// Parses flat `key = value` text. Blank lines and lines starting with '#'
/// are skipped; whitespace around keys and values is trimmed. Throws
/// ConfigError for a line without '=' or with an empty key.
std::vector<KeyValue> parse_key_values(std::string_view text);

/// Field parsers; each throws ConfigError("<field>: ...") on bad input.
int parse_int(std::string_view field, std::string_view value);
std::uint64_t parse_u64(std::string_view field, std::string_view value);
double parse_double(std::string_view field, std::string_view value);
bool parse_bool(std::string_view field, std::string_view value);
/// Comma-separated list; empty items are rejected.
std::vector<int> parse_int_list(std::string_view field, std::string_view value);
std::vector<double> parse_double_list(std::string_view field, std::string_view value);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace bicl
