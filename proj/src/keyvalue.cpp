#include "bicl/keyvalue.hpp"

#include <charconv>
#include <cmath>

#include "bicl/errors.hpp"

namespace bicl {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(std::string_view field, std::string_view what, std::string_view value) {
  throw ConfigError(std::string(field) + ": " + std::string(what) + ", got '" + std::string(value) + "'");
}

template <class T>
T parse_number(std::string_view field, std::string_view value, std::string_view what) {
  const std::string_view v = trim(value);
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) bad(field, what, value);
  return out;
}

template <class T, class F>
std::vector<T> parse_list(std::string_view field, std::string_view value, F item) {
  std::vector<T> out;
  std::string_view rest = trim(value);
  if (rest.empty()) bad(field, "expected a nonempty comma-separated list", value);
  while (true) {
    const auto comma = rest.find(',');
    const std::string_view piece = trim(rest.substr(0, comma));
    if (piece.empty()) bad(field, "empty list item", value);
    out.push_back(item(field, piece));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

}  // namespace

std::vector<KeyValue> parse_key_values(std::string_view text) {
  std::vector<KeyValue> out;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    out.push_back({std::string(key), std::string(trim(line.substr(eq + 1))), line_no});
  }
  return out;
}

int parse_int(std::string_view field, std::string_view value) {
  return parse_number<int>(field, value, "expected an integer");
}

std::uint64_t parse_u64(std::string_view field, std::string_view value) {
  return parse_number<std::uint64_t>(field, value, "expected a nonnegative integer");
}

double parse_double(std::string_view field, std::string_view value) {
  const double v = parse_number<double>(field, value, "expected a number");
  if (!std::isfinite(v)) bad(field, "expected a finite number", value);
  return v;
}

bool parse_bool(std::string_view field, std::string_view value) {
  const std::string_view v = trim(value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad(field, "expected true or false", value);
}

std::vector<int> parse_int_list(std::string_view field, std::string_view value) {
  return parse_list<int>(field, value, parse_int);
}

std::vector<double> parse_double_list(std::string_view field, std::string_view value) {
  return parse_list<double>(field, value, parse_double);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace bicl
