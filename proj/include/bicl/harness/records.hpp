#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bicl::harness {

struct RunRecord {
  std::string experiment;
  std::string structure;
  int m0 = 0;
  std::string method;  // constructed | mle | naive | optimal | trained
  int n_test = 0;
  std::string metric;  // tv | accuracy | ...
  double value = 0.0;
  std::uint64_t seed = 0;
  double wall_time_ms = 0.0;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

inline constexpr std::string_view kRecordHeader =
    "experiment,structure,m0,method,N_test,metric,value,seed,wall_time_ms";

std::string records_to_csv(std::span<const RunRecord> records);
/// Inverse of records_to_csv. Throws std::runtime_error on malformed input.
std::vector<RunRecord> parse_records_csv(std::string_view text);

/// Mean and sample standard deviation of `value`, grouped by every field
/// except value, seed and wall time. Groups appear in first-seen order.
std::string summary_json(std::span<const RunRecord> records);

/// Writes `path` (CSV) and `<path without extension>.summary.json`.
void emit_report(std::span<const RunRecord> records, const std::string& path);

std::string summary_path(const std::string& csv_path);
void write_text_file(const std::string& path, std::string_view text);
std::string read_text_file(const std::string& path);

}  // namespace bicl::harness
