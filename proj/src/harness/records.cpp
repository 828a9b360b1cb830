#include "bicl/harness/records.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "bicl/keyvalue.hpp"
#include "json.hpp"

namespace bicl::harness {

namespace {

void check_field(const std::string& s) {
  if (s.find_first_of(",\n\r\"") != std::string::npos)
    throw std::invalid_argument("record field contains a CSV delimiter: " + s);
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::string records_to_csv(std::span<const RunRecord> records) {
  std::string out(kRecordHeader);
  out += '\n';
  for (const auto& r : records) {
    check_field(r.experiment);
    check_field(r.structure);
    check_field(r.method);
    check_field(r.metric);
    out += r.experiment + ',' + r.structure + ',' + std::to_string(r.m0) + ',' + r.method + ',' +
           std::to_string(r.n_test) + ',' + r.metric + ',' + format_double(r.value) + ',' + std::to_string(r.seed) +
           ',' + format_double(r.wall_time_ms) + '\n';
  }
  return out;
}

std::vector<RunRecord> parse_records_csv(std::string_view text) {
  std::vector<RunRecord> out;
  bool header = true;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (header) {
      if (line != kRecordHeader) throw std::runtime_error("records CSV: unexpected header");
      header = false;
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 9) throw std::runtime_error("records CSV line " + std::to_string(line_no) + ": expected 9 fields");
    try {
      RunRecord r;
      r.experiment = f[0];
      r.structure = f[1];
      r.m0 = parse_int("m0", f[2]);
      r.method = f[3];
      r.n_test = parse_int("N_test", f[4]);
      r.metric = f[5];
      r.value = parse_double("value", f[6]);
      r.seed = parse_u64("seed", f[7]);
      r.wall_time_ms = parse_double("wall_time_ms", f[8]);
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::runtime_error("records CSV line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (header) throw std::runtime_error("records CSV: missing header");
  return out;
}

std::string summary_json(std::span<const RunRecord> records) {
  using Key = std::tuple<std::string, std::string, int, std::string, int, std::string>;
  std::map<Key, std::size_t> index;
  std::vector<Key> order;
  std::vector<std::vector<double>> values;
  for (const auto& r : records) {
    Key k{r.experiment, r.structure, r.m0, r.method, r.n_test, r.metric};
    auto [it, inserted] = index.emplace(k, order.size());
    if (inserted) {
      order.push_back(k);
      values.emplace_back();
    }
    values[it->second].push_back(r.value);
  }
  nlohmann::ordered_json groups = nlohmann::ordered_json::array();
  for (std::size_t g = 0; g < order.size(); ++g) {
    const auto& v = values[g];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    nlohmann::ordered_json j;
    j["experiment"] = std::get<0>(order[g]);
    j["structure"] = std::get<1>(order[g]);
    j["m0"] = std::get<2>(order[g]);
    j["method"] = std::get<3>(order[g]);
    j["N_test"] = std::get<4>(order[g]);
    j["metric"] = std::get<5>(order[g]);
    j["count"] = v.size();
    j["mean"] = mean;
    j["std"] = sd;
    groups.push_back(std::move(j));
  }
  nlohmann::ordered_json root;
  root["records"] = records.size();
  root["groups"] = std::move(groups);
  return root.dump(2) + "\n";
}

std::string summary_path(const std::string& csv_path) {
  std::filesystem::path p(csv_path);
  p.replace_extension();
  return p.string() + ".summary.json";
}

void write_text_file(const std::string& path, std::string_view text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("error writing " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void emit_report(std::span<const RunRecord> records, const std::string& path) {
  write_text_file(path, records_to_csv(records));
  write_text_file(summary_path(path), summary_json(records));
}

}  // namespace bicl::harness
