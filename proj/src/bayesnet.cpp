#include "bicl/bayesnet.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace bicl {

BayesNet::BayesNet(int num_categories, ParentSets parents, std::vector<std::vector<double>> cpts)
    : d_(num_categories), parents_(std::move(parents)), cpts_(std::move(cpts)) {
  if (d_ < 2) throw std::invalid_argument("BayesNet: need at least 2 categories");
  if (parents_.empty()) throw std::invalid_argument("BayesNet: need at least 1 variable");
  if (cpts_.size() != parents_.size())
    throw std::invalid_argument("BayesNet: one CPT per variable required");
  for (int m = 0; m < num_vars(); ++m) {
    const auto& ps = parents_[static_cast<std::size_t>(m)];
    for (std::size_t k = 0; k < ps.size(); ++k) {
      if (ps[k] < 0 || ps[k] >= m)
        throw std::invalid_argument("BayesNet: parent " + std::to_string(ps[k]) + " of variable " +
                                    std::to_string(m) + " violates topological order");
      if (k > 0 && ps[k] <= ps[k - 1])
        throw std::invalid_argument("BayesNet: parents of variable " + std::to_string(m) +
                                    " must be strictly ascending");
    }
    max_in_degree_ = std::max(max_in_degree_, static_cast<int>(ps.size()));
    const auto& table = cpts_[static_cast<std::size_t>(m)];
    const std::size_t rows = static_cast<std::size_t>(num_rows(m));
    if (table.size() != rows * static_cast<std::size_t>(d_))
      throw std::invalid_argument("BayesNet: CPT of variable " + std::to_string(m) +
                                  " has wrong size");
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (int j = 0; j < d_; ++j) {
        const double p = table[r * static_cast<std::size_t>(d_) + static_cast<std::size_t>(j)];
        if (!(p >= 0.0 && p <= 1.0))
          throw std::invalid_argument("BayesNet: CPT entry outside [0,1] for variable " +
                                      std::to_string(m));
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("BayesNet: CPT row does not sum to 1 for variable " +
                                    std::to_string(m));
    }
  }
}

int BayesNet::num_rows(int m) const {
  int rows = 1;
  for (std::size_t k = 0; k < parents(m).size(); ++k) rows *= d_;
  return rows;
}

int BayesNet::row_index(int m, std::span<const int> values) const {
  int row = 0;
  for (int p : parents(m)) {
    const int v = values[static_cast<std::size_t>(p)];
    if (v < 0 || v >= d_)
      throw std::invalid_argument("row_index: parent " + std::to_string(p) + " of variable " +
                                  std::to_string(m) + " is unassigned or out of range");
    row = row * d_ + v;
  }
  return row;
}

std::span<const double> BayesNet::cpt_row(int m, int row) const {
  const auto& table = cpts_.at(static_cast<std::size_t>(m));
  return std::span<const double>(table).subspan(static_cast<std::size_t>(row) * d_,
                                                static_cast<std::size_t>(d_));
}

void Context::validate() const {
  if (observations.empty()) throw std::invalid_argument("Context: no observations");
  if (num_vars < 1 || num_categories < 2) throw std::invalid_argument("Context: bad shape");
  for (const auto& obs : observations) {
    if (static_cast<int>(obs.size()) != num_vars)
      throw std::invalid_argument("Context: observation length differs from M");
    for (int v : obs)
      if (v < 0 || v >= num_categories)
        throw std::invalid_argument("Context: category out of range");
  }
}

StructureSpec StructureSpec::parse(std::string_view name, int m) {
  if (name == "chain") return chain(m > 0 ? m : 7);
  if (name == "tree") return tree(m > 0 ? m : 7);
  if (name == "general") {
    if (m > 0 && m != 5) throw std::invalid_argument("general graph has exactly 5 variables");
    return general();
  }
  throw std::invalid_argument("unknown structure '" + std::string(name) +
                              "' (expected chain, tree or general)");
}

std::string StructureSpec::name() const {
  switch (kind) {
    case StructureKind::Chain: return "chain";
    case StructureKind::Tree: return "tree";
    case StructureKind::General: return "general";
    case StructureKind::Explicit: return "explicit";
  }
  return "unknown";
}

ParentSets general_graph_parents() { return {{}, {}, {0, 1}, {1, 2}, {2}}; }

ParentSets StructureSpec::parent_sets() const {
  if (num_vars < 1) throw std::invalid_argument("structure needs at least one variable");
  ParentSets ps(static_cast<std::size_t>(num_vars));
  switch (kind) {
    case StructureKind::Chain:
      for (int m = 1; m < num_vars; ++m) ps[static_cast<std::size_t>(m)] = {m - 1};
      return ps;
    case StructureKind::Tree:
      // Complete binary tree numbered in BFS order.
      for (int m = 1; m < num_vars; ++m) ps[static_cast<std::size_t>(m)] = {(m - 1) / 2};
      return ps;
    case StructureKind::General:
      if (num_vars != 5) throw std::invalid_argument("general graph has exactly 5 variables");
      return general_graph_parents();
    case StructureKind::Explicit:
      for (int m = 0; m < num_vars; ++m)
        for (int p : explicit_parents[static_cast<std::size_t>(m)])
          if (p < 0 || p >= m)
            throw std::invalid_argument("explicit parent list violates topological order");
      return explicit_parents;
  }
  return ps;
}

namespace {

std::vector<double> random_row(int d, Rng& rng) {
  std::vector<double> row(static_cast<std::size_t>(d));
  if (d == 2) {
    const double p = rng.coin() ? rng.uniform(0.15, 0.3) : rng.uniform(0.7, 0.85);
    row[0] = p;
    row[1] = 1.0 - p;
    return row;
  }
  for (;;) {
    double total = 0.0;
    for (auto& x : row) {
      x = rng.exponential();
      total += x;
    }
    bool inside = true;
    for (auto& x : row) {
      x /= total;
      inside = inside && x >= 0.1 && x <= 0.9;
    }
    if (inside) return row;
  }
}

}  // namespace

BayesNet random_bayesnet(const StructureSpec& structure, int num_categories, Rng& rng) {
  if (num_categories < 2) throw std::invalid_argument("random_bayesnet: d must be >= 2");
  if (num_categories >= 10)
    throw std::invalid_argument("random_bayesnet: d >= 10 leaves no room in [0.1, 0.9]^d");
  ParentSets ps = structure.parent_sets();
  for (auto& p : ps) std::sort(p.begin(), p.end());
  std::vector<std::vector<double>> cpts;
  cpts.reserve(ps.size());
  for (const auto& p : ps) {
    std::size_t rows = 1;
    for (std::size_t k = 0; k < p.size(); ++k) rows *= static_cast<std::size_t>(num_categories);
    std::vector<double> table;
    table.reserve(rows * static_cast<std::size_t>(num_categories));
    for (std::size_t r = 0; r < rows; ++r) {
      const auto row = random_row(num_categories, rng);
      table.insert(table.end(), row.begin(), row.end());
    }
    cpts.push_back(std::move(table));
  }
  return BayesNet(num_categories, std::move(ps), std::move(cpts));
}

Observation sample_observation(const BayesNet& bn, Rng& rng) {
  Observation obs(static_cast<std::size_t>(bn.num_vars()), 0);
  for (int m = 0; m < bn.num_vars(); ++m)
    obs[static_cast<std::size_t>(m)] = rng.categorical(bn.cpt_row(m, bn.row_index(m, obs)));
  return obs;
}

Context sample_context(const BayesNet& bn, int n, Rng& rng, std::string source) {
  if (n < 1) throw std::invalid_argument("sample_context: N must be >= 1");
  Context ctx;
  ctx.num_vars = bn.num_vars();
  ctx.num_categories = bn.num_categories();
  ctx.source = std::move(source);
  ctx.rng_seed = rng.seed();
  ctx.observations.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ctx.observations.push_back(sample_observation(bn, rng));
  return ctx;
}

std::vector<double> exact_conditional(const BayesNet& bn, int target, std::span<const int> values) {
  if (target < 0 || target >= bn.num_vars())
    throw std::invalid_argument("exact_conditional: target out of range");
  if (static_cast<int>(values.size()) != bn.num_vars())
    throw std::invalid_argument("exact_conditional: assignment has wrong length");
  const auto row = bn.cpt_row(target, bn.row_index(target, values));
  return {row.begin(), row.end()};
}

std::string to_json(const BayesNet& bn) {
  nlohmann::json j;
  j["M"] = bn.num_vars();
  j["d"] = bn.num_categories();
  j["parents"] = bn.parents();
  auto cpts = nlohmann::json::array();
  for (int m = 0; m < bn.num_vars(); ++m) {
    auto rows = nlohmann::json::array();
    for (int r = 0; r < bn.num_rows(m); ++r) {
      const auto row = bn.cpt_row(m, r);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    cpts.push_back(std::move(rows));
  }
  j["cpts"] = std::move(cpts);
  return j.dump(2);
}

BayesNet bayesnet_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    const int m = j.at("M").get<int>();
    const int d = j.at("d").get<int>();
    auto parents = j.at("parents").get<ParentSets>();
    if (static_cast<int>(parents.size()) != m)
      throw std::invalid_argument("BN JSON: parents has " + std::to_string(parents.size()) +
                                  " entries, M = " + std::to_string(m));
    const auto& cj = j.at("cpts");
    if (!cj.is_array() || static_cast<int>(cj.size()) != m)
      throw std::invalid_argument("BN JSON: cpts must have M entries");
    std::vector<std::vector<double>> cpts;
    for (const auto& rows : cj) {
      std::vector<double> flat;
      for (const auto& row : rows) {
        auto r = row.get<std::vector<double>>();
        if (static_cast<int>(r.size()) != d)
          throw std::invalid_argument("BN JSON: CPT row length differs from d");
        flat.insert(flat.end(), r.begin(), r.end());
      }
      cpts.push_back(std::move(flat));
    }
    return BayesNet(d, std::move(parents), std::move(cpts));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("BN JSON: ") + e.what());
  }
}

void save_bayesnet(const BayesNet& bn, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << to_json(bn) << '\n';
}

BayesNet load_bayesnet(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return bayesnet_from_json(ss.str());
}

}  // namespace bicl
