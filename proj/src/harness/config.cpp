#include "bicl/harness/config.hpp"

#include "bicl/bayesnet.hpp"
#include "bicl/errors.hpp"
#include "bicl/keyvalue.hpp"

namespace bicl::harness {

namespace {

std::vector<std::string> parse_names(std::string_view field, std::string_view value) {
  std::vector<std::string> out;
  std::string_view rest = value;
  while (true) {
    const auto comma = rest.find(',');
    std::string_view piece = rest.substr(0, comma);
    while (!piece.empty() && (piece.front() == ' ' || piece.front() == '\t')) piece.remove_prefix(1);
    while (!piece.empty() && (piece.back() == ' ' || piece.back() == '\t')) piece.remove_suffix(1);
    if (piece.empty()) throw ConfigError(std::string(field) + ": empty list item");
    out.emplace_back(piece);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

ExperimentKind parse_kind(std::string_view s) {
  if (s == "verify") return ExperimentKind::Verify;
  if (s == "compare") return ExperimentKind::Compare;
  if (s == "generalize") return ExperimentKind::Generalize;
  if (s == "ablate") return ExperimentKind::Ablate;
  if (s == "sample") return ExperimentKind::Sample;
  if (s == "train") return ExperimentKind::Train;
  if (s == "eval") return ExperimentKind::Eval;
  throw ConfigError("kind: unknown experiment kind '" + std::string(s) + "'");
}

std::string_view kind_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Verify: return "verify";
    case ExperimentKind::Compare: return "compare";
    case ExperimentKind::Generalize: return "generalize";
    case ExperimentKind::Ablate: return "ablate";
    case ExperimentKind::Sample: return "sample";
    case ExperimentKind::Train: return "train";
    case ExperimentKind::Eval: return "eval";
  }
  return "verify";
}

ExperimentConfig ExperimentConfig::defaults(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  switch (kind) {
    case ExperimentKind::Verify:
      break;
    case ExperimentKind::Compare:
      c.categories = {2};
      c.epsilons = {1e-3};
      break;
    case ExperimentKind::Generalize:
      c.structures = {"general"};
      c.categories = {2};
      c.n_test = {20, 50};
      break;
    case ExperimentKind::Ablate:
      c.structures = {"general"};
      c.categories = {2};
      c.n_test = {20, 50};
      break;
    case ExperimentKind::Sample:
    case ExperimentKind::Train:
    case ExperimentKind::Eval:
      c.structures = {"chain"};
      c.categories = {2};
      break;
  }
  return c;
}

void ExperimentConfig::set(std::string_view key, std::string_view value) {
  if (key.starts_with("train.")) {
    train.set(key.substr(6), value);
  } else if (key == "kind") {
    kind = parse_kind(value);
  } else if (key == "structure" || key == "structures") {
    structures = parse_names(key, value);
  } else if (key == "M") {
    num_vars = parse_int(key, value);
  } else if (key == "d") {
    categories = parse_int_list(key, value);
  } else if (key == "N") {
    context_sizes = parse_int_list(key, value);
  } else if (key == "epsilon" || key == "eps") {
    epsilons = parse_double_list(key, value);
  } else if (key == "trials") {
    trials = parse_int(key, value);
  } else if (key == "seeds" || key == "seed") {
    seeds.clear();
    for (int s : parse_int_list(key, value)) {
      if (s < 0) throw ConfigError(std::string(key) + ": seeds must be nonnegative");
      seeds.push_back(static_cast<std::uint64_t>(s));
    }
  } else if (key == "n_test") {
    n_test = parse_int_list(key, value);
  } else if (key == "n_train") {
    n_train = parse_int_list(key, value);
  } else if (key == "layers") {
    layer_grid = parse_int_list(key, value);
  } else if (key == "heads") {
    head_grid = parse_int_list(key, value);
  } else if (key == "targets") {
    targets = parse_int_list(key, value);
  } else if (key == "contexts") {
    contexts = parse_int(key, value);
  } else if (key == "mask_gain") {
    mask_gain = parse_double(key, value);
  } else if (key == "out" || key == "output") {
    if (value.empty()) throw ConfigError("output: must be nonempty");
    output = std::string(value);
  } else if (key == "timing") {
    timing = parse_bool(key, value);
  } else {
    throw ConfigError(std::string(key) + ": unknown key");
  }
}

void ExperimentConfig::apply_text(std::string_view text) {
  for (const auto& kv : parse_key_values(text)) set(kv.key, kv.value);
}

void ExperimentConfig::validate() const {
  require(!structures.empty(), "structure: list must be nonempty");
  for (const auto& s : structures) {
    try {
      StructureSpec::parse(s, num_vars).parent_sets();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string("structure: ") + e.what());
    }
  }
  require(num_vars >= 0 && num_vars <= 64, "M: must be in [0, 64]");
  require(!categories.empty(), "d: list must be nonempty");
  for (int d : categories) require(d >= 2 && d <= 9, "d: entries must be in [2, 9]");
  require(!seeds.empty(), "seeds: list must be nonempty");
  require(!output.empty(), "output: must be nonempty");
  require(mask_gain >= 1.0, "mask_gain: must be >= 1");
  for (int t : targets) require(t >= 0, "targets: entries must be >= 0");
  switch (kind) {
    case ExperimentKind::Verify:
      require(!context_sizes.empty(), "N: list must be nonempty");
      for (int n : context_sizes) require(n >= 1 && n <= 100000, "N: entries must be in [1, 100000]");
      require(!epsilons.empty(), "epsilon: list must be nonempty");
      for (double e : epsilons) require(e > 0.0 && e < 1.0, "epsilon: entries must be in (0, 1)");
      require(trials >= 1 && trials <= 1000000, "trials: must be in [1, 1000000]");
      break;
    case ExperimentKind::Compare:
    case ExperimentKind::Eval:
      require(!epsilons.empty(), "epsilon: list must be nonempty");
      for (double e : epsilons) require(e > 0.0 && e < 1.0, "epsilon: entries must be in (0, 1)");
      [[fallthrough]];
    case ExperimentKind::Generalize:
    case ExperimentKind::Ablate:
      require(!n_test.empty(), "n_test: list must be nonempty");
      for (int n : n_test) require(n >= 1 && n <= 100000, "n_test: entries must be in [1, 100000]");
      require(contexts >= 1 && contexts <= 10000000, "contexts: must be in [1, 10000000]");
      if (kind == ExperimentKind::Generalize) {
        require(!n_train.empty(), "n_train: list must be nonempty");
        for (int n : n_train) require(n >= 1 && n <= 100000, "n_train: entries must be in [1, 100000]");
      }
      if (kind == ExperimentKind::Ablate) {
        require(!layer_grid.empty(), "layers: list must be nonempty");
        require(!head_grid.empty(), "heads: list must be nonempty");
        for (int l : layer_grid) require(l >= 1 && l <= 64, "layers: entries must be in [1, 64]");
        for (int h : head_grid) require(h >= 1 && h <= 256, "heads: entries must be in [1, 256]");
      }
      break;
    case ExperimentKind::Sample:
    case ExperimentKind::Train:
      break;
  }
  if (kind == ExperimentKind::Train || kind == ExperimentKind::Generalize || kind == ExperimentKind::Ablate)
    train.validate();
}

}  // namespace bicl::harness
