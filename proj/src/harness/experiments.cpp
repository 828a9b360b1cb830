#include "bicl/harness/experiments.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <sstream>

#include "bicl/encoding.hpp"
#include "bicl/errors.hpp"
#include "bicl/keyvalue.hpp"
#include "bicl/oracles.hpp"
#include "bicl/parallel.hpp"
#include "json.hpp"

namespace bicl::harness {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start, bool timing) {
  if (!timing) return 0.0;
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string cell_id(std::string_view kind, const std::vector<std::pair<std::string, std::string>>& parts) {
  std::string id(kind);
  for (const auto& [k, v] : parts) id += "/" + k + "=" + v;
  return id;
}

struct TrialOutcome {
  bool skipped = false;
  int target = 0;
  double tv = 0.0;
  double residual = 0.0;
  double block_sum = 0.0;
};

TrialOutcome verify_trial(const StructureSpec& spec, int d, int n, const ConstructionOptions& options, Rng rng) {
  auto bn = std::make_shared<const BayesNet>(random_bayesnet(spec, d, rng));
  const Context ctx = sample_context(*bn, n, rng);
  const Observation values = sample_observation(*bn, rng);
  TrialOutcome out;
  out.target = static_cast<int>(rng.below(static_cast<std::uint64_t>(bn->num_vars())));
  const QueryState q = QueryState::autoregressive(values, out.target);
  const EstimateResult est = mle_estimate(ctx, q, bn->parents(out.target));
  if (!est.dist) {
    out.skipped = true;
    return out;
  }
  const ConstructedTransformer ct(bn, n, options);
  const ForwardTrace trace = forward_trace(ct, encode(ctx, q));
  out.tv = tv_distance(trace.probs, *est.dist);
  const auto s = attention_residual(trace.read, *est.dist, bn->num_vars(), d, out.target);
  for (double v : s) out.residual = std::max(out.residual, std::abs(v));
  double block = 0.0;
  for (int j = 0; j < d; ++j) block += s[static_cast<std::size_t>(out.target * d + j)];
  out.block_sum = std::abs(block);
  return out;
}

StructureSpec parse_structure(const std::string& name, int m) { return StructureSpec::parse(name, m); }

training::Predictor constructed_predictor(std::shared_ptr<const BayesNet> bn, const std::vector<int>& sizes, double eps,
                                double gain) {
  auto table = std::make_shared<std::map<int, std::shared_ptr<const ConstructedTransformer>>>();
  for (int n : sizes)
    (*table)[n] = std::make_shared<const ConstructedTransformer>(bn, n, ConstructionOptions{eps, std::nullopt, gain});
  return [table](const Context& ctx, const QueryState& q) -> std::optional<Distribution> {
    const auto it = table->find(ctx.size());
    if (it == table->end()) throw std::logic_error("constructed predictor: no transformer for this context size");
    try {
      return forward(*it->second, encode(ctx, q));
    } catch (const EmptyMatchSet&) {
      return empirical_marginal(ctx, q.target);
    }
  };
}

void append_cells(std::vector<RunRecord>& out, const std::vector<training::EvalCell>& cells, const std::string& id,
                  const std::string& structure, std::uint64_t seed, double wall_ms,
                  const std::vector<std::string>& methods = {}) {
  for (const auto& c : cells) {
    if (!methods.empty() && std::find(methods.begin(), methods.end(), c.method) == methods.end()) continue;
    out.push_back({id, structure, c.target, c.method, c.n_test, "accuracy", c.accuracy, seed, wall_ms});
  }
}

training::EvalConfig eval_config(const ExperimentConfig& cfg) {
  training::EvalConfig e;
  e.n_test = cfg.n_test;
  e.contexts = cfg.contexts;
  e.targets = cfg.targets;
  return e;
}

void check_targets(const ExperimentConfig& cfg, int num_vars) {
  for (int t : cfg.targets)
    if (t >= num_vars) throw ConfigError("targets: variable " + std::to_string(t) + " out of range");
}

template <class T>
std::vector<training::EvalCell> train_and_evaluate(const training::TrainConfig& tc, const BayesNet& bn,
                                                   const training::EvalConfig& ec, std::uint64_t seed,
                                                   const Progress& progress, const std::string& label) {
  training::LogCallback on_log;
  if (progress)
    on_log = [&](const training::LogRow& r) {
      std::ostringstream o;
      o << label << " step " << r.step << " revealed " << r.revealed << " train_loss " << r.train_loss
        << " test_loss " << r.test_loss << " test_acc " << r.test_accuracy;
      progress(o.str());
    };
  const auto result = training::train<T>(tc, on_log);
  const std::vector<training::NamedPredictor> extra{{"trained", training::trained_predictor<T>(result.model)}};
  return training::evaluate(bn, ec, extra, Rng(seed).split(kEvalStream));
}

std::vector<training::EvalCell> train_and_evaluate_any(const training::TrainConfig& tc, const BayesNet& bn,
                                                       const training::EvalConfig& ec, std::uint64_t seed,
                                                       const Progress& progress, const std::string& label) {
  if (tc.precision == training::Precision::F64)
    return train_and_evaluate<double>(tc, bn, ec, seed, progress, label);
  return train_and_evaluate<float>(tc, bn, ec, seed, progress, label);
}

training::TrainConfig training_config(const ExperimentConfig& cfg, const std::string& structure, int d,
                                      std::uint64_t seed) {
  training::TrainConfig tc = cfg.train;
  tc.structure = structure;
  tc.num_vars = cfg.num_vars;
  tc.num_categories = d;
  tc.seed = seed;
  return tc;
}

}  // namespace

bool VerifyResult::pass() const {
  for (const auto& c : cells)
    if (!c.pass()) return false;
  return true;
}

std::string VerifyResult::to_json() const {
  nlohmann::ordered_json root;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  int skipped = 0;
  for (const auto& c : cells) {
    skipped += c.skipped;
    nlohmann::ordered_json j;
    j["structure"] = c.structure;
    j["d"] = c.num_categories;
    j["N"] = c.context_size;
    j["epsilon"] = c.epsilon;
    j["seed"] = c.seed;
    j["trials"] = c.trials;
    j["skipped"] = c.skipped;
    j["max_tv"] = c.max_tv;
    j["tv_ok"] = c.tv_ok();
    j["max_residual"] = c.max_residual;
    j["residual_bound"] = c.residual_bound;
    j["max_block_sum"] = c.max_block_sum;
    j["residual_ok"] = c.residual_ok();
    nlohmann::ordered_json norms = nlohmann::ordered_json::array();
    for (const auto& n : c.norms.checks)
      norms.push_back({{"name", n.name}, {"norm", n.norm}, {"bound", n.bound}, {"ok", n.ok}});
    j["norms"] = std::move(norms);
    j["norms_ok"] = c.norms.all_ok();
    j["pass"] = c.pass();
    arr.push_back(std::move(j));
  }
  root["pass"] = pass();
  root["skipped"] = skipped;
  root["cells"] = std::move(arr);
  return root.dump(2) + "\n";
}

VerifyResult run_verify(const ExperimentConfig& cfg, const Progress& progress) {
  cfg.validate();
  VerifyResult result;
  for (std::size_t si = 0; si < cfg.structures.size(); ++si) {
    const StructureSpec spec = parse_structure(cfg.structures[si], cfg.num_vars);
    const std::string sname = spec.name();
    const int M = spec.num_vars;
    for (int d : cfg.categories)
      for (int n : cfg.context_sizes)
        for (std::size_t ei = 0; ei < cfg.epsilons.size(); ++ei)
          for (std::uint64_t seed : cfg.seeds) {
            const auto start = Clock::now();
            const double eps = cfg.epsilons[ei];
            const ConstructionOptions options{eps, std::nullopt, cfg.mask_gain};
            const Rng cell = Rng(seed)
                                 .split(kVerifyStream)
                                 .split(si)
                                 .split(static_cast<std::uint64_t>(d))
                                 .split(static_cast<std::uint64_t>(n))
                                 .split(ei);
            VerifyCell vc;
            vc.structure = sname;
            vc.num_categories = d;
            vc.context_size = n;
            vc.epsilon = eps;
            vc.seed = seed;
            vc.residual_bound = eps / ((2.0 * M + 1.0) * d);
            {
              Rng r = cell.split(~0ULL);
              auto bn = std::make_shared<const BayesNet>(random_bayesnet(spec, d, r));
              vc.norms = verify_norms(ConstructedTransformer(bn, n, options));
            }
            const std::string id = cell_id("verify", {{"d", std::to_string(d)},
                                                      {"N", std::to_string(n)},
                                                      {"eps", format_double(eps)}});
            std::vector<TrialOutcome> accepted;
            const int max_attempts = 50 * cfg.trials;
            int attempts = 0;
            while (static_cast<int>(accepted.size()) < cfg.trials && attempts < max_attempts) {
              const int chunk = std::min(cfg.trials, max_attempts - attempts);
              std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(chunk));
              parallel_for(chunk, [&](int i) {
                outcomes[static_cast<std::size_t>(i)] =
                    verify_trial(spec, d, n, options, cell.split(static_cast<std::uint64_t>(attempts + i)));
              });
              attempts += chunk;
              for (const auto& o : outcomes) {
                if (static_cast<int>(accepted.size()) == cfg.trials) break;
                if (o.skipped) {
                  ++vc.skipped;
                  continue;
                }
                accepted.push_back(o);
              }
            }
            const double wall = elapsed_ms(start, cfg.timing);
            for (const auto& o : accepted) {
              vc.max_tv = std::max(vc.max_tv, o.tv);
              vc.max_residual = std::max(vc.max_residual, o.residual);
              vc.max_block_sum = std::max(vc.max_block_sum, o.block_sum);
              result.records.push_back({id, sname, o.target, "constructed", n, "tv", o.tv, seed, wall});
              result.records.push_back({id, sname, o.target, "constructed", n, "residual_inf", o.residual, seed, wall});
              result.records.push_back(
                  {id, sname, o.target, "constructed", n, "residual_block_sum", o.block_sum, seed, wall});
            }
            vc.trials = static_cast<int>(accepted.size());
            if (progress) {
              std::ostringstream o;
              o << sname << " d=" << d << " N=" << n << " eps=" << eps << " seed=" << seed << ": " << vc.trials
                << " trials, " << vc.skipped << " skipped, max TV " << vc.max_tv << (vc.pass() ? " ok" : " FAIL");
              progress(o.str());
            }
            result.cells.push_back(std::move(vc));
          }
  }
  return result;
}

BayesNet test_network(const StructureSpec& spec, int num_categories, std::uint64_t seed) {
  Rng r = Rng(seed).split(kNetworkStream).split(static_cast<std::uint64_t>(num_categories));
  return random_bayesnet(spec, num_categories, r);
}

std::vector<RunRecord> run_compare(const ExperimentConfig& cfg, const training::AnyModel* model,
                                   const Progress& progress) {
  cfg.validate();
  std::vector<RunRecord> out;
  for (const auto& sname : cfg.structures) {
    const StructureSpec spec = parse_structure(sname, cfg.num_vars);
    check_targets(cfg, spec.num_vars);
    for (int d : cfg.categories)
      for (std::uint64_t seed : cfg.seeds) {
        const auto start = Clock::now();
        auto bn = std::make_shared<const BayesNet>(test_network(spec, d, seed));
        std::vector<training::NamedPredictor> extra{
            {"constructed", constructed_predictor(bn, cfg.n_test, cfg.epsilons.front(), cfg.mask_gain)}};
        if (model) {
          std::visit(
              [&](const auto& m) {
                if (m.config().num_vars != spec.num_vars || m.config().num_categories != d)
                  throw ConfigError("model: shape does not match structure " + spec.name());
                extra.push_back({"trained", training::trained_predictor(m)});
              },
              *model);
        }
        const auto cells = training::evaluate(*bn, eval_config(cfg), extra, Rng(seed).split(kEvalStream));
        const std::string id = cell_id("compare", {{"d", std::to_string(d)}});
        append_cells(out, cells, id, spec.name(), seed, elapsed_ms(start, cfg.timing));
        if (progress) progress("compare " + spec.name() + " d=" + std::to_string(d) + " seed=" + std::to_string(seed));
      }
  }
  return out;
}

std::vector<RunRecord> run_generalize(const ExperimentConfig& cfg, const Progress& progress) {
  cfg.validate();
  std::vector<RunRecord> out;
  for (const auto& sname : cfg.structures) {
    const StructureSpec spec = parse_structure(sname, cfg.num_vars);
    check_targets(cfg, spec.num_vars);
    for (int d : cfg.categories)
      for (std::uint64_t seed : cfg.seeds) {
        const BayesNet bn = test_network(spec, d, seed);
        for (std::size_t k = 0; k < cfg.n_train.size(); ++k) {
          const auto start = Clock::now();
          training::TrainConfig tc = training_config(cfg, sname, d, seed);
          tc.context_size = cfg.n_train[k];
          const std::string id = cell_id("generalize", {{"d", std::to_string(d)},
                                                        {"n_train", std::to_string(cfg.n_train[k])}});
          const auto cells = train_and_evaluate_any(tc, bn, eval_config(cfg), seed, progress,
                                                    id + " " + spec.name() + " seed=" + std::to_string(seed));
          append_cells(out, cells, id, spec.name(), seed, elapsed_ms(start, cfg.timing));
        }
      }
  }
  return out;
}

std::vector<RunRecord> run_ablate(const ExperimentConfig& cfg, const Progress& progress) {
  cfg.validate();
  std::vector<RunRecord> out;
  for (const auto& sname : cfg.structures) {
    const StructureSpec spec = parse_structure(sname, cfg.num_vars);
    check_targets(cfg, spec.num_vars);
    for (int d : cfg.categories)
      for (std::uint64_t seed : cfg.seeds) {
        const BayesNet bn = test_network(spec, d, seed);
        for (int layers : cfg.layer_grid)
          for (int heads : cfg.head_grid) {
            const auto start = Clock::now();
            training::TrainConfig tc = training_config(cfg, sname, d, seed);
            tc.layers = layers;
            tc.heads = heads;
            const std::string id = cell_id("ablate", {{"d", std::to_string(d)},
                                                      {"layers", std::to_string(layers)},
                                                      {"heads", std::to_string(heads)}});
            const auto cells = train_and_evaluate_any(tc, bn, eval_config(cfg), seed, progress,
                                                      id + " " + spec.name() + " seed=" + std::to_string(seed));
            append_cells(out, cells, id, spec.name(), seed, elapsed_ms(start, cfg.timing));
          }
      }
  }
  return out;
}

std::vector<RunRecord> run_eval(const ExperimentConfig& cfg, const training::AnyModel& model, const BayesNet& bn,
                                const Progress& progress) {
  cfg.validate();
  check_targets(cfg, bn.num_vars());
  std::vector<RunRecord> out;
  std::visit(
      [&](const auto& m) {
        if (m.config().num_vars != bn.num_vars() || m.config().num_categories != bn.num_categories())
          throw ConfigError("model: shape does not match the network");
      },
      model);
  for (std::uint64_t seed : cfg.seeds) {
    const auto start = Clock::now();
    std::vector<training::NamedPredictor> extra;
    std::visit([&](const auto& m) { extra.push_back({"trained", training::trained_predictor(m)}); }, model);
    const auto cells = training::evaluate(bn, eval_config(cfg), extra, Rng(seed).split(kEvalStream));
    append_cells(out, cells, "eval", "bn", seed, elapsed_ms(start, cfg.timing));
    if (progress) progress("eval seed=" + std::to_string(seed));
  }
  return out;
}

std::string context_to_csv(const Context& ctx) {
  std::string out;
  for (int m = 0; m < ctx.num_vars; ++m) out += (m ? ",X" : "X") + std::to_string(m);
  out += '\n';
  for (const auto& o : ctx.observations) {
    for (std::size_t m = 0; m < o.size(); ++m) out += (m ? "," : "") + std::to_string(o[m]);
    out += '\n';
  }
  return out;
}

Context context_from_csv(std::string_view text, int num_categories) {
  Context ctx;
  ctx.num_categories = num_categories;
  bool header = true;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (header) {
      ctx.num_vars = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
      header = false;
      continue;
    }
    const auto values = parse_int_list("context", line);
    if (static_cast<int>(values.size()) != ctx.num_vars) throw ConfigError("context: ragged row");
    ctx.observations.push_back(values);
  }
  try {
    ctx.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("context: ") + e.what());
  }
  return ctx;
}

std::string train_log_csv(const std::vector<training::LogRow>& log) {
  std::string out = "step,revealed,train_loss,test_loss,test_accuracy\n";
  for (const auto& r : log)
    out += std::to_string(r.step) + ',' + std::to_string(r.revealed) + ',' + format_double(r.train_loss) + ',' +
           format_double(r.test_loss) + ',' + format_double(r.test_accuracy) + '\n';
  return out;
}

}  // namespace bicl::harness
