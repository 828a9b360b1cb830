#include "bicl/training/trainer.hpp"

#include <cmath>
#include <sstream>

#include "bicl/errors.hpp"
#include "bicl/keyvalue.hpp"
#include "bicl/parallel.hpp"
#include "bicl/training/backprop.hpp"
#include "bicl/training/optimizer.hpp"

namespace bicl::training {

namespace {

constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kTestStream = 2;

LayerNormPlacement parse_placement(std::string_view v) {
  if (v == "post") return LayerNormPlacement::Post;
  if (v == "pre") return LayerNormPlacement::Pre;
  throw ConfigError("ln_placement: expected post or pre, got '" + std::string(v) + "'");
}

}  // namespace

TrainConfig TrainConfig::preset(std::string_view name) {
  TrainConfig c;
  if (name == "desk") return c;
  if (name == "paper-chain" || name == "paper-tree" || name == "paper-general") {
    c.structure = std::string(name.substr(6));
    c.num_vars = 0;
    c.layers = 6;
    c.heads = 8;
    c.hidden = 256;
    c.steps = 20000;
    c.learning_rate = 1e-4;
    return c;
  }
  throw ConfigError("preset: unknown preset '" + std::string(name) + "'");
}

void TrainConfig::set(std::string_view key, std::string_view value) {
  if (key == "structure") {
    try {
      StructureSpec::parse(value, 0);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("structure: ") + e.what());
    }
    structure = std::string(value);
  } else if (key == "M" || key == "num_vars") {
    num_vars = parse_int(key, value);
  } else if (key == "d" || key == "num_categories") {
    num_categories = parse_int(key, value);
  } else if (key == "N" || key == "context_size" || key == "n_train") {
    context_size = parse_int(key, value);
  } else if (key == "steps") {
    steps = parse_int(key, value);
  } else if (key == "batch_size") {
    batch_size = parse_int(key, value);
  } else if (key == "learning_rate" || key == "lr") {
    learning_rate = parse_double(key, value);
  } else if (key == "weight_decay") {
    weight_decay = parse_double(key, value);
  } else if (key == "beta1") {
    beta1 = parse_double(key, value);
  } else if (key == "beta2") {
    beta2 = parse_double(key, value);
  } else if (key == "adam_eps") {
    adam_eps = parse_double(key, value);
  } else if (key == "layers") {
    layers = parse_int(key, value);
  } else if (key == "heads") {
    heads = parse_int(key, value);
  } else if (key == "hidden") {
    hidden = parse_int(key, value);
  } else if (key == "ffn_mult") {
    ffn_mult = parse_int(key, value);
  } else if (key == "ln_placement") {
    ln_placement = parse_placement(value);
  } else if (key == "scale_scores") {
    scale_scores = parse_bool(key, value);
  } else if (key == "curriculum") {
    curriculum = parse_bool(key, value);
  } else if (key == "curriculum_start") {
    curriculum_start = parse_int(key, value);
  } else if (key == "curriculum_factor") {
    curriculum_factor = parse_double(key, value);
  } else if (key == "curriculum_window") {
    curriculum_window = parse_int(key, value);
  } else if (key == "visibility") {
    visibility = parse_visibility(value);
  } else if (key == "log_every") {
    log_every = parse_int(key, value);
  } else if (key == "test_examples") {
    test_examples = parse_int(key, value);
  } else if (key == "seed") {
    seed = parse_u64(key, value);
  } else if (key == "precision") {
    precision = parse_precision(value);
  } else if (key == "preset") {
    const TrainConfig p = preset(value);
    *this = p;
  } else {
    throw ConfigError(std::string(key) + ": unknown training key");
  }
}

void TrainConfig::apply_text(std::string_view text) {
  for (const auto& kv : parse_key_values(text)) set(kv.key, kv.value);
}

std::string TrainConfig::to_text() const {
  std::ostringstream o;
  o << "structure = " << structure << "\nM = " << num_vars << "\nd = " << num_categories
    << "\nN = " << context_size << "\nsteps = " << steps << "\nbatch_size = " << batch_size
    << "\nlearning_rate = " << format_double(learning_rate) << "\nweight_decay = " << format_double(weight_decay)
    << "\nbeta1 = " << format_double(beta1) << "\nbeta2 = " << format_double(beta2)
    << "\nadam_eps = " << format_double(adam_eps) << "\nlayers = " << layers << "\nheads = " << heads
    << "\nhidden = " << hidden << "\nffn_mult = " << ffn_mult
    << "\nln_placement = " << (ln_placement == LayerNormPlacement::Post ? "post" : "pre")
    << "\nscale_scores = " << (scale_scores ? "true" : "false")
    << "\ncurriculum = " << (curriculum ? "true" : "false") << "\ncurriculum_start = " << curriculum_start
    << "\ncurriculum_factor = " << format_double(curriculum_factor)
    << "\ncurriculum_window = " << curriculum_window << "\nvisibility = " << visibility_name(visibility)
    << "\nlog_every = " << log_every << "\ntest_examples = " << test_examples << "\nseed = " << seed
    << "\nprecision = " << precision_name(precision) << "\n";
  return o.str();
}

StructureSpec TrainConfig::structure_spec() const {
  try {
    return StructureSpec::parse(structure, num_vars);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("structure: ") + e.what());
  }
}

void TrainConfig::validate() const {
  const StructureSpec s = structure_spec();
  s.parent_sets();
  if (num_categories < 2 || num_categories > 9) throw ConfigError("d: must be in [2, 9]");
  if (context_size < 1) throw ConfigError("N: must be >= 1");
  if (steps < 0) throw ConfigError("steps: must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate: must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay: must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1: must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2: must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps: must be > 0");
  if (curriculum_start < 1) throw ConfigError("curriculum_start: must be >= 1");
  if (!(curriculum_factor > 0.0)) throw ConfigError("curriculum_factor: must be > 0");
  if (curriculum_window < 1) throw ConfigError("curriculum_window: must be >= 1");
  if (log_every < 1) throw ConfigError("log_every: must be >= 1");
  if (test_examples < 1) throw ConfigError("test_examples: must be >= 1");
  model_config().validate();
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.num_vars = structure_spec().num_vars;
  m.num_categories = num_categories;
  m.layers = layers;
  m.heads = heads;
  m.hidden = hidden;
  m.ffn_mult = ffn_mult;
  m.ln_placement = ln_placement;
  m.scale_scores = scale_scores;
  return m;
}

DataSpec TrainConfig::data_spec() const {
  return {structure_spec(), num_categories, context_size, visibility};
}

template <class T>
TrainResult<T> train(const TrainConfig& config, const LogCallback& on_log) {
  config.validate();
  const Rng root(config.seed);
  const DataSpec spec = config.data_spec();
  const int M = spec.structure.num_vars;

  TrainResult<T> result{TrainableModel<T>(config.model_config()), {}, 0, std::nullopt};
  TrainableModel<T>& model = result.model;
  Rng init = root.split(kInitStream);
  model.initialize(init);

  Batch<T> test;
  {
    DataSpec test_spec = spec;
    test_spec.visibility = ContextVisibility::All;
    generate_batch<T>(test_spec, M, config.test_examples, root.split(kTestStream), test);
  }

  AdamW<T> opt(model.layout().total(), {config.learning_rate, config.beta1, config.beta2, config.adam_eps,
                                        config.weight_decay});
  Curriculum curriculum(M, config.curriculum_start, config.curriculum_factor * std::log(config.num_categories),
                        config.curriculum_window, config.curriculum);
  if (curriculum.complete()) result.curriculum_complete_step = 0;
  const Rng data = root.split(kDataStream);
  Batch<T> batch;
  std::vector<T> grads;
  GradientScratch<T> scratch;
  double loss_sum = 0.0;
  int loss_count = 0;

  auto log_row = [&](int step) {
    const Matrix<T> logits = forward_logits<T>(model, test.inputs);
    LogRow row;
    row.step = step;
    row.revealed = curriculum.revealed();
    row.train_loss = loss_count ? loss_sum / loss_count : 0.0;
    row.test_loss = cross_entropy<T>(logits.cref(), test.labels);
    int correct = 0;
    for (int b = 0; b < logits.rows(); ++b) {
      const auto p = softmax_probs<T>(std::span<const T>(logits.row(b), static_cast<std::size_t>(logits.cols())));
      if (argmax(p) == test.labels[static_cast<std::size_t>(b)]) ++correct;
    }
    row.test_accuracy = static_cast<double>(correct) / logits.rows();
    result.log.push_back(row);
    if (on_log) on_log(row);
    loss_sum = 0.0;
    loss_count = 0;
  };

  for (int step = 1; step <= config.steps; ++step) {
    generate_batch<T>(spec, curriculum.revealed(), config.batch_size, data.split(static_cast<std::uint64_t>(step)),
                      batch);
    const double loss = loss_and_gradients<T>(model, batch.inputs, batch.labels, grads, scratch);
    bool finite = std::isfinite(loss);
    for (std::size_t i = 0; finite && i < grads.size(); ++i) finite = std::isfinite(grads[i]);
    if (!finite) {
      std::ostringstream msg;
      msg << "training diverged at step " << step << " (loss " << loss << ", revealed " << curriculum.revealed()
          << ", lr " << config.learning_rate << ")";
      throw NumericError(msg.str());
    }
    opt.step(model.params(), grads);
    loss_sum += loss;
    ++loss_count;
    if (curriculum.observe(loss) && curriculum.complete()) result.curriculum_complete_step = step;
    if (step % config.log_every == 0 || step == config.steps) log_row(step);
  }
  if (config.steps == 0) log_row(0);
  result.revealed = curriculum.revealed();
  return result;
}

template <class T>
Predictor trained_predictor(const TrainableModel<T>& model) {
  return [&model](const Context& ctx, const QueryState& q) -> std::optional<Distribution> {
    thread_local Workspace<T> ws;
    thread_local Matrix<T> input;
    const int M = ctx.num_vars, d = ctx.num_categories;
    if (M != model.config().num_vars || d != model.config().num_categories)
      throw std::invalid_argument("trained_predictor: context shape does not match the model");
    input.resize(simple_input_rows(M, d), ctx.size() + 1);
    encode_simple_into<T>(ctx.observations, q, d, M, input.ref());
    return softmax_probs<T>(forward_example<T>(model, input.cref(), ws));
  };
}

std::vector<EvalCell> evaluate(const BayesNet& bn, const EvalConfig& config, std::span<const NamedPredictor> extra,
                               const Rng& rng) {
  if (config.contexts < 1) throw ConfigError("contexts: must be >= 1");
  if (config.n_test.empty()) throw ConfigError("n_test: list must be nonempty");
  for (int n : config.n_test)
    if (n < 1) throw ConfigError("n_test: entries must be >= 1");
  const int M = bn.num_vars();
  std::vector<int> targets = config.targets;
  if (targets.empty())
    for (int m = 0; m < M; ++m) targets.push_back(m);
  for (int t : targets)
    if (t < 0 || t >= M) throw ConfigError("targets: variable index out of range");

  const int methods = 3 + static_cast<int>(extra.size());
  std::vector<std::string> names{"optimal", "mle", "naive"};
  for (const auto& p : extra) names.push_back(p.name);

  std::vector<EvalCell> out;
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    const int target = targets[ti];
    const auto parents = bn.parents(target);
    for (std::size_t ni = 0; ni < config.n_test.size(); ++ni) {
      const int n = config.n_test[ni];
      const Rng cell = rng.split(static_cast<std::uint64_t>(target)).split(static_cast<std::uint64_t>(n));
      std::vector<char> correct(static_cast<std::size_t>(config.contexts) * static_cast<std::size_t>(methods), 0);
      parallel_for(config.contexts, [&](int c) {
        Rng r = cell.split(static_cast<std::uint64_t>(c));
        const Context ctx = sample_context(bn, n, r);
        const Observation values = sample_observation(bn, r);
        const QueryState q = QueryState::autoregressive(values, target);
        const int label = values[static_cast<std::size_t>(target)];
        auto fallback = [&](EstimateResult e) -> std::optional<Distribution> {
          if (!e.dist && config.marginal_fallback) return empirical_marginal(ctx, target);
          return e.dist;
        };
        std::vector<std::optional<Distribution>> preds;
        preds.reserve(static_cast<std::size_t>(methods));
        preds.emplace_back(exact_conditional(bn, target, values));
        preds.push_back(fallback(mle_estimate(ctx, q, parents)));
        preds.push_back(fallback(naive_estimate(ctx, q)));
        for (const auto& p : extra) preds.push_back(p.predict(ctx, q));
        for (int k = 0; k < methods; ++k) {
          const auto& p = preds[static_cast<std::size_t>(k)];
          correct[static_cast<std::size_t>(c) * methods + k] = p && argmax(*p) == label;
        }
      });
      for (int k = 0; k < methods; ++k) {
        int hits = 0;
        for (int c = 0; c < config.contexts; ++c) hits += correct[static_cast<std::size_t>(c) * methods + k];
        out.push_back({target, n, names[static_cast<std::size_t>(k)], static_cast<double>(hits) / config.contexts});
      }
    }
  }
  return out;
}

template TrainResult<float> train<float>(const TrainConfig&, const LogCallback&);
template TrainResult<double> train<double>(const TrainConfig&, const LogCallback&);
template Predictor trained_predictor<float>(const TrainableModel<float>&);
template Predictor trained_predictor<double>(const TrainableModel<double>&);

}  // namespace bicl::training
