#include "bicl/harness/cli.hpp"

#include <omp.h>

#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "bicl/construction.hpp"
#include "bicl/encoding.hpp"
#include "bicl/errors.hpp"
#include "bicl/generator.hpp"
#include "bicl/harness/experiments.hpp"
#include "bicl/keyvalue.hpp"
#include "bicl/training/model_io.hpp"

namespace bicl::harness {

namespace {

struct Globals {
  std::uint64_t seed = 1;
  bool seed_set = false;
  int threads = 0;
  std::string precision;
  std::string out;
  std::string config;
  bool timing = false;
  bool quiet = false;
};

/// String-valued flags forwarded to ExperimentConfig::set / TrainConfig::set.
struct Forwarded {
  std::map<std::string, std::string> values;
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option("--" + flag, values[key], help);
  }
  template <class Cfg>
  void apply(Cfg& cfg) const {
    for (const auto& [k, v] : values)
      if (!v.empty()) cfg.set(k, v);
  }
};

std::string stem_path(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  p.replace_extension();
  return p.string() + suffix;
}

EmptyMatchPolicy parse_policy(const std::string& s) {
  if (s == "abort") return EmptyMatchPolicy::Abort;
  if (s == "marginal") return EmptyMatchPolicy::NaiveMarginal;
  if (s == "uniform") return EmptyMatchPolicy::Uniform;
  throw ConfigError("policy: expected abort, marginal or uniform, got '" + s + "'");
}

void add_sweep_flags(CLI::App* app, Forwarded& fw) {
  fw.add(app, "structure", "structure", "chain, tree, general (comma list)");
  fw.add(app, "M", "M", "number of variables (0 = canonical)");
  fw.add(app, "d", "d", "categories (comma list)");
  fw.add(app, "seeds", "seeds", "seed list (overrides --seed)");
  fw.add(app, "mask-gain", "mask_gain", "parent-selector mask gain");
}

void add_eval_flags(CLI::App* app, Forwarded& fw) {
  fw.add(app, "ntest", "n_test", "N_test sweep, e.g. 5,10,20,50,100");
  fw.add(app, "contexts", "contexts", "contexts per (target, N_test) cell");
  fw.add(app, "targets", "targets", "target variables (default all)");
}

void add_train_flags(CLI::App* app, Forwarded& fw, const std::string& prefix) {
  fw.add(app, "steps", prefix + "steps", "training steps");
  fw.add(app, "batch", prefix + "batch_size", "batch size");
  fw.add(app, "lr", prefix + "learning_rate", "learning rate");
  fw.add(app, "hidden", prefix + "hidden", "hidden width");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian-network in-context learning toolkit", "bicl"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option_function<std::uint64_t>(
         "--seed", [&](std::uint64_t s) { g.seed = s, g.seed_set = true; }, "root seed (default 1)");
  app.add_option("--threads", g.threads, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
  app.add_option("--precision", g.precision, "training precision: f32 or f64");
  app.add_option("--out", g.out, "output path");
  app.add_option("--config", g.config, "flat key = value config file");
  app.add_flag("--timing", g.timing, "record wall time (makes output non-reproducible)");
  app.add_flag("--quiet", g.quiet, "suppress progress output");

  // gen
  auto* gen = app.add_subcommand("gen", "random Bayesian network (JSON), optionally with a context CSV");
  std::string gen_structure = "chain";
  int gen_m = 0, gen_d = 2, gen_n = 0;
  std::string gen_context_out;
  gen->add_option("--structure", gen_structure, "chain, tree or general");
  gen->add_option("--M", gen_m, "number of variables (0 = canonical)");
  gen->add_option("--d", gen_d, "categories");
  gen->add_option("--context", gen_n, "also sample a context of this size");
  gen->add_option("--context-out", gen_context_out, "context CSV path (default <out>.context.csv)");

  // encode
  auto* enc = app.add_subcommand("encode", "encode a context and query as the transformer input matrix");
  std::string enc_context, enc_query;
  int enc_d = 2, enc_target = 0;
  bool enc_simple = false;
  enc->add_option("--context", enc_context, "context CSV")->required();
  enc->add_option("--d", enc_d, "categories");
  enc->add_option("--target", enc_target, "target variable");
  enc->add_option("--query", enc_query, "values of the variables before the target, comma separated");
  enc->add_flag("--simple", enc_simple, "training layout instead of the constructive layout");

  // verify
  auto* ver = app.add_subcommand("verify", "check the constructed transformer against the MLE");
  Forwarded ver_fw;
  add_sweep_flags(ver, ver_fw);
  ver_fw.add(ver, "N", "N", "context sizes (comma list)");
  ver_fw.add(ver, "eps", "epsilon", "epsilon list");
  ver_fw.add(ver, "trials", "trials", "trials with nonempty match set per cell");

  // sample
  auto* smp = app.add_subcommand("sample", "generate sequences autoregressively from a context");
  std::string smp_bn, smp_context, smp_model = "constructed", smp_policy = "marginal";
  int smp_n = 100, smp_count = 100;
  double smp_eps = 1e-3;
  smp->add_option("--bn", smp_bn, "network JSON")->required();
  smp->add_option("--context", smp_context, "context CSV (default: sample one from the network)");
  smp->add_option("--n", smp_n, "context size when sampling");
  smp->add_option("--count", smp_count, "number of sequences");
  smp->add_option("--model", smp_model, "constructed, mle or naive");
  smp->add_option("--eps", smp_eps, "epsilon of the constructed model");
  smp->add_option("--policy", smp_policy, "empty match set: abort, marginal or uniform");

  // compare
  auto* cmp = app.add_subcommand("compare", "accuracy of constructed, mle, naive and optimal predictors");
  Forwarded cmp_fw;
  std::string cmp_model;
  add_sweep_flags(cmp, cmp_fw);
  add_eval_flags(cmp, cmp_fw);
  cmp_fw.add(cmp, "eps", "epsilon", "epsilon of the constructed model");
  cmp->add_option("--model", cmp_model, "also evaluate a trained model file");

  // train
  auto* trn = app.add_subcommand("train", "train a transformer on random networks");
  Forwarded trn_fw;
  std::string trn_log, trn_preset;
  trn->add_option("--preset", trn_preset, "desk, paper-chain, paper-tree or paper-general");
  trn_fw.add(trn, "structure", "structure", "chain, tree or general");
  trn_fw.add(trn, "M", "M", "number of variables (0 = canonical)");
  trn_fw.add(trn, "d", "d", "categories");
  trn_fw.add(trn, "N", "N", "training context size");
  add_train_flags(trn, trn_fw, "");
  trn->add_option("--log", trn_log, "log CSV path (default <out>.log.csv)");

  // eval
  auto* evl = app.add_subcommand("eval", "evaluate a trained model against the oracles");
  Forwarded evl_fw;
  std::string evl_model, evl_bn;
  evl->add_option("--model", evl_model, "model file")->required();
  evl->add_option("--bn", evl_bn, "network JSON")->required();
  evl_fw.add(evl, "seeds", "seeds", "seed list (overrides --seed)");
  add_eval_flags(evl, evl_fw);

  // generalize
  auto* gnz = app.add_subcommand("generalize", "train across N_train and evaluate across N_test");
  Forwarded gnz_fw;
  add_sweep_flags(gnz, gnz_fw);
  add_eval_flags(gnz, gnz_fw);
  gnz_fw.add(gnz, "ntrain", "n_train", "N_train sweep");
  add_train_flags(gnz, gnz_fw, "train.");

  // ablate
  auto* abl = app.add_subcommand("ablate", "train across layer and head counts");
  Forwarded abl_fw;
  add_sweep_flags(abl, abl_fw);
  add_eval_flags(abl, abl_fw);
  abl_fw.add(abl, "layers", "layers", "layer counts");
  abl_fw.add(abl, "heads", "heads", "head counts");
  add_train_flags(abl, abl_fw, "train.");

  // report
  auto* rep = app.add_subcommand("report", "merge record CSVs and write the summary");
  std::vector<std::string> rep_inputs;
  rep->add_option("--in", rep_inputs, "record CSV files")->required()->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (g.threads > 0) omp_set_num_threads(g.threads);
  const Progress progress = g.quiet ? Progress{} : Progress{[&err](const std::string& s) { err << s << '\n'; }};
  auto out_path = [&](const std::string& fallback) { return g.out.empty() ? fallback : g.out; };

  try {
    auto experiment = [&](ExperimentKind kind, const Forwarded& fw, const std::string& fallback_out) {
      ExperimentConfig cfg = ExperimentConfig::defaults(kind);
      cfg.seeds = {g.seed};
      cfg.train.seed = g.seed;
      if (!g.config.empty()) cfg.apply_text(read_text_file(g.config));
      if (!g.precision.empty()) cfg.train.precision = training::parse_precision(g.precision);
      fw.apply(cfg);
      if (g.seed_set && fw.values.count("seeds") && fw.values.at("seeds").empty()) cfg.seeds = {g.seed};
      if (!g.out.empty()) cfg.output = g.out;
      else if (g.config.empty() || cfg.output == "results.csv") cfg.output = fallback_out;
      cfg.timing = g.timing;
      cfg.validate();
      return cfg;
    };

    if (gen->parsed()) {
      StructureSpec spec;
      try {
        spec = StructureSpec::parse(gen_structure, gen_m);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("structure: ") + e.what());
      }
      if (gen_d < 2 || gen_d > 9) throw ConfigError("d: must be in [2, 9]");
      Rng rng(g.seed);
      const BayesNet bn = random_bayesnet(spec, gen_d, rng);
      const std::string path = out_path("bn.json");
      write_text_file(path, to_json(bn) + "\n");
      out << path << '\n';
      if (gen_n > 0) {
        Rng crng = Rng(g.seed).split(kSampleStream);
        const Context ctx = sample_context(bn, gen_n, crng);
        const std::string cpath = gen_context_out.empty() ? stem_path(path, ".context.csv") : gen_context_out;
        write_text_file(cpath, context_to_csv(ctx));
        out << cpath << '\n';
      } else if (gen_n < 0) {
        throw ConfigError("context: must be >= 0");
      }
      return kExitOk;
    }

    if (enc->parsed()) {
      const Context ctx = context_from_csv(read_text_file(enc_context), enc_d);
      if (enc_target < 0 || enc_target >= ctx.num_vars) throw ConfigError("target: out of range");
      std::vector<int> values(static_cast<std::size_t>(ctx.num_vars), 0);
      if (!enc_query.empty()) {
        const auto q = parse_int_list("query", enc_query);
        if (static_cast<int>(q.size()) != enc_target) throw ConfigError("query: expected one value per variable before the target");
        std::copy(q.begin(), q.end(), values.begin());
      } else if (enc_target > 0) {
        throw ConfigError("query: required when target > 0");
      }
      const QueryState query = QueryState::autoregressive(values, enc_target);
      try {
        query.validate(enc_d, true);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("query: ") + e.what());
      }
      MatrixD x;
      if (enc_simple) {
        const auto s = encode_simple<double>(ctx, query);
        x = s.data;
      } else {
        x = encode(ctx, query).data;
      }
      const std::string path = out_path("input.csv");
      write_text_file(path, matrix_to_csv(x.cref()));
      out << path << '\n';
      return kExitOk;
    }

    if (ver->parsed()) {
      const ExperimentConfig cfg = experiment(ExperimentKind::Verify, ver_fw, "verify.csv");
      const VerifyResult res = run_verify(cfg, progress);
      emit_report(res.records, cfg.output);
      write_text_file(stem_path(cfg.output, ".verify.json"), res.to_json());
      int skipped = 0;
      for (const auto& c : res.cells) skipped += c.skipped;
      out << (res.pass() ? "PASS" : "FAIL") << ": " << res.cells.size() << " cells, " << skipped
          << " skipped trials\n";
      return res.pass() ? kExitOk : kExitVerification;
    }

    if (smp->parsed()) {
      if (smp_count < 0) throw ConfigError("count: must be >= 0");
      auto bn = std::make_shared<const BayesNet>(load_bayesnet(smp_bn));
      Context ctx;
      if (!smp_context.empty()) {
        ctx = context_from_csv(read_text_file(smp_context), bn->num_categories());
        if (ctx.num_vars != bn->num_vars()) throw ConfigError("context: variable count does not match the network");
      } else {
        if (smp_n < 1) throw ConfigError("n: must be >= 1");
        Rng crng = Rng(g.seed).split(kSampleStream);
        ctx = sample_context(*bn, smp_n, crng);
      }
      if (!(smp_eps > 0.0 && smp_eps < 1.0)) throw ConfigError("eps: must be in (0, 1)");
      std::unique_ptr<SequenceModel> model;
      if (smp_model == "constructed")
        model = std::make_unique<ConstructedModel>(std::make_shared<const ConstructedTransformer>(
            bn, ctx.size(), ConstructionOptions{smp_eps, std::nullopt, 1.0}));
      else if (smp_model == "mle")
        model = std::make_unique<MleModel>(bn);
      else if (smp_model == "naive")
        model = std::make_unique<NaiveModel>(bn->num_vars(), bn->num_categories());
      else
        throw ConfigError("model: expected constructed, mle or naive");
      const auto seqs = batch_generate(*model, ctx, smp_count, Rng(g.seed), parse_policy(smp_policy));
      Context as_ctx{bn->num_vars(), bn->num_categories(), seqs, {}, 0};
      const std::string path = out_path("samples.csv");
      write_text_file(path, context_to_csv(as_ctx));
      out << path << '\n';
      return kExitOk;
    }

    if (cmp->parsed()) {
      const ExperimentConfig cfg = experiment(ExperimentKind::Compare, cmp_fw, "compare.csv");
      std::optional<training::AnyModel> model;
      if (!cmp_model.empty()) model = training::load_model(cmp_model);
      const auto records = run_compare(cfg, model ? &*model : nullptr, progress);
      emit_report(records, cfg.output);
      out << cfg.output << '\n';
      return kExitOk;
    }

    if (trn->parsed()) {
      training::TrainConfig tc = trn_preset.empty() ? training::TrainConfig{} : training::TrainConfig::preset(trn_preset);
      tc.seed = g.seed;
      if (!g.config.empty()) tc.apply_text(read_text_file(g.config));
      if (g.seed_set) tc.seed = g.seed;
      if (!g.precision.empty()) tc.precision = training::parse_precision(g.precision);
      trn_fw.apply(tc);
      tc.validate();
      const std::string path = out_path("model.bin");
      const std::string log_path = trn_log.empty() ? stem_path(path, ".log.csv") : trn_log;
      training::LogCallback on_log;
      if (progress)
        on_log = [&](const training::LogRow& r) {
          std::ostringstream o;
          o << "step " << r.step << " revealed " << r.revealed << " train_loss " << r.train_loss << " test_loss "
            << r.test_loss << " test_acc " << r.test_accuracy;
          progress(o.str());
        };
      auto finish = [&](const auto& result) {
        training::save_model(result.model, path);
        write_text_file(log_path, train_log_csv(result.log));
      };
      if (tc.precision == training::Precision::F64)
        finish(training::train<double>(tc, on_log));
      else
        finish(training::train<float>(tc, on_log));
      out << path << '\n' << log_path << '\n';
      return kExitOk;
    }

    if (evl->parsed()) {
      const ExperimentConfig cfg = experiment(ExperimentKind::Eval, evl_fw, "eval.csv");
      const auto model = training::load_model(evl_model);
      const BayesNet bn = load_bayesnet(evl_bn);
      const auto records = run_eval(cfg, model, bn, progress);
      emit_report(records, cfg.output);
      out << cfg.output << '\n';
      return kExitOk;
    }

    if (gnz->parsed()) {
      const ExperimentConfig cfg = experiment(ExperimentKind::Generalize, gnz_fw, "generalize.csv");
      const auto records = run_generalize(cfg, progress);
      emit_report(records, cfg.output);
      out << cfg.output << '\n';
      return kExitOk;
    }

    if (abl->parsed()) {
      const ExperimentConfig cfg = experiment(ExperimentKind::Ablate, abl_fw, "ablate.csv");
      const auto records = run_ablate(cfg, progress);
      emit_report(records, cfg.output);
      out << cfg.output << '\n';
      return kExitOk;
    }

    if (rep->parsed()) {
      std::vector<RunRecord> all;
      for (const auto& p : rep_inputs) {
        auto r = parse_records_csv(read_text_file(p));
        all.insert(all.end(), r.begin(), r.end());
      }
      const std::string path = out_path("report.csv");
      emit_report(all, path);
      out << path << '\n';
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const VerificationFailure& e) {
    err << "verification failure: " << e.what() << '\n';
    return kExitVerification;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}

}  // namespace bicl::harness
