#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bicl/errors.hpp"
#include "bicl/training/backprop.hpp"
#include "bicl/training/data.hpp"
#include "bicl/training/model_io.hpp"
#include "bicl/training/optimizer.hpp"
#include "bicl/training/trainer.hpp"
#include "doctest.h"

using namespace bicl;
using namespace bicl::training;

namespace {

long double ce_oracle(std::span<const double> logits, int label) {
  long double mx = logits[0];
  for (double v : logits) mx = std::max<long double>(mx, v);
  long double z = 0;
  for (double v : logits) z += std::exp(static_cast<long double>(v) - mx);
  return std::log(z) + mx - logits[static_cast<std::size_t>(label)];
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.num_vars = 3;
  c.context_size = 10;
  c.steps = 12;
  c.batch_size = 8;
  c.layers = 1;
  c.heads = 2;
  c.hidden = 8;
  c.ffn_mult = 2;
  c.log_every = 4;
  c.test_examples = 16;
  c.precision = Precision::F64;
  return c;
}

}  // namespace

TEST_CASE("adamw single parameter step") {
  AdamW<double> opt(1, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
  std::vector<double> p{0.5};
  const std::vector<double> g{1.0};
  opt.step(p, g);
  // m_hat = 1, v_hat = 1 after bias correction.
  CHECK(p[0] == doctest::Approx(0.5 - 0.1 * (1.0 / (1.0 + 1e-8))).epsilon(1e-15));
  const double after_first = p[0];
  opt.step(p, g);
  const double m = 0.9 * 0.1 + 0.1, v = 0.999 * 0.001 + 0.001;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  CHECK(p[0] == doctest::Approx(after_first - 0.1 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-12));
  CHECK(opt.steps() == 2);
}

TEST_CASE("adamw decay only") {
  AdamW<double> opt(3, AdamWConfig{0.01, 0.9, 0.999, 1e-8, 0.5});
  std::vector<double> p{1.0, -2.0, 0.0};
  const std::vector<double> g(3, 0.0);
  opt.step(p, g);
  CHECK(p[0] == 1.0 - 0.01 * 0.5 * 1.0);
  CHECK(p[1] == -2.0 - 0.01 * 0.5 * -2.0);
  CHECK(p[2] == 0.0);
  AdamW<float> a(2, {}), b(2, {});
  std::vector<float> pa{0.3f, -0.1f}, pb = pa;
  const std::vector<float> ga{0.2f, 0.7f};
  for (int i = 0; i < 5; ++i) {
    a.step(pa, ga);
    b.step(pb, ga);
  }
  CHECK(pa == pb);
}

TEST_CASE("cross entropy") {
  Matrix<double> uniform(1, 2);
  CHECK(cross_entropy<double>(uniform.cref(), std::vector<int>{0}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  Matrix<double> gap(1, 2);
  gap(0, 1) = 20.0;
  CHECK(cross_entropy<double>(gap.cref(), std::vector<int>{1}) < 1e-8);
  Rng rng(1);
  Matrix<double> logits(6, 4);
  for (double& v : logits.values()) v = rng.uniform(-8.0, 8.0);
  const std::vector<int> labels{0, 3, 2, 1, 1, 0};
  long double want = 0;
  for (int b = 0; b < 6; ++b) want += ce_oracle(std::span<const double>(logits.row(b), 4), labels[static_cast<std::size_t>(b)]);
  want /= 6;
  Matrix<double> grad;
  CHECK(std::abs(cross_entropy<double>(logits.cref(), labels, &grad) - static_cast<double>(want)) <= 1e-10);
  for (int b = 0; b < 6; ++b) {
    const auto p = softmax_probs<double>(std::span<const double>(logits.row(b), 4));
    for (int j = 0; j < 4; ++j)
      CHECK(grad(b, j) == doctest::Approx((p[static_cast<std::size_t>(j)] - (labels[static_cast<std::size_t>(b)] == j)) / 6.0));
  }
}

TEST_CASE("curriculum") {
  Curriculum c(4, 2, 0.5, 3);
  CHECK(c.revealed() == 2);
  CHECK(!c.observe(0.1));
  CHECK(!c.observe(0.1));
  CHECK(c.observe(0.1));
  CHECK(c.revealed() == 3);
  // Window was cleared: two more low losses are not enough.
  CHECK(!c.observe(0.0));
  CHECK(!c.observe(0.0));
  CHECK(!c.observe(2.0));
  CHECK(!c.observe(0.0));
  CHECK(!c.observe(0.0));
  CHECK(c.observe(0.0));
  CHECK(c.revealed() == 4);
  CHECK(c.complete());
  CHECK(!c.observe(0.0));
  Curriculum off(4, 2, 0.5, 3, false);
  CHECK(off.revealed() == 4);
  Curriculum small(1, 2, 0.5, 3);
  CHECK(small.revealed() == 1);
}

TEST_CASE("training examples") {
  DataSpec spec{StructureSpec::chain(4), 2, 12, ContextVisibility::Revealed};
  Batch<double> batch;
  generate_batch(spec, 2, 40, Rng(2), batch);
  REQUIRE(batch.inputs.size() == 40);
  for (std::size_t b = 0; b < 40; ++b) {
    const auto& x = batch.inputs[b];
    const int t = batch.targets[b];
    CHECK(x.rows() == 12);
    CHECK(x.cols() == 13);
    CHECK(t < 2);
    CHECK((batch.labels[b] == 0 || batch.labels[b] == 1));
    for (int c = 0; c < 12; ++c) {
      for (int r = 4; r < 8; ++r) CHECK(x(r, c) == 0.0);  // hidden variables
      for (int r = 8; r < 12; ++r) CHECK(x(r, c) == 0.0);
      CHECK(x(0, c) + x(1, c) == 1.0);
    }
    for (int r = 8; r < 12; ++r) CHECK(x(r, 12) == (r == 8 + t ? 1.0 : 0.0));
    for (int r = 2 * t; r < 8; ++r) CHECK(x(r, 12) == 0.0);
  }
  Batch<double> again;
  generate_batch(spec, 2, 40, Rng(2), again);
  CHECK(again.labels == batch.labels);
  CHECK(again.inputs == batch.inputs);
  Batch<double> all;
  generate_batch(DataSpec{StructureSpec::chain(4), 2, 12, ContextVisibility::All}, 4, 10, Rng(3), all);
  for (const auto& x : all.inputs)
    for (int c = 0; c < 12; ++c) CHECK(x(6, c) + x(7, c) == 1.0);
}

TEST_CASE("batch permutation permutes logits") {
  ModelConfig mc{3, 2, 2, 2, 8, 2};
  TrainableModel<double> model(mc);
  Rng rng(4);
  model.initialize(rng);
  const auto& w = model.layout().slot("w_out");
  for (std::size_t i = 0; i < w.size(); ++i) model.params()[w.offset + i] = rng.uniform(-1, 1);
  Batch<double> batch;
  generate_batch(DataSpec{StructureSpec::chain(3), 2, 6, ContextVisibility::All}, 3, 5, Rng(5), batch);
  const auto a = forward_logits<double>(model, batch.inputs);
  std::vector<Matrix<double>> rev(batch.inputs.rbegin(), batch.inputs.rend());
  const auto b = forward_logits<double>(model, rev);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 2; ++j) CHECK(a(i, j) == b(4 - i, j));
}

TEST_CASE("directional derivative probe") {
  ModelConfig mc{3, 2, 2, 2, 8, 2};
  TrainableModel<double> model(mc);
  Rng rng(6);
  model.initialize(rng);
  for (double& v : model.params()) v += rng.uniform(-0.2, 0.2);
  Batch<double> batch;
  generate_batch(DataSpec{StructureSpec::chain(3), 2, 6, ContextVisibility::All}, 3, 4, Rng(7), batch);
  std::vector<double> grads(model.params().size(), 0.0);
  const double base = loss_and_gradients<double>(model, batch.inputs, batch.labels, grads);
  std::vector<double> dir(grads.size());
  double slope = 0.0;
  for (std::size_t i = 0; i < dir.size(); ++i) slope += (dir[i] = rng.uniform(-1, 1)) * grads[i];
  for (double h : {1e-3, 1e-4}) {
    TrainableModel<double> moved = model;
    for (std::size_t i = 0; i < dir.size(); ++i) moved.params()[i] += h * dir[i];
    std::vector<double> g2(grads.size(), 0.0);
    const double after = loss_and_gradients<double>(moved, batch.inputs, batch.labels, g2);
    CHECK(std::abs(after - base - h * slope) <= 50.0 * h * h * (1.0 + std::abs(slope)));
  }
}

TEST_CASE("model file round trip") {
  ModelConfig mc{4, 3, 2, 2, 8, 2};
  mc.ln_placement = LayerNormPlacement::Pre;
  TrainableModel<float> model(mc);
  Rng rng(8);
  model.initialize(rng);
  model.mask_head(1, 0);
  const auto path = (std::filesystem::temp_directory_path() / "bicl_model_rt.bin").string();
  save_model(model, path);
  const AnyModel loaded = load_model(path);
  REQUIRE(std::holds_alternative<TrainableModel<float>>(loaded));
  const auto& m = std::get<TrainableModel<float>>(loaded);
  CHECK(m.config() == mc);
  CHECK(m.params() == model.params());
  CHECK(!m.head_active(1, 0));
  CHECK(m.head_active(0, 0));
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "garbage";
  }
  CHECK_THROWS(load_model(path));
  std::filesystem::remove(path);
  CHECK_THROWS(load_model(path));
}

TEST_CASE("training config parsing") {
  TrainConfig c;
  c.set("M", "7");
  c.set("lr", "0.5");
  c.set("structure", "tree");
  c.set("precision", "f64");
  CHECK(c.num_vars == 7);
  CHECK(c.learning_rate == 0.5);
  CHECK(c.precision == Precision::F64);
  CHECK_THROWS_AS(c.set("nonsense", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("structure", "ring"), ConfigError);
  CHECK_THROWS_AS(c.set("steps", "abc"), ConfigError);
  CHECK_THROWS_AS(c.set("precision", "f16"), ConfigError);
  TrainConfig r;
  r.apply_text(c.to_text());
  CHECK(r.to_text() == c.to_text());
  TrainConfig bad;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.steps = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  const auto paper = TrainConfig::preset("paper-chain");
  CHECK(paper.layers == 6);
  CHECK(paper.heads == 8);
  CHECK(paper.hidden == 256);
  CHECK_THROWS_AS(TrainConfig::preset("nope"), ConfigError);
}

TEST_CASE("short training run is deterministic and starts near ln d") {
  const TrainConfig cfg = tiny_config();
  const auto a = train<double>(cfg);
  const auto b = train<double>(cfg);
  CHECK(a.model.params() == b.model.params());
  REQUIRE(a.log.size() == b.log.size());
  REQUIRE(!a.log.empty());
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].test_loss == b.log[i].test_loss);
  CHECK(std::abs(a.log.front().train_loss - std::log(2.0)) <= 0.05);
  for (const auto& row : a.log) CHECK(std::isfinite(row.train_loss));
  TrainConfig diverge = cfg;
  diverge.learning_rate = 1e30;
  diverge.weight_decay = 0.0;
  diverge.steps = 40;
  diverge.precision = Precision::F32;
  CHECK_THROWS_AS(train<float>(diverge), NumericError);
}

TEST_CASE("evaluation with the exact predictor") {
  Rng rng(9);
  const BayesNet bn = random_bayesnet(StructureSpec::general(), 2, rng);
  const NamedPredictor exact{"exact", [&bn](const Context&, const QueryState& q) -> std::optional<Distribution> {
                               return exact_conditional(bn, q.target, q.values_or_missing());
                             }};
  EvalConfig ec;
  ec.n_test = {5, 20};
  ec.contexts = 100;
  ec.targets = {0, 3};
  const auto cells = evaluate(bn, ec, std::span<const NamedPredictor>(&exact, 1), Rng(10));
  CHECK(cells.size() == 2 * 2 * 4);
  for (const auto& c : cells) {
    if (c.method != "exact") continue;
    const auto it = std::find_if(cells.begin(), cells.end(), [&](const EvalCell& o) {
      return o.method == "optimal" && o.target == c.target && o.n_test == c.n_test;
    });
    REQUIRE(it != cells.end());
    CHECK(it->accuracy == c.accuracy);
  }
  for (const auto& c : cells)
    if (c.method == "naive" && c.target == 0) {
      const auto m = std::find_if(cells.begin(), cells.end(), [&](const EvalCell& o) {
        return o.method == "mle" && o.target == 0 && o.n_test == c.n_test;
      });
      CHECK(m->accuracy == c.accuracy);
    }
}
