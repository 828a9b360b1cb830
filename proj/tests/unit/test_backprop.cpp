#include <omp.h>

#include <cmath>
#include <vector>

#include "bicl/training/backprop.hpp"
#include "bicl/training/data.hpp"
#include "doctest.h"

using namespace bicl;
using namespace bicl::training;

namespace {

struct Fixture {
  TrainableModel<double> model;
  Batch<double> batch;
};

Fixture tiny(int layers, LayerNormPlacement ln, bool scale, int n_ctx = 6) {
  ModelConfig mc;
  mc.num_vars = 3;
  mc.num_categories = 2;
  mc.layers = layers;
  mc.heads = 2;
  mc.hidden = 8;
  mc.ffn_mult = 2;
  mc.ln_placement = ln;
  mc.scale_scores = scale;
  Fixture f{TrainableModel<double>(mc), {}};
  Rng rng(7);
  f.model.initialize(rng);
  // Nonzero readout and layer-norm parameters so every path carries gradient.
  for (const auto* name : {"w_out", "b_out"}) {
    const auto& s = f.model.layout().slot(name);
    for (std::size_t i = 0; i < s.size(); ++i) f.model.params()[s.offset + i] = rng.uniform(-0.5, 0.5);
  }
  for (const auto& s : f.model.layout().slots())
    if (s.name.find(".ln.") != std::string::npos || s.name.find(".b") != std::string::npos || s.name == "b_in")
      for (std::size_t i = 0; i < s.size(); ++i) f.model.params()[s.offset + i] += rng.uniform(-0.3, 0.3);
  DataSpec spec{StructureSpec::chain(3), 2, n_ctx, ContextVisibility::All};
  generate_batch<double>(spec, 3, 3, Rng(11), f.batch);
  return f;
}

double loss_at(const Fixture& f) {
  const Matrix<double> logits = forward_logits<double>(f.model, f.batch.inputs);
  return cross_entropy<double>(logits.cref(), f.batch.labels);
}

// Central differences with step 1e-4 against the analytic gradient.
void check_all_gradients(Fixture& f) {
  std::vector<double> grads;
  loss_and_gradients<double>(f.model, f.batch.inputs, f.batch.labels, grads);
  auto& p = f.model.params();
  const double h = 1e-4;
  int checked = 0;
  for (const auto& slot : f.model.layout().slots()) {
    for (std::size_t i = 0; i < slot.size(); ++i) {
      const std::size_t k = slot.offset + i;
      const double keep = p[k];
      p[k] = keep + h;
      const double up = loss_at(f);
      p[k] = keep - h;
      const double down = loss_at(f);
      p[k] = keep;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grads[k];
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      INFO(slot.name << "[" << i << "] analytic " << analytic << " numeric " << numeric);
      CHECK(std::abs(numeric - analytic) / scale <= 1e-4);
      ++checked;
    }
  }
  CHECK(checked == static_cast<int>(p.size()));
}

}  // namespace

TEST_CASE("analytic gradients match central differences, one post-norm layer") {
  Fixture f = tiny(1, LayerNormPlacement::Post, false);
  check_all_gradients(f);
}

TEST_CASE("analytic gradients match central differences, two layers") {
  Fixture f = tiny(2, LayerNormPlacement::Post, false);
  check_all_gradients(f);
}

TEST_CASE("analytic gradients match central differences, pre-norm with scaled scores") {
  Fixture f = tiny(2, LayerNormPlacement::Pre, true);
  check_all_gradients(f);
}

TEST_CASE("masked head parameters receive exactly zero gradient") {
  Fixture f = tiny(2, LayerNormPlacement::Post, false);
  f.model.mask_head(0, 1);
  std::vector<double> grads;
  loss_and_gradients<double>(f.model, f.batch.inputs, f.batch.labels, grads);
  const int h = f.model.config().hidden, hd = h / f.model.config().heads;
  const auto& lay = f.model.layout().layers[0];
  double masked = 0.0, live = 0.0;
  for (std::size_t off : {lay.wq, lay.wk, lay.wv})
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < h; ++c) {
        const double g = std::abs(grads[off + static_cast<std::size_t>(r * h + c)]);
        (r >= hd ? masked : live) += g;
      }
  for (int r = 0; r < h; ++r)
    for (int c = hd; c < h; ++c) masked += std::abs(grads[lay.wo + static_cast<std::size_t>(r * h + c)]);
  CHECK(masked == 0.0);
  CHECK(live > 0.0);
}

TEST_CASE("gradient sum is independent of the thread count") {
  Fixture f = tiny(2, LayerNormPlacement::Post, false, 12);
  std::vector<double> g1, g4;
  omp_set_num_threads(1);
  const double l1 = loss_and_gradients<double>(f.model, f.batch.inputs, f.batch.labels, g1);
  omp_set_num_threads(4);
  const double l4 = loss_and_gradients<double>(f.model, f.batch.inputs, f.batch.labels, g4);
  omp_set_num_threads(1);
  CHECK(l1 == l4);
  CHECK(g1 == g4);
}

TEST_CASE("zero readout gives uniform predictions and loss ln d") {
  Fixture f = tiny(2, LayerNormPlacement::Post, false);
  const auto& w = f.model.layout().slot("w_out");
  const auto& b = f.model.layout().slot("b_out");
  std::fill_n(f.model.params().begin() + static_cast<std::ptrdiff_t>(w.offset), w.size(), 0.0);
  std::fill_n(f.model.params().begin() + static_cast<std::ptrdiff_t>(b.offset), b.size(), 0.0);
  const Matrix<double> logits = forward_logits<double>(f.model, f.batch.inputs);
  for (double v : logits.values()) CHECK(v == 0.0);
  CHECK(loss_at(f) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}
