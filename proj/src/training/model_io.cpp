#include "bicl/training/model_io.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bicl::training {

namespace {

constexpr std::array<char, 8> kMagic{'B', 'I', 'C', 'L', 'M', 'D', 'L', '\0'};

template <class V>
void put(std::ostream& o, V v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class V>
V get(std::istream& in) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("model file truncated");
  return v;
}

template <class T>
AnyModel read_body(std::istream& in, const ModelConfig& cfg, const std::vector<int>& mask) {
  TrainableModel<T> model(cfg);
  for (int l = 0; l < cfg.layers; ++l)
    for (int k = 0; k < cfg.heads; ++k)
      if (!mask[static_cast<std::size_t>(l * cfg.heads + k)]) model.mask_head(l, k);
  const auto count = get<std::uint32_t>(in);
  if (count != model.layout().slots().size()) throw std::runtime_error("model file: tensor count mismatch");
  for (const auto& slot : model.layout().slots()) {
    const auto len = get<std::uint32_t>(in);
    if (len > 1024) throw std::runtime_error("model file: bad tensor name");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw std::runtime_error("model file truncated");
    const int rows = get<std::int32_t>(in), cols = get<std::int32_t>(in);
    if (name != slot.name || rows != slot.rows || cols != slot.cols)
      throw std::runtime_error("model file: unexpected tensor '" + name + "'");
    auto* dst = model.params().data() + slot.offset;
    if (!in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(slot.size() * sizeof(T))))
      throw std::runtime_error("model file truncated");
  }
  return model;
}

}  // namespace

template <class T>
void save_model(const TrainableModel<T>& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const ModelConfig& c = model.config();
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kModelFormatVersion);
  put<std::uint32_t>(out, sizeof(T));
  for (int v : {c.num_vars, c.num_categories, c.layers, c.heads, c.hidden, c.ffn_mult,
                c.ln_placement == LayerNormPlacement::Pre ? 1 : 0, c.scale_scores ? 1 : 0})
    put<std::int32_t>(out, v);
  for (int l = 0; l < c.layers; ++l)
    for (int k = 0; k < c.heads; ++k) put<std::int32_t>(out, model.head_active(l, k) ? 1 : 0);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.layout().slots().size()));
  for (const auto& slot : model.layout().slots()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(slot.name.size()));
    out.write(slot.name.data(), static_cast<std::streamsize>(slot.name.size()));
    put<std::int32_t>(out, slot.rows);
    put<std::int32_t>(out, slot.cols);
    out.write(reinterpret_cast<const char*>(model.params().data() + slot.offset),
              static_cast<std::streamsize>(slot.size() * sizeof(T)));
  }
  if (!out) throw std::runtime_error("error writing " + path);
}

AnyModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw std::runtime_error(path + ": not a model file");
  if (get<std::uint32_t>(in) != kModelFormatVersion) throw std::runtime_error(path + ": unsupported version");
  const auto width = get<std::uint32_t>(in);
  ModelConfig c;
  c.num_vars = get<std::int32_t>(in);
  c.num_categories = get<std::int32_t>(in);
  c.layers = get<std::int32_t>(in);
  c.heads = get<std::int32_t>(in);
  c.hidden = get<std::int32_t>(in);
  c.ffn_mult = get<std::int32_t>(in);
  c.ln_placement = get<std::int32_t>(in) ? LayerNormPlacement::Pre : LayerNormPlacement::Post;
  c.scale_scores = get<std::int32_t>(in) != 0;
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": bad model config (" + e.what() + ")");
  }
  if (c.layers > 1024 || c.heads > 1024) throw std::runtime_error(path + ": bad model config");
  std::vector<int> mask(static_cast<std::size_t>(c.layers * c.heads));
  for (int& m : mask) m = get<std::int32_t>(in);
  if (width == 4) return read_body<float>(in, c, mask);
  if (width == 8) return read_body<double>(in, c, mask);
  throw std::runtime_error(path + ": unsupported precision");
}

template void save_model<float>(const TrainableModel<float>&, const std::string&);
template void save_model<double>(const TrainableModel<double>&, const std::string&);

}  // namespace bicl::training
