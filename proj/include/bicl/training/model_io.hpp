#pragma once

#include <string>
#include <variant>

#include "bicl/training/model.hpp"

namespace bicl::training {

/// Binary layout (little-endian):
///   magic "BICLMDL\0", u32 version, u32 precision (4 or 8 bytes per value),
///   i32 x 8 config (M, d, layers, heads, hidden, ffn_mult, ln_placement,
///   scale_scores), i32 x layers*heads head mask,
///   u32 tensor count, then per tensor: u32 name length, name bytes,
///   i32 rows, i32 cols, row-major values.
inline constexpr std::uint32_t kModelFormatVersion = 1;

template <class T>
void save_model(const TrainableModel<T>& model, const std::string& path);

using AnyModel = std::variant<TrainableModel<float>, TrainableModel<double>>;

/// Throws std::runtime_error on I/O errors or a malformed file.
AnyModel load_model(const std::string& path);

}  // namespace bicl::training
