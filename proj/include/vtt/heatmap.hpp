#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vtt/encoder.hpp"

namespace vtt {

/// Attention of one observation: per layer, [heads x R x R] row-stochastic.
struct AttentionRecord {
  TokenLayout layout;
  int heads = 0;
  std::vector<std::vector<double>> layers;

  int tokens() const { return layout.total(); }
  /// Throws ValidationError if a row is off by more than `tol` from summing to 1.
  void validate(double tol = 1e-6) const;

  template <class T>
  static AttentionRecord from_output(const EncoderOutput<T>& out, const TokenLayout& layout, int sample);
};

enum class LayerSelect { kFinal, kMean };

/// [R x R] mean over heads of the final layer, or of every layer.
std::vector<double> average_heads(const AttentionRecord& rec, LayerSelect select = LayerSelect::kFinal);

/// Attention received by each image token (column mass over all query rows),
/// on the patch grid, min-max scaled to [0, 1]. A constant grid maps to zeros.
struct AttentionGrid {
  int side = 0;
  std::vector<double> values;  // row-major side x side
};
AttentionGrid image_attention_map(const std::vector<double>& avg, const TokenLayout& layout);

struct ModalityProportion {
  double visual = 0;
  double tactile = 0;
};
/// Column mass over image vs tactile tokens, renormalized over those two
/// groups only. Throws ValidationError when both are zero.
ModalityProportion modality_proportion(const std::vector<double>& avg, const TokenLayout& layout);

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;
};

/// Nearest-neighbour upsample of the grid and out = (1 - g/2) img + (g/2) red,
/// quantized to 8 bits. `image` is [hw x hw x 3] in [0, 1].
RgbImage blend_overlay(const std::vector<float>& image, int hw, const AttentionGrid& grid);

void write_ppm(const std::string& path, const RgbImage& img);
RgbImage read_ppm(const std::string& path);

void overlay_export(const std::vector<float>& image, int hw, const AttentionGrid& grid, const std::string& path);

/// `t,visual,tactile` with 6 decimals.
void write_proportion_csv(const std::string& path, const std::vector<ModalityProportion>& series);

}  // namespace vtt
