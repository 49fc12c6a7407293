#include "vtt/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace vtt {

namespace {

void require_square(const std::vector<double>& avg, const TokenLayout& layout) {
  const auto r = static_cast<std::size_t>(layout.total());
  if (avg.size() != r * r) {
    throw ShapeError("heatmap has " + std::to_string(avg.size()) + " entries, layout needs " + std::to_string(r * r));
  }
}

double column_mass(const std::vector<double>& avg, int tokens, int col) {
  double s = 0;
  for (int i = 0; i < tokens; ++i) s += avg[static_cast<std::size_t>(i) * tokens + col];
  return s;
}

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

void AttentionRecord::validate(double tol) const {
  const int r = tokens();
  const std::size_t per_layer = static_cast<std::size_t>(heads) * r * r;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].size() != per_layer) throw ShapeError("attention record layer " + std::to_string(l) + " has wrong size");
    for (int row = 0; row < heads * r; ++row) {
      double s = 0;
      for (int j = 0; j < r; ++j) s += layers[l][static_cast<std::size_t>(row) * r + j];
      if (std::abs(s - 1.0) > tol) {
        throw ValidationError("attention row " + std::to_string(row) + " of layer " + std::to_string(l) + " sums to " +
                              std::to_string(s));
      }
    }
  }
}

template <class T>
AttentionRecord AttentionRecord::from_output(const EncoderOutput<T>& out, const TokenLayout& layout, int sample) {
  AttentionRecord rec;
  rec.layout = layout;
  for (const auto& tr : out.layers) {
    if (!tr.weights) throw UsageError("encoder output carries no attention traces");
    const auto& w = *tr.weights;
    if (w.tokens != layout.total()) throw ShapeError("trace token count does not match the layout");
    if (sample < 0 || sample >= w.batch) throw ShapeError("sample index out of range");
    rec.heads = w.heads;
    std::vector<double> layer;
    layer.reserve(static_cast<std::size_t>(w.heads) * w.tokens * w.tokens);
    for (int h = 0; h < w.heads; ++h) {
      const T* p = w.head(sample, h);
      for (int k = 0; k < w.tokens * w.tokens; ++k) layer.push_back(static_cast<double>(p[k]));
    }
    rec.layers.push_back(std::move(layer));
  }
  return rec;
}

std::vector<double> average_heads(const AttentionRecord& rec, LayerSelect select) {
  if (rec.layers.empty() || rec.heads <= 0) throw ValidationError("attention record is empty");
  const std::size_t rr = static_cast<std::size_t>(rec.tokens()) * rec.tokens();
  std::vector<double> avg(rr, 0.0);
  const std::size_t first = select == LayerSelect::kFinal ? rec.layers.size() - 1 : 0;
  const double count = static_cast<double>((rec.layers.size() - first) * rec.heads);
  for (std::size_t l = first; l < rec.layers.size(); ++l) {
    for (int h = 0; h < rec.heads; ++h) {
      const double* p = rec.layers[l].data() + h * rr;
      for (std::size_t k = 0; k < rr; ++k) avg[k] += p[k];
    }
  }
  for (auto& v : avg) v /= count;
  return avg;
}

AttentionGrid image_attention_map(const std::vector<double>& avg, const TokenLayout& layout) {
  require_square(avg, layout);
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(layout.image))));
  if (side * side != layout.image) throw ShapeError("image token count is not a square grid");
  AttentionGrid g;
  g.side = side;
  g.values.resize(static_cast<std::size_t>(layout.image));
  for (int k = 0; k < layout.image; ++k) g.values[k] = column_mass(avg, layout.total(), layout.image_begin() + k);
  const auto [lo, hi] = std::minmax_element(g.values.begin(), g.values.end());
  const double min = *lo, range = *hi - *lo;
  for (auto& v : g.values) v = range > 0 ? (v - min) / range : 0.0;
  return g;
}

ModalityProportion modality_proportion(const std::vector<double>& avg, const TokenLayout& layout) {
  require_square(avg, layout);
  double visual = 0, tactile = 0;
  for (int k = 0; k < layout.image; ++k) visual += column_mass(avg, layout.total(), layout.image_begin() + k);
  for (int k = 0; k < layout.tactile; ++k) tactile += column_mass(avg, layout.total(), layout.tactile_begin() + k);
  const double total = visual + tactile;
  if (!(total > 0)) throw ValidationError("no attention mass on modality tokens");
  return {visual / total, tactile / total};
}

RgbImage blend_overlay(const std::vector<float>& image, int hw, const AttentionGrid& grid) {
  if (image.size() != static_cast<std::size_t>(hw) * hw * 3) throw ShapeError("overlay image size does not match hw");
  if (grid.side <= 0 || grid.values.size() != static_cast<std::size_t>(grid.side) * grid.side) {
    throw ShapeError("attention grid is malformed");
  }
  RgbImage out;
  out.width = out.height = hw;
  out.rgb.resize(image.size());
  for (int y = 0; y < hw; ++y) {
    const int gy = y * grid.side / hw;
    for (int x = 0; x < hw; ++x) {
      const int gx = x * grid.side / hw;
      const double g = std::clamp(grid.values[static_cast<std::size_t>(gy) * grid.side + gx], 0.0, 1.0);
      const std::size_t p = (static_cast<std::size_t>(y) * hw + x) * 3;
      for (int c = 0; c < 3; ++c) {
        const double red = c == 0 ? 1.0 : 0.0;
        out.rgb[p + c] = quantize((1.0 - 0.5 * g) * image[p + c] + 0.5 * g * red);
      }
    }
  }
  return out;
}

void write_ppm(const std::string& path, const RgbImage& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!f) throw IoError("failed writing " + path);
}

RgbImage read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string magic;
  int maxval = 0;
  RgbImage img;
  f >> magic >> img.width >> img.height >> maxval;
  if (magic != "P6" || maxval != 255 || img.width <= 0 || img.height <= 0) throw IoError(path + ": not an 8-bit P6 file");
  f.get();  // single whitespace before the raster
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  f.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.rgb.size())) throw IoError(path + ": truncated raster");
  return img;
}

void overlay_export(const std::vector<float>& image, int hw, const AttentionGrid& grid, const std::string& path) {
  write_ppm(path, blend_overlay(image, hw, grid));
}

void write_proportion_csv(const std::string& path, const std::vector<ModalityProportion>& series) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "t,visual,tactile\n";
  char line[96];
  for (std::size_t t = 0; t < series.size(); ++t) {
    std::snprintf(line, sizeof line, "%zu,%.6f,%.6f\n", t, series[t].visual, series[t].tactile);
    f << line;
  }
  if (!f) throw IoError("failed writing " + path);
}

template AttentionRecord AttentionRecord::from_output<float>(const EncoderOutput<float>&, const TokenLayout&, int);
template AttentionRecord AttentionRecord::from_output<double>(const EncoderOutput<double>&, const TokenLayout&, int);

}  // namespace vtt
