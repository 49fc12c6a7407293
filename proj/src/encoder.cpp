#include "vtt/encoder.hpp"

#include <cmath>
#include <string>

namespace vtt {

void VttConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("vtt config: " + m); };
  if (image_hw <= 0 || patch_px <= 0) fail("image_hw and patch_px must be positive");
  if (image_hw % patch_px != 0) {
    fail("image_hw " + std::to_string(image_hw) + " is not a multiple of patch_px " + std::to_string(patch_px));
  }
  if (d <= 1 || heads <= 0) fail("d must exceed 1 and heads must be positive");
  if (d % heads != 0) fail("d " + std::to_string(d) + " is not divisible by heads " + std::to_string(heads));
  if (layers < 0) fail("layers must be non-negative");
  if (compress_c <= 4) fail("compression divisor c must exceed 4, got " + std::to_string(compress_c));
  if (d % compress_c != 0) {
    fail("d " + std::to_string(d) + " is not divisible by c " + std::to_string(compress_c));
  }
  if (z_dim <= 0) fail("z_dim must be positive");
}

VttConfig VttConfig::full() {
  VttConfig c;
  c.image_hw = 84;
  c.patch_px = 14;
  c.d = 384;
  c.heads = 8;
  c.layers = 6;
  c.compress_c = 12;
  c.z_dim = 288;
  return c;
}

VttConfig VttConfig::desk() { return VttConfig{}; }

TokenLayout TokenLayout::from_config(const VttConfig& cfg) {
  TokenLayout l;
  l.embedding = cfg.embedding_tokens();
  l.contact_row = cfg.contact_token ? 0 : -1;
  l.align_row = cfg.align_token ? (cfg.contact_token ? 1 : 0) : -1;
  l.image = cfg.image_patches();
  l.tactile = VttConfig::tactile_patches();
  return l;
}

template <class T>
AttentionDecomposition<T> decompose_attention(std::span<const T> probs, int heads, std::span<const T> values,
                                              int width, const TokenLayout& layout) {
  const int R = layout.total();
  if (heads <= 0 || width % heads != 0) {
    throw ShapeError("decompose_attention: width " + std::to_string(width) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  if (probs.size() != static_cast<std::size_t>(heads) * R * R ||
      values.size() != static_cast<std::size_t>(R) * width) {
    throw ShapeError("decompose_attention: expected " + std::to_string(heads) + "x" + std::to_string(R) + "x" +
                     std::to_string(R) + " weights and " + std::to_string(R) + "x" + std::to_string(width) +
                     " values");
  }
  AttentionDecomposition<T> out;
  out.heads = heads;
  out.tokens = R;
  out.width = width;
  out.full.assign(probs.begin(), probs.end());
  out.self_out.assign(static_cast<std::size_t>(R) * width, T{0});
  out.cross_out.assign(static_cast<std::size_t>(R) * width, T{0});

  // cross iff one side is image and the other tactile
  auto is_cross = [&](int i, int j) {
    return (layout.is_image(i) && layout.is_tactile(j)) || (layout.is_tactile(i) && layout.is_image(j));
  };
  const int dv = width / heads;
  double ii = 0, tt = 0, it = 0, ti = 0;
  for (int h = 0; h < heads; ++h) {
    const T* S = probs.data() + static_cast<std::size_t>(h) * R * R;
    for (int i = 0; i < R; ++i) {
      for (int j = 0; j < R; ++j) {
        const T s = S[i * R + j];
        T* dst = (is_cross(i, j) ? out.cross_out.data() : out.self_out.data()) + static_cast<std::size_t>(i) * width +
                 h * dv;
        const T* v = values.data() + static_cast<std::size_t>(j) * width + h * dv;
        for (int c = 0; c < dv; ++c) dst[c] += s * v[c];
        if (layout.is_image(i) && layout.is_image(j)) ii += s;
        if (layout.is_tactile(i) && layout.is_tactile(j)) tt += s;
        if (layout.is_image(i) && layout.is_tactile(j)) it += s;
        if (layout.is_tactile(i) && layout.is_image(j)) ti += s;
      }
    }
  }
  const double I = layout.image, Tn = layout.tactile;
  out.image_self = ii / (heads * I * I);
  out.tactile_self = tt / (heads * Tn * Tn);
  out.image_from_tactile = it / (heads * I * Tn);
  out.tactile_from_image = ti / (heads * Tn * I);
  return out;
}

template <class T>
VttEncoder<T>::VttEncoder(const VttConfig& cfg, SeededRng& rng) : cfg_(cfg) {
  cfg_.validate();
  layout_ = TokenLayout::from_config(cfg_);
  const int d = cfg_.d;
  constexpr double kEmbedSd = 0.02;
  patch_proj_ = make_linear(params_, "vtt.patch_image", cfg_.patch_dim(), d, rng);
  tactile_proj_ = make_linear(params_, "vtt.patch_tactile", 3, d, rng);
  if (cfg_.contact_token) contact_embed_ = params_.add("vtt.x_contact", truncated_normal<T>({1, d}, kEmbedSd, rng));
  if (cfg_.align_token) align_embed_ = params_.add("vtt.x_align", truncated_normal<T>({1, d}, kEmbedSd, rng));
  position_embed_ = params_.add("vtt.x_position", truncated_normal<T>({layout_.total(), d}, kEmbedSd, rng));
  for (int n = 0; n < cfg_.layers; ++n) {
    const std::string p = "vtt.layer" + std::to_string(n);
    AttentionLayerParams<T> L;
    L.ln1_gain = params_.add(p + ".ln1.gain", Tensor<T>::full({1, d}, T{1}));
    L.ln1_bias = params_.add(p + ".ln1.bias", Tensor<T>::zeros({1, d}));
    L.query = make_mlp2(params_, p + ".query", d, d, d, rng, Activation::kGelu, Activation::kGelu);
    L.key = make_mlp2(params_, p + ".key", d, d, d, rng, Activation::kGelu, Activation::kGelu);
    L.value = make_mlp2(params_, p + ".value", d, d, d, rng, Activation::kGelu, Activation::kGelu);
    L.mix = make_linear(params_, p + ".mix", d, d, rng);
    L.ln2_gain = params_.add(p + ".ln2.gain", Tensor<T>::full({1, d}, T{1}));
    L.ln2_bias = params_.add(p + ".ln2.bias", Tensor<T>::zeros({1, d}));
    L.feed_forward = make_mlp2(params_, p + ".ff", d, d, d, rng, Activation::kGelu, Activation::kGelu);
    layers_.push_back(std::move(L));
  }
  if (cfg_.contact_token) contact_head_ = make_linear(params_, "vtt.contact_head", d, 1, rng);
  if (cfg_.align_token) align_head_ = make_linear(params_, "vtt.align_head", d, 1, rng);
  const int dc = cfg_.compressed_width();
  token_compress_ = make_mlp2(params_, "vtt.compress_token", d, dc, dc, rng);
  flat_compress_ = make_mlp2(params_, "vtt.compress_flat", layout_.total() * dc, cfg_.z_dim, cfg_.z_dim, rng);
}

template <class T>
Tensor<T> extract_patches(const Tensor<T>& images, int image_hw, int patch_px) {
  const int hw = image_hw, p = patch_px;
  if (p <= 0 || hw % p != 0) throw ConfigError("patch size must divide the image size");
  const int g = hw / p;
  if (images.rank() != 2 || images.dim(1) != hw * hw * 3) {
    throw ShapeError("expected images [B x " + std::to_string(hw * hw * 3) + "], got " + shape_str(images.shape()));
  }
  const int B = images.dim(0);
  // Each row of `strips` is p horizontally adjacent pixels of one image row.
  Tensor<T> strips = images.reshaped({B * hw * g, p * 3});
  std::vector<int> index;
  index.reserve(static_cast<std::size_t>(B) * hw * g);
  for (int b = 0; b < B; ++b)
    for (int py = 0; py < g; ++py)
      for (int px = 0; px < g; ++px)
        for (int iy = 0; iy < p; ++iy) index.push_back((b * hw + py * p + iy) * g + px);
  return gather_rows(strips, index).reshaped({B * g * g, p * p * 3});
}

template <class T>
Tensor<T> VttEncoder<T>::patch_images(const Tensor<T>& images) const {
  return patch_proj_(extract_patches(images, cfg_.image_hw, cfg_.patch_px));
}

template <class T>
Tensor<T> VttEncoder<T>::patch_image(const Tensor<T>& image) const {
  const int hw = cfg_.image_hw;
  if (image.shape() != Shape{hw, hw, 3}) {
    throw ShapeError("patch_image: expected [" + std::to_string(hw) + "x" + std::to_string(hw) + "x3], got " +
                     shape_str(image.shape()));
  }
  return patch_images(image.reshaped({1, hw * hw * 3}));
}

template <class T>
Tensor<T> VttEncoder<T>::patch_tactile(const Tensor<T>& wrenches) const {
  if (wrenches.rank() != 2 || wrenches.dim(1) != 6) {
    throw ShapeError("patch_tactile: expected [B x 6], got " + shape_str(wrenches.shape()));
  }
  for (T v : wrenches.data()) {
    if (!std::isfinite(static_cast<double>(v))) throw ValidationError("patch_tactile: non-finite wrench entry");
  }
  return tactile_proj_(wrenches.reshaped({wrenches.dim(0) * 2, 3}));
}

template <class T>
Tensor<T> VttEncoder<T>::assemble_tokens(const Tensor<T>& image_tokens, const Tensor<T>& tactile_tokens,
                                         int batch) const {
  const int d = cfg_.d, PI = layout_.image, PT = layout_.tactile;
  if (image_tokens.shape() != Shape{batch * PI, d} || tactile_tokens.shape() != Shape{batch * PT, d}) {
    throw ShapeError("assemble_tokens: expected image " + shape_str({batch * PI, d}) + " and tactile " +
                     shape_str({batch * PT, d}) + ", got " + shape_str(image_tokens.shape()) + " and " +
                     shape_str(tactile_tokens.shape()));
  }
  std::vector<Tensor<T>> parts;
  if (cfg_.contact_token) parts.push_back(contact_embed_);
  if (cfg_.align_token) parts.push_back(align_embed_);
  const int E = layout_.embedding;
  parts.push_back(image_tokens);
  parts.push_back(tactile_tokens);
  Tensor<T> pool = concat_rows(parts);
  std::vector<int> index;
  index.reserve(static_cast<std::size_t>(batch) * layout_.total());
  for (int b = 0; b < batch; ++b) {
    for (int e = 0; e < E; ++e) index.push_back(e);
    for (int i = 0; i < PI; ++i) index.push_back(E + b * PI + i);
    for (int i = 0; i < PT; ++i) index.push_back(E + batch * PI + b * PT + i);
  }
  return add_tiled(gather_rows(pool, index), position_embed_);
}

template <class T>
Tensor<T> VttEncoder<T>::attention_layer_forward(const Tensor<T>& x, int n, int batch, LayerTrace<T>* trace) const {
  const auto& L = layers_.at(static_cast<std::size_t>(n));
  Tensor<T> u = layer_norm(x, L.ln1_gain, L.ln1_bias);
  Tensor<T> q = L.query(u), k = L.key(u), v = L.value(u);
  std::shared_ptr<const AttentionWeights<T>> w;
  const T scale_factor = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg_.d)));
  Tensor<T> attended = multi_head_attention(q, k, v, batch, cfg_.heads, scale_factor, trace ? &w : nullptr);
  Tensor<T> x2 = x + L.mix(attended);
  if (trace) {
    trace->weights = std::move(w);
    trace->values = v;
    trace->attended = attended;
  }
  return x2 + L.feed_forward(layer_norm(x2, L.ln2_gain, L.ln2_bias));
}

template <class T>
EncoderOutput<T> VttEncoder<T>::forward(const ObservationBatch<T>& obs, bool keep_traces) const {
  if (obs.image_hw != cfg_.image_hw) {
    throw ShapeError("encoder expects " + std::to_string(cfg_.image_hw) + "px images, got " +
                     std::to_string(obs.image_hw));
  }
  EncoderOutput<T> out;
  Tensor<T> x = assemble_tokens(patch_images(obs.images), patch_tactile(obs.wrenches), obs.batch);
  for (int n = 0; n < cfg_.layers; ++n) {
    LayerTrace<T> tr;
    x = attention_layer_forward(x, n, obs.batch, keep_traces ? &tr : nullptr);
    if (keep_traces) out.layers.push_back(std::move(tr));
  }
  out.heads = x;
  return out;
}

template <class T>
CompressedCode<T> VttEncoder<T>::compress(const Tensor<T>& heads, int batch) const {
  const int R = layout_.total();
  if (heads.shape() != Shape{batch * R, cfg_.d}) {
    throw ShapeError("compress: expected " + shape_str({batch * R, cfg_.d}) + ", got " + shape_str(heads.shape()));
  }
  CompressedCode<T> c;
  c.per_token = token_compress_(heads);
  c.z = flat_compress_(c.per_token.reshaped({batch, R * cfg_.compressed_width()}));
  return c;
}

template <class T>
Tensor<T> VttEncoder<T>::head_rows(const Tensor<T>& heads, int batch, int row) const {
  std::vector<int> index(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) index[static_cast<std::size_t>(b)] = b * layout_.total() + row;
  return gather_rows(heads, index);
}

template <class T>
Tensor<T> VttEncoder<T>::contact_logits(const Tensor<T>& heads, int batch) const {
  if (!cfg_.contact_token) throw UsageError("contact token is ablated in this encoder");
  return contact_head_(head_rows(heads, batch, layout_.contact_row));
}

template <class T>
Tensor<T> VttEncoder<T>::alignment_logits(const Tensor<T>& heads, int batch) const {
  if (!cfg_.align_token) throw UsageError("alignment token is ablated in this encoder");
  return align_head_(head_rows(heads, batch, layout_.align_row));
}

template <class T>
Tensor<T> vtt_loss(const Tensor<T>& contact_logits, const Tensor<T>& align_logits, const Tensor<T>& contact_gt,
                   const Tensor<T>& align_gt) {
  return bce_with_logits(align_logits, align_gt) + bce_with_logits(contact_logits, contact_gt);
}

template <class T>
std::size_t count_parameters(const ParameterSet<T>& params) {
  return params.count();
}

#define VTT_INSTANTIATE(T)                                                                                        \
  template struct AttentionDecomposition<T>;                                                                      \
  template AttentionDecomposition<T> decompose_attention<T>(std::span<const T>, int, std::span<const T>, int,   \
                                                            const TokenLayout&);                                 \
  template Tensor<T> extract_patches<T>(const Tensor<T>&, int, int);                                           \
  template class VttEncoder<T>;                                                                                   \
  template Tensor<T> vtt_loss<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template std::size_t count_parameters<T>(const ParameterSet<T>&);

VTT_INSTANTIATE(float)
VTT_INSTANTIATE(double)

}  // namespace vtt
