#pragma once

#include <memory>
#include <span>
#include <vector>

#include "vtt/nn.hpp"
#include "vtt/observation.hpp"

namespace vtt {

/// Shape hyperparameters of the visuo-tactile transformer.
struct VttConfig {
  int image_hw = 24;
  int patch_px = 4;
  int d = 64;
  int heads = 4;
  int layers = 1;
  int compress_c = 8;
  int z_dim = 64;
  bool contact_token = true;
  bool align_token = true;

  int image_patches() const { return (image_hw / patch_px) * (image_hw / patch_px); }
  static constexpr int tactile_patches() { return 2; }
  int embedding_tokens() const { return (contact_token ? 1 : 0) + (align_token ? 1 : 0); }
  int tokens() const { return embedding_tokens() + image_patches() + tactile_patches(); }
  int d_k() const { return d / heads; }
  int compressed_width() const { return d / compress_c; }
  int patch_dim() const { return patch_px * patch_px * 3; }

  /// Throws ConfigError on any violated constraint.
  void validate() const;

  /// 84x84 images, 14-px patches, d=384, h=8, N=6, c=12, z of width 288.
  static VttConfig full();
  /// 24x24 images, 4-px patches (also 36 image tokens), d=64, z of width 64.
  static VttConfig desk();
};

/// images [B x H*W*3] -> [B*P x p*p*3]: non-overlapping p x p patches in
/// row-major grid order, each flattened as (y, x, channel).
template <class T>
Tensor<T> extract_patches(const Tensor<T>& images, int image_hw, int patch_px);

/// Row layout of one token sequence: [contact?; alignment?; image...; tactile...].
struct TokenLayout {
  int embedding = 2;
  int contact_row = 0;  // -1 when ablated
  int align_row = 1;    // -1 when ablated
  int image = 36;
  int tactile = 2;

  int total() const { return embedding + image + tactile; }
  int image_begin() const { return embedding; }
  int tactile_begin() const { return embedding + image; }
  bool is_image(int r) const { return r >= image_begin() && r < tactile_begin(); }
  bool is_tactile(int r) const { return r >= tactile_begin() && r < total(); }

  static TokenLayout from_config(const VttConfig& cfg);
};

/// Self/cross split of one sequence's attention at one layer.
///
/// With image rows/cols I, tactile rows/cols T and embedding tokens E:
/// self_out gathers S[I, I+E] V and S[T, T+E] V (and every E row), cross_out
/// gathers S[I, T] V and S[T, I] V, so self_out + cross_out == S V.
template <class T>
struct AttentionDecomposition {
  int heads = 0;
  int tokens = 0;
  int width = 0;             // value width across all heads
  std::vector<T> full;       // [heads x R x R]
  std::vector<T> self_out;   // [R x width]
  std::vector<T> cross_out;  // [R x width]
  double image_self = 0.0;          // mean weight in S[I, I]
  double tactile_self = 0.0;        // mean weight in S[T, T]
  double image_from_tactile = 0.0;  // mean weight in S[I, T]
  double tactile_from_image = 0.0;  // mean weight in S[T, I]
};

/// `probs` is [heads x R x R] row-stochastic; `values` is [R x width] with
/// head h owning columns [h*width/heads, (h+1)*width/heads).
template <class T>
AttentionDecomposition<T> decompose_attention(std::span<const T> probs, int heads, std::span<const T> values,
                                              int width, const TokenLayout& layout);

template <class T>
struct AttentionLayerParams {
  Tensor<T> ln1_gain, ln1_bias;
  Mlp2<T> query, key, value;
  Linear<T> mix;
  Tensor<T> ln2_gain, ln2_bias;
  Mlp2<T> feed_forward;
};

/// What one attention layer leaves behind for analysis.
template <class T>
struct LayerTrace {
  std::shared_ptr<const AttentionWeights<T>> weights;
  Tensor<T> values;    // [B*R x d], V before head mixing
  Tensor<T> attended;  // [B*R x d], concatenated head outputs S V
};

template <class T>
struct EncoderOutput {
  Tensor<T> heads;  // [B*R x d] final tokens
  std::vector<LayerTrace<T>> layers;
};

template <class T>
struct CompressedCode {
  Tensor<T> per_token;  // [B*R x d/c]
  Tensor<T> z;          // [B x z_dim]
};

template <class T>
class VttEncoder {
 public:
  VttEncoder(const VttConfig& cfg, SeededRng& rng);

  const VttConfig& config() const { return cfg_; }
  const TokenLayout& layout() const { return layout_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  AttentionLayerParams<T>& layer(int n) { return layers_.at(static_cast<std::size_t>(n)); }

  /// images [B x H*W*3] -> [B*P_I x d]; patches in row-major grid order.
  Tensor<T> patch_images(const Tensor<T>& images) const;
  /// One image [H x W x 3] -> [P_I x d].
  Tensor<T> patch_image(const Tensor<T>& image) const;
  /// wrenches [B x 6] -> [B*2 x d]: force row then torque row per sample.
  Tensor<T> patch_tactile(const Tensor<T>& wrenches) const;
  /// [X_C; X_Al; X_I; X_T] + X_P per sample -> [B*R x d].
  Tensor<T> assemble_tokens(const Tensor<T>& image_tokens, const Tensor<T>& tactile_tokens, int batch) const;
  Tensor<T> attention_layer_forward(const Tensor<T>& x, int n, int batch, LayerTrace<T>* trace) const;

  EncoderOutput<T> forward(const ObservationBatch<T>& obs, bool keep_traces = false) const;
  CompressedCode<T> compress(const Tensor<T>& heads, int batch) const;
  /// [B x 1]; throws UsageError if the corresponding token is ablated.
  Tensor<T> contact_logits(const Tensor<T>& heads, int batch) const;
  Tensor<T> alignment_logits(const Tensor<T>& heads, int batch) const;

 private:
  Tensor<T> head_rows(const Tensor<T>& heads, int batch, int row) const;

  VttConfig cfg_;
  TokenLayout layout_;
  ParameterSet<T> params_;
  Linear<T> patch_proj_;
  Linear<T> tactile_proj_;
  Tensor<T> contact_embed_, align_embed_, position_embed_;
  std::vector<AttentionLayerParams<T>> layers_;
  Linear<T> contact_head_, align_head_;
  Mlp2<T> token_compress_;
  Mlp2<T> flat_compress_;
};

/// BCE(alignment) + BCE(contact), each averaged over the batch.
template <class T>
Tensor<T> vtt_loss(const Tensor<T>& contact_logits, const Tensor<T>& align_logits, const Tensor<T>& contact_gt,
                   const Tensor<T>& align_gt);

template <class T>
std::size_t count_parameters(const ParameterSet<T>& params);

}  // namespace vtt
