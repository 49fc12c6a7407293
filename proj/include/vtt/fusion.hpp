#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vtt/encoder.hpp"

namespace vtt {

enum class FusionKind { kVtt, kConcat, kPoe, kVttNoContact, kVttNoAlign, kVttNoBoth };

/// "vtt", "concat", "poe", "vtt-no-contact", "vtt-no-align", "vtt-no-both".
std::string fusion_name(FusionKind kind);
/// Throws ConfigError on an unknown name.
FusionKind parse_fusion(const std::string& name);
bool is_vtt_family(FusionKind kind);
/// Applies the token ablation implied by `kind` to a VTT config.
VttConfig ablate(VttConfig cfg, FusionKind kind);

/// Diagonal Gaussian; every entry of `var` must be positive.
template <class T>
struct GaussianExpert {
  Tensor<T> mu;
  Tensor<T> var;
};

template <class T>
struct PoeResult {
  Tensor<T> mu;
  Tensor<T> var;
  Tensor<T> sample;
};

/// [E_I, E_T] along the columns.
template <class T>
Tensor<T> fuse_concat(const Tensor<T>& e_image, const Tensor<T>& e_tactile);

/// Precision-weighted product: var = 1 / sum(1/var_i), mu = var * sum(mu_i/var_i).
/// With `rng` the sample is mu + sqrt(var) * eps; without it the sample is mu.
template <class T>
PoeResult<T> fuse_poe(const std::vector<GaussianExpert<T>>& experts, SeededRng* rng);

/// KL(N(mu, var) || N(0, 1)) summed over features, averaged over rows.
template <class T>
Tensor<T> poe_kl_regularizer(const GaussianExpert<T>& expert);

/// Widths of the two-stream baselines. The image stream is a strided patch
/// projection (ReLU) followed by a 2-layer map over the flattened patches.
struct BaselineConfig {
  int image_hw = 24;
  int patch_px = 4;
  int patch_width = 8;
  int image_hidden = 64;
  int image_out = 24;
  int tactile_hidden = 32;
  int tactile_out = 8;
  int poe_latent = 32;

  void validate() const;
  int image_patches() const { return (image_hw / patch_px) * (image_hw / patch_px); }

  static BaselineConfig desk();
  /// Full-scale widths; `adjusted` selects the enlarged variants.
  static BaselineConfig full_concat(bool adjusted = false);
  static BaselineConfig full_poe(bool adjusted = false);
};

template <class T>
struct FusionOutput {
  Tensor<T> z;               // [B x z_dim]
  Tensor<T> contact_logits;  // [B x 1], undefined when the head is absent
  Tensor<T> align_logits;    // [B x 1], undefined when the head is absent
  Tensor<T> regularizer;     // scalar, undefined unless the model has one
  std::vector<LayerTrace<T>> traces;
};

/// Common surface of VTT and the baselines.
template <class T>
class FusionModel {
 public:
  virtual ~FusionModel() = default;
  virtual FusionKind kind() const = 0;
  virtual int z_dim() const = 0;
  virtual int image_hw() const = 0;
  virtual bool has_contact_head() const = 0;
  virtual bool has_align_head() const = 0;
  /// `rng` drives stochastic fusion (PoE sampling); nullptr means use the mean.
  virtual FusionOutput<T> encode(const ObservationBatch<T>& obs, SeededRng* rng, bool keep_traces) const = 0;
  virtual ParameterSet<T>& params() = 0;
  virtual const ParameterSet<T>& params() const = 0;
  /// Non-null for the VTT family.
  virtual const VttEncoder<T>* vtt() const { return nullptr; }
};

template <class T>
class VttFusion final : public FusionModel<T> {
 public:
  VttFusion(const VttConfig& cfg, FusionKind kind, SeededRng& rng);
  FusionKind kind() const override { return kind_; }
  int z_dim() const override { return enc_.config().z_dim; }
  int image_hw() const override { return enc_.config().image_hw; }
  bool has_contact_head() const override { return enc_.config().contact_token; }
  bool has_align_head() const override { return enc_.config().align_token; }
  FusionOutput<T> encode(const ObservationBatch<T>& obs, SeededRng* rng, bool keep_traces) const override;
  ParameterSet<T>& params() override { return enc_.params(); }
  const ParameterSet<T>& params() const override { return enc_.params(); }
  const VttEncoder<T>* vtt() const override { return &enc_; }
  VttEncoder<T>& encoder() { return enc_; }

 private:
  FusionKind kind_;
  VttEncoder<T> enc_;
};

/// Image and tactile streams shared by both baselines.
template <class T>
struct ModalityEncoders {
  Linear<T> patch;
  Mlp2<T> image;
  Mlp2<T> tactile;
  int image_hw = 0;
  int patch_px = 0;

  Tensor<T> encode_image(const Tensor<T>& images) const;
  Tensor<T> encode_tactile(const Tensor<T>& wrenches) const;
};

template <class T>
class ConcatFusion final : public FusionModel<T> {
 public:
  ConcatFusion(const BaselineConfig& cfg, SeededRng& rng);
  FusionKind kind() const override { return FusionKind::kConcat; }
  int z_dim() const override { return cfg_.image_out + cfg_.tactile_out; }
  int image_hw() const override { return cfg_.image_hw; }
  bool has_contact_head() const override { return true; }
  bool has_align_head() const override { return true; }
  FusionOutput<T> encode(const ObservationBatch<T>& obs, SeededRng* rng, bool keep_traces) const override;
  ParameterSet<T>& params() override { return params_; }
  const ParameterSet<T>& params() const override { return params_; }

 private:
  BaselineConfig cfg_;
  ParameterSet<T> params_;
  ModalityEncoders<T> enc_;
  Linear<T> contact_head_, align_head_;
};

template <class T>
class PoeFusion final : public FusionModel<T> {
 public:
  PoeFusion(const BaselineConfig& cfg, SeededRng& rng);
  FusionKind kind() const override { return FusionKind::kPoe; }
  int z_dim() const override { return cfg_.poe_latent; }
  int image_hw() const override { return cfg_.image_hw; }
  bool has_contact_head() const override { return true; }
  bool has_align_head() const override { return true; }
  FusionOutput<T> encode(const ObservationBatch<T>& obs, SeededRng* rng, bool keep_traces) const override;
  ParameterSet<T>& params() override { return params_; }
  const ParameterSet<T>& params() const override { return params_; }
  /// Per-modality experts before fusion: {image, tactile}.
  std::vector<GaussianExpert<T>> experts(const ObservationBatch<T>& obs) const;

 private:
  BaselineConfig cfg_;
  ParameterSet<T> params_;
  ModalityEncoders<T> enc_;
  Linear<T> contact_head_, align_head_;
};

template <class T>
std::unique_ptr<FusionModel<T>> make_fusion(FusionKind kind, const VttConfig& vtt_cfg, const BaselineConfig& base_cfg,
                                            SeededRng& rng);

}  // namespace vtt
