#include "vtt/fusion.hpp"

#include <cmath>

namespace vtt {

namespace {

constexpr float kLogVarMin = -10.0f;
constexpr float kLogVarMax = 4.0f;

struct KindName {
  FusionKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {FusionKind::kVtt, "vtt"},
    {FusionKind::kConcat, "concat"},
    {FusionKind::kPoe, "poe"},
    {FusionKind::kVttNoContact, "vtt-no-contact"},
    {FusionKind::kVttNoAlign, "vtt-no-align"},
    {FusionKind::kVttNoBoth, "vtt-no-both"},
};

template <class T>
ModalityEncoders<T> make_modality_encoders(ParameterSet<T>& ps, const std::string& prefix, const BaselineConfig& c,
                                           int image_out, int tactile_out, SeededRng& rng) {
  ModalityEncoders<T> m;
  m.image_hw = c.image_hw;
  m.patch_px = c.patch_px;
  m.patch = make_linear(ps, prefix + ".image.patch", c.patch_px * c.patch_px * 3, c.patch_width, rng);
  m.image = make_mlp2(ps, prefix + ".image.mlp", c.image_patches() * c.patch_width, c.image_hidden, image_out, rng);
  m.tactile = make_mlp2(ps, prefix + ".tactile.mlp", 6, c.tactile_hidden, tactile_out, rng);
  return m;
}

template <class T>
void check_wrenches(const Tensor<T>& w) {
  if (w.rank() != 2 || w.dim(1) != 6) throw ShapeError("expected wrenches [B x 6], got " + shape_str(w.shape()));
  for (T v : w.data()) {
    if (!std::isfinite(static_cast<double>(v))) throw ValidationError("non-finite wrench entry");
  }
}

}  // namespace

std::string fusion_name(FusionKind kind) {
  for (const auto& k : kKindNames) {
    if (k.kind == kind) return k.name;
  }
  throw UsageError("unknown fusion kind");
}

FusionKind parse_fusion(const std::string& name) {
  for (const auto& k : kKindNames) {
    if (name == k.name) return k.kind;
  }
  throw ConfigError("unknown fusion '" + name + "' (expected vtt, concat, poe, vtt-no-contact, vtt-no-align, vtt-no-both)");
}

bool is_vtt_family(FusionKind kind) { return kind != FusionKind::kConcat && kind != FusionKind::kPoe; }

VttConfig ablate(VttConfig cfg, FusionKind kind) {
  if (kind == FusionKind::kVttNoContact || kind == FusionKind::kVttNoBoth) cfg.contact_token = false;
  if (kind == FusionKind::kVttNoAlign || kind == FusionKind::kVttNoBoth) cfg.align_token = false;
  return cfg;
}

template <class T>
Tensor<T> fuse_concat(const Tensor<T>& e_image, const Tensor<T>& e_tactile) {
  if (e_image.rows() != e_tactile.rows()) {
    throw ShapeError("fuse_concat: row mismatch " + shape_str(e_image.shape()) + " vs " + shape_str(e_tactile.shape()));
  }
  return concat_cols<T>({e_image, e_tactile});
}

template <class T>
PoeResult<T> fuse_poe(const std::vector<GaussianExpert<T>>& experts, SeededRng* rng) {
  if (experts.empty()) throw ValidationError("fuse_poe: need at least one expert");
  const Shape& shape = experts.front().mu.shape();
  Tensor<T> precision, weighted;
  for (const auto& e : experts) {
    if (e.mu.shape() != shape || e.var.shape() != shape) {
      throw ShapeError("fuse_poe: expert shapes differ: " + shape_str(e.mu.shape()) + " vs " + shape_str(shape));
    }
    for (T v : e.var.data()) {
      if (!(v > T{0})) throw ValidationError("fuse_poe: expert variance must be positive");
    }
    Tensor<T> p = reciprocal(e.var);
    Tensor<T> w = e.mu * p;
    precision = precision.defined() ? precision + p : p;
    weighted = weighted.defined() ? weighted + w : w;
  }
  PoeResult<T> r;
  r.var = reciprocal(precision);
  r.mu = r.var * weighted;
  if (rng) {
    std::vector<T> eps(r.mu.numel());
    for (auto& x : eps) x = static_cast<T>(rng->normal());
    Tensor<T> sd = exp(scale(log(r.var), T{0.5}));
    r.sample = r.mu + sd * Tensor<T>::from(shape, std::move(eps));
  } else {
    r.sample = r.mu;
  }
  return r;
}

template <class T>
Tensor<T> poe_kl_regularizer(const GaussianExpert<T>& e) {
  if (e.mu.shape() != e.var.shape()) throw ShapeError("poe_kl_regularizer: mu/var shape mismatch");
  // 0.5 * (var + mu^2 - 1 - log var)
  Tensor<T> per = scale(add_scalar(e.var + square(e.mu) - log(e.var), T{-1}), T{0.5});
  return scale(sum(per), static_cast<T>(1.0 / e.mu.rows()));
}

void BaselineConfig::validate() const {
  if (image_hw <= 0 || patch_px <= 0 || image_hw % patch_px != 0) {
    throw ConfigError("baseline config: patch_px must divide image_hw");
  }
  if (patch_width <= 0 || image_hidden <= 0 || image_out <= 0 || tactile_hidden <= 0 || tactile_out <= 0 ||
      poe_latent <= 0) {
    throw ConfigError("baseline config: widths must be positive");
  }
}

BaselineConfig BaselineConfig::desk() { return BaselineConfig{}; }

BaselineConfig BaselineConfig::full_concat(bool adjusted) {
  BaselineConfig c;
  c.image_hw = 84;
  c.patch_px = 14;
  c.patch_width = adjusted ? 256 : 64;
  c.image_hidden = adjusted ? 832 : 640;
  c.image_out = 256;
  c.tactile_hidden = 256;
  c.tactile_out = 32;
  c.poe_latent = 288;
  return c;
}

BaselineConfig BaselineConfig::full_poe(bool adjusted) {
  BaselineConfig c = full_concat(adjusted);
  c.image_hidden = adjusted ? 864 : 704;
  return c;
}

template <class T>
Tensor<T> ModalityEncoders<T>::encode_image(const Tensor<T>& images) const {
  const int B = images.rows();
  Tensor<T> p = relu(patch(extract_patches(images, image_hw, patch_px)));
  return image(p.reshaped({B, static_cast<int>(p.numel()) / B}));
}

template <class T>
Tensor<T> ModalityEncoders<T>::encode_tactile(const Tensor<T>& wrenches) const {
  check_wrenches(wrenches);
  return tactile(wrenches);
}

template <class T>
VttFusion<T>::VttFusion(const VttConfig& cfg, FusionKind kind, SeededRng& rng)
    : kind_(kind), enc_(ablate(cfg, kind), rng) {
  if (!is_vtt_family(kind)) throw UsageError("VttFusion built with baseline kind " + fusion_name(kind));
}

template <class T>
FusionOutput<T> VttFusion<T>::encode(const ObservationBatch<T>& obs, SeededRng*, bool keep_traces) const {
  auto out = enc_.forward(obs, keep_traces);
  FusionOutput<T> f;
  f.z = enc_.compress(out.heads, obs.batch).z;
  if (has_contact_head()) f.contact_logits = enc_.contact_logits(out.heads, obs.batch);
  if (has_align_head()) f.align_logits = enc_.alignment_logits(out.heads, obs.batch);
  f.traces = std::move(out.layers);
  return f;
}

template <class T>
ConcatFusion<T>::ConcatFusion(const BaselineConfig& cfg, SeededRng& rng) : cfg_(cfg) {
  cfg_.validate();
  enc_ = make_modality_encoders(params_, "concat", cfg_, cfg_.image_out, cfg_.tactile_out, rng);
  contact_head_ = make_linear(params_, "concat.contact_head", z_dim(), 1, rng);
  align_head_ = make_linear(params_, "concat.align_head", z_dim(), 1, rng);
}

template <class T>
FusionOutput<T> ConcatFusion<T>::encode(const ObservationBatch<T>& obs, SeededRng*, bool) const {
  FusionOutput<T> f;
  f.z = fuse_concat(enc_.encode_image(obs.images), enc_.encode_tactile(obs.wrenches));
  f.contact_logits = contact_head_(f.z);
  f.align_logits = align_head_(f.z);
  return f;
}

template <class T>
PoeFusion<T>::PoeFusion(const BaselineConfig& cfg, SeededRng& rng) : cfg_(cfg) {
  cfg_.validate();
  enc_ = make_modality_encoders(params_, "poe", cfg_, 2 * cfg_.poe_latent, 2 * cfg_.poe_latent, rng);
  contact_head_ = make_linear(params_, "poe.contact_head", z_dim(), 1, rng);
  align_head_ = make_linear(params_, "poe.align_head", z_dim(), 1, rng);
}

template <class T>
std::vector<GaussianExpert<T>> PoeFusion<T>::experts(const ObservationBatch<T>& obs) const {
  const int j = cfg_.poe_latent;
  auto split = [&](const Tensor<T>& h) {
    GaussianExpert<T> e;
    e.mu = slice_cols(h, 0, j);
    e.var = exp(clamp(slice_cols(h, j, j), static_cast<T>(kLogVarMin), static_cast<T>(kLogVarMax)));
    return e;
  };
  return {split(enc_.encode_image(obs.images)), split(enc_.encode_tactile(obs.wrenches))};
}

template <class T>
FusionOutput<T> PoeFusion<T>::encode(const ObservationBatch<T>& obs, SeededRng* rng, bool) const {
  auto fused = fuse_poe(experts(obs), rng);
  FusionOutput<T> f;
  f.z = fused.sample;
  f.regularizer = poe_kl_regularizer(GaussianExpert<T>{fused.mu, fused.var});
  f.contact_logits = contact_head_(f.z);
  f.align_logits = align_head_(f.z);
  return f;
}

template <class T>
std::unique_ptr<FusionModel<T>> make_fusion(FusionKind kind, const VttConfig& vtt_cfg, const BaselineConfig& base_cfg,
                                            SeededRng& rng) {
  switch (kind) {
    case FusionKind::kConcat: return std::make_unique<ConcatFusion<T>>(base_cfg, rng);
    case FusionKind::kPoe: return std::make_unique<PoeFusion<T>>(base_cfg, rng);
    default: return std::make_unique<VttFusion<T>>(vtt_cfg, kind, rng);
  }
}

#define VTT_INSTANTIATE(T)                                                                                   \
  template Tensor<T> fuse_concat<T>(const Tensor<T>&, const Tensor<T>&);                                     \
  template PoeResult<T> fuse_poe<T>(const std::vector<GaussianExpert<T>>&, SeededRng*);                      \
  template Tensor<T> poe_kl_regularizer<T>(const GaussianExpert<T>&);                                        \
  template struct ModalityEncoders<T>;                                                                       \
  template class VttFusion<T>;                                                                               \
  template class ConcatFusion<T>;                                                                            \
  template class PoeFusion<T>;                                                                               \
  template std::unique_ptr<FusionModel<T>> make_fusion<T>(FusionKind, const VttConfig&, const BaselineConfig&, \
                                                          SeededRng&);

VTT_INSTANTIATE(float)
VTT_INSTANTIATE(double)

}  // namespace vtt
