#pragma once

#include <array>
#include <vector>

#include "vtt/tensor.hpp"

namespace vtt {

/// One RGB image (row-major H x W x 3, values in [0,1]) paired with a wrist
/// wrench [Fx, Fy, Fz, Tx, Ty, Tz] in N and N*m.
struct Observation {
  std::vector<float> image;
  std::array<float, 6> wrench{};
  int contact = 0;
  int aligned = 1;
  int t = 0;
};

/// Batched encoder input: images [B x (H*W*3)], wrenches [B x 6].
template <class T>
struct ObservationBatch {
  int batch = 0;
  int image_hw = 0;
  Tensor<T> images;
  Tensor<T> wrenches;

  /// Pairs image i with wrench i; the two lists may come from different steps.
  static ObservationBatch from_pointers(int image_hw, const std::vector<const float*>& images,
                                        const std::vector<const float*>& wrenches) {
    if (images.size() != wrenches.size() || images.empty()) {
      throw ShapeError("observation batch needs equal, non-zero image and wrench counts");
    }
    const std::size_t px = static_cast<std::size_t>(image_hw) * image_hw * 3;
    std::vector<T> im(images.size() * px), wr(images.size() * 6);
    for (std::size_t b = 0; b < images.size(); ++b) {
      for (std::size_t i = 0; i < px; ++i) im[b * px + i] = static_cast<T>(images[b][i]);
      for (std::size_t i = 0; i < 6; ++i) wr[b * 6 + i] = static_cast<T>(wrenches[b][i]);
    }
    ObservationBatch out;
    out.batch = static_cast<int>(images.size());
    out.image_hw = image_hw;
    out.images = Tensor<T>::from({out.batch, static_cast<int>(px)}, std::move(im));
    out.wrenches = Tensor<T>::from({out.batch, 6}, std::move(wr));
    return out;
  }

  static ObservationBatch from_observations(int image_hw, const std::vector<const Observation*>& obs) {
    std::vector<const float*> im, wr;
    for (const auto* o : obs) {
      if (o->image.size() != static_cast<std::size_t>(image_hw) * image_hw * 3) {
        throw ShapeError("observation image does not match " + std::to_string(image_hw) + "x" +
                         std::to_string(image_hw) + "x3");
      }
      im.push_back(o->image.data());
      wr.push_back(o->wrench.data());
    }
    return from_pointers(image_hw, im, wr);
  }
};

}  // namespace vtt
