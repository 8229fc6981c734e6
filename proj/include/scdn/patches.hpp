#pragma once

#include <stdexcept>
#include <vector>

#include "scdn/rng.hpp"
#include "scdn/tensor.hpp"

namespace scdn {

struct PatchCoord {
  int image = 0, y = 0, x = 0;
};

// Crop coordinates are a pure function of (seed, batch, h, w, patch, count):
// calling twice with the same seed gives identical crops, so paired inputs
// stay aligned.
inline std::vector<PatchCoord> patch_coords(int images, int h, int w,
                                            int patch, int count,
                                            std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x70617463ull));  // stream tag: patch extraction
  std::vector<PatchCoord> coords(static_cast<std::size_t>(count));
  for (auto& c : coords) {
    c.image = images == 1 ? 0 : rng.below(images);
    c.y = h == patch ? 0 : rng.below(h - patch + 1);
    c.x = w == patch ? 0 : rng.below(w - patch + 1);
  }
  return coords;
}

template <class T>
Tensor<T> extract_patches(const Tensor<T>& img, int patch, int count,
                          std::uint64_t seed) {
  const Shape s = img.shape();
  if (patch < 1 || count < 1)
    throw std::invalid_argument("extract_patches: patch and count must be >= 1");
  if (patch > s.h || patch > s.w)
    throw std::invalid_argument("extract_patches: patch larger than image");
  const auto coords = patch_coords(s.n, s.h, s.w, patch, count, seed);
  Tensor<T> out(count, s.c, patch, patch);
  for (int i = 0; i < count; ++i) {
    const auto& pc = coords[std::size_t(i)];
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x)
          out.at(i, c, y, x) = img.at(pc.image, c, pc.y + y, pc.x + x);
  }
  return out;
}

}  // namespace scdn
