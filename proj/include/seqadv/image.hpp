#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "seqadv/tensor.hpp"

namespace seqadv {

// H x W grayscale image, row-major, intensities in [0,1]. Generated frames are
// binary {0,1}; model predictions may hold intermediate probabilities.
struct Frame {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> px;

  Frame() = default;
  Frame(std::size_t h_, std::size_t w_, double fill = 0.0) : h(h_), w(w_), px(h_ * w_, fill) {}

  double at(std::size_t y, std::size_t x) const { return px[y * w + x]; }
  void set(std::size_t y, std::size_t x, double v) { px[y * w + x] = v; }
  bool inside(long y, long x) const {
    return y >= 0 && x >= 0 && y < static_cast<long>(h) && x < static_cast<long>(w);
  }
};

bool operator==(const Frame& a, const Frame& b);

// Binary PGM (P5, maxval 255). Intensities quantize to round(v*255).
void write_pgm(const std::filesystem::path& path, const Frame& frame);
Frame read_pgm(const std::filesystem::path& path);

Tensor frame_to_tensor(const Frame& f);  // [1 x H x W]
Frame tensor_to_frame(const Tensor& t, std::size_t h, std::size_t w);

}  // namespace seqadv
