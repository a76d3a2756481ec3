#pragma once

#include <string>
#include <vector>

#include "duostream/tensor.hpp"

namespace duostream {

// Binary P5/P6 writers. Values are clamped to [0,1] and quantized to 8 bits.
void write_pgm(const std::string& path, const std::vector<float>& gray,
               int width, int height);
// image [3,H,W]
void write_ppm(const std::string& path, const Tensor& image);

// Overlay helpers for fixation visualizations: draws a ring plus the step
// number (1-based) at each fixation, ordered.
struct PixelPoint {
  int x, y;
};
void draw_fixation_overlay(Tensor& image, const std::vector<PixelPoint>& pts);

}  // namespace duostream
