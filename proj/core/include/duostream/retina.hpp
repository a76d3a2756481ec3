#pragma once

#include <string>
#include <vector>

#include "duostream/tensor.hpp"

namespace duostream {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// Parameters of the foveated resampling. The radial profile in normalized
// units is
//
//   g(r') = (b/sqrt(pi)) * (1 - exp(ln(a) r'/2)) / (1 - exp(ln(a)/2)),
//
// with b = sqrt(pi) so that g(1) = 1 exactly. `a` > 1 concentrates samples
// toward the fixation (the profile is singular at a = 1, which is rejected).
struct RetinalParams {
  double a = 2.5;          // center-concentration factor
  int grid = 64;           // output resolution (grid x grid)
  Vec2 fixation{0.5, 0.5}; // normalized image coordinates

  double b() const;  // normalization constant (sqrt(pi))
};

// g(r') for r' in [0,1]. Throws on r' outside [0,1] or a <= 1.
double radial_warp(double r_prime, const RetinalParams& params);

// Source pixel coordinates for every retinal cell. The retinal frame is the
// square [-1,1]^2 around the fixation; a retinal point keeps its polar angle
// and has its corner-normalized radius mapped through radial_warp, scaled by
// the distance from the fixation to the farthest image corner.
struct SamplingGrid {
  int grid = 0;
  int image_width = 0;
  int image_height = 0;
  std::vector<float> src_x;  // pixel coords, row-major grid*grid
  std::vector<float> src_y;
  std::vector<float> ret_u;  // retinal coords in [-1,1]
  std::vector<float> ret_v;
};

SamplingGrid build_sampling_grid(const RetinalParams& params, int image_width,
                                 int image_height);

// Source pixel position of a single retinal point (u,v) in [-1,1]^2; the grid
// above is this function evaluated at every cell center.
Vec2 warp_point(const RetinalParams& params, double u, double v,
                int image_width, int image_height);

// Bilinear sample of image [C,H,W] at the grid; out-of-bounds samples are 0.
// Differentiable with respect to the image.
Tensor sample_image(const Tensor& image, const SamplingGrid& grid);

// Debug CSV: retinal_x, retinal_y, source_x, source_y (normalized units).
void write_warp_dump(const std::string& path, const SamplingGrid& grid);

}  // namespace duostream
