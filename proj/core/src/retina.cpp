#include "duostream/retina.hpp"

#include <algorithm>
#include <cmath>

#include "duostream/csv.hpp"
#include "duostream/errors.hpp"
#include "duostream/ops.hpp"

namespace duostream {

double RetinalParams::b() const { return std::sqrt(3.14159265358979323846); }

double radial_warp(double r_prime, const RetinalParams& params) {
  if (params.a <= 1.0)
    throw DimensionError("radial_warp: concentration a must exceed 1");
  if (r_prime < 0.0 || r_prime > 1.0)
    throw DimensionError("radial_warp: r' must lie in [0,1]");
  const double half_log_a = 0.5 * std::log(params.a);
  // b = sqrt(pi) cancels the leading factor, giving g(1) = 1 exactly.
  return (1.0 - std::exp(half_log_a * r_prime)) / (1.0 - std::exp(half_log_a));
}

namespace {

double farthest_corner_distance(const Vec2& fix_px, int width, int height) {
  const double xs[2] = {0.0, static_cast<double>(width - 1)};
  const double ys[2] = {0.0, static_cast<double>(height - 1)};
  double best = 0.0;
  for (double cx : xs)
    for (double cy : ys)
      best = std::max(best, std::hypot(cx - fix_px.x, cy - fix_px.y));
  return best;
}

Vec2 fixation_pixels(const RetinalParams& params, int width, int height) {
  return {params.fixation.x * (width - 1), params.fixation.y * (height - 1)};
}

}  // namespace

Vec2 warp_point(const RetinalParams& params, double u, double v,
                int image_width, int image_height) {
  const Vec2 fix = fixation_pixels(params, image_width, image_height);
  const double r_max = farthest_corner_distance(fix, image_width, image_height);
  const double radius = std::hypot(u, v);
  if (radius == 0.0) return fix;
  // corner of the [-1,1]^2 retinal frame has radius sqrt(2)
  const double r_prime = radius / std::sqrt(2.0);
  const double r = radial_warp(std::min(r_prime, 1.0), params);
  const double s = r * r_max / radius;
  return {fix.x + u * s, fix.y + v * s};
}

SamplingGrid build_sampling_grid(const RetinalParams& params, int image_width,
                                 int image_height) {
  if (image_width < 2 || image_height < 2)
    throw DimensionError("build_sampling_grid: image too small");
  if (params.grid < 2)
    throw DimensionError("build_sampling_grid: grid too small");
  const int g = params.grid;
  SamplingGrid out;
  out.grid = g;
  out.image_width = image_width;
  out.image_height = image_height;
  const size_t cells = static_cast<size_t>(g) * g;
  out.src_x.resize(cells);
  out.src_y.resize(cells);
  out.ret_u.resize(cells);
  out.ret_v.resize(cells);

  const Vec2 fix = fixation_pixels(params, image_width, image_height);
  const double r_max = farthest_corner_distance(fix, image_width, image_height);
  const double half_log_a = 0.5 * std::log(params.a);
  const double denom = 1.0 - std::exp(half_log_a);

  for (int iy = 0; iy < g; ++iy) {
    // cell centers of [-1,1]^2
    const double v = -1.0 + (iy + 0.5) * 2.0 / g;
    for (int ix = 0; ix < g; ++ix) {
      const double u = -1.0 + (ix + 0.5) * 2.0 / g;
      const size_t idx = static_cast<size_t>(iy) * g + ix;
      out.ret_u[idx] = static_cast<float>(u);
      out.ret_v[idx] = static_cast<float>(v);
      const double radius = std::hypot(u, v);
      const double r_prime = radius / std::sqrt(2.0);
      const double r = (1.0 - std::exp(half_log_a * r_prime)) / denom;
      const double s = (radius == 0.0) ? 0.0 : r * r_max / radius;
      out.src_x[idx] = static_cast<float>(fix.x + u * s);
      out.src_y[idx] = static_cast<float>(fix.y + v * s);
    }
  }
  return out;
}

Tensor sample_image(const Tensor& image, const SamplingGrid& grid) {
  if (image.shape().size() != 3)
    throw DimensionError("sample_image: image must be [C,H,W]");
  if (image.dim(1) != grid.image_height || image.dim(2) != grid.image_width)
    throw DimensionError("sample_image: grid was built for another image size");
  return grid_sample_zero(image, grid.src_x, grid.src_y, grid.grid, grid.grid);
}

void write_warp_dump(const std::string& path, const SamplingGrid& grid) {
  CsvWriter csv(path, {"retinal_x", "retinal_y", "source_x", "source_y"});
  const double wm1 = grid.image_width - 1, hm1 = grid.image_height - 1;
  for (size_t i = 0; i < grid.src_x.size(); ++i) {
    csv.field(0.5 * (grid.ret_u[i] + 1.0))
        .field(0.5 * (grid.ret_v[i] + 1.0))
        .field(grid.src_x[i] / wm1)
        .field(grid.src_y[i] / hm1);
    csv.end_row();
  }
}

}  // namespace duostream
