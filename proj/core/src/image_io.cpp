#include "duostream/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "duostream/errors.hpp"

namespace duostream {

namespace {

unsigned char quantize(float v) {
  v = std::min(std::max(v, 0.0f), 1.0f);
  return static_cast<unsigned char>(std::lround(v * 255.0f));
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

// 3x5 digit glyphs, rows top to bottom, bits left to right.
constexpr unsigned char kDigits[10][5] = {
    {0b111, 0b101, 0b101, 0b101, 0b111},  // 0
    {0b010, 0b110, 0b010, 0b010, 0b111},  // 1
    {0b111, 0b001, 0b111, 0b100, 0b111},  // 2
    {0b111, 0b001, 0b111, 0b001, 0b111},  // 3
    {0b101, 0b101, 0b111, 0b001, 0b001},  // 4
    {0b111, 0b100, 0b111, 0b001, 0b111},  // 5
    {0b111, 0b100, 0b111, 0b101, 0b111},  // 6
    {0b111, 0b001, 0b010, 0b010, 0b010},  // 7
    {0b111, 0b101, 0b111, 0b101, 0b111},  // 8
    {0b111, 0b101, 0b111, 0b001, 0b111},  // 9
};

void set_px(Tensor& image, int x, int y, float r, float g, float b) {
  const int h = image.dim(1), w = image.dim(2);
  if (x < 0 || x >= w || y < 0 || y >= h) return;
  float* p = image.data();
  p[0 * h * w + y * w + x] = r;
  p[1 * h * w + y * w + x] = g;
  p[2 * h * w + y * w + x] = b;
}

}  // namespace

void write_pgm(const std::string& path, const std::vector<float>& gray,
               int width, int height) {
  if (static_cast<size_t>(width) * height != gray.size())
    throw DimensionError("write_pgm: size mismatch");
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
  if (!f) throw MissingInputError("write_pgm: cannot open " + path);
  std::fprintf(f.get(), "P5\n%d %d\n255\n", width, height);
  std::vector<unsigned char> row(static_cast<size_t>(width));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x)
      row[static_cast<size_t>(x)] = quantize(gray[static_cast<size_t>(y) * width + x]);
    std::fwrite(row.data(), 1, row.size(), f.get());
  }
}

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.shape().size() != 3 || image.dim(0) != 3)
    throw DimensionError("write_ppm: image must be [3,H,W]");
  const int h = image.dim(1), w = image.dim(2);
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
  if (!f) throw MissingInputError("write_ppm: cannot open " + path);
  std::fprintf(f.get(), "P6\n%d %d\n255\n", w, h);
  const float* p = image.data();
  std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      row[static_cast<size_t>(x) * 3 + 0] = quantize(p[0 * h * w + y * w + x]);
      row[static_cast<size_t>(x) * 3 + 1] = quantize(p[1 * h * w + y * w + x]);
      row[static_cast<size_t>(x) * 3 + 2] = quantize(p[2 * h * w + y * w + x]);
    }
    std::fwrite(row.data(), 1, row.size(), f.get());
  }
}

void draw_fixation_overlay(Tensor& image, const std::vector<PixelPoint>& pts) {
  if (image.shape().size() != 3 || image.dim(0) != 3)
    throw DimensionError("draw_fixation_overlay: image must be [3,H,W]");
  for (size_t i = 0; i < pts.size(); ++i) {
    const PixelPoint& pt = pts[i];
    // ring of radius 4
    for (int a = 0; a < 64; ++a) {
      const double t = a * (6.283185307179586 / 64.0);
      set_px(image, pt.x + static_cast<int>(std::lround(4 * std::cos(t))),
             pt.y + static_cast<int>(std::lround(4 * std::sin(t))), 1.0f, 0.2f,
             0.1f);
    }
    // step number, two digits max
    const int step = static_cast<int>(i + 1);
    const int digits[2] = {step >= 10 ? (step / 10) % 10 : -1, step % 10};
    int cx = pt.x + 6;
    for (int d : digits) {
      if (d < 0) continue;
      for (int ry = 0; ry < 5; ++ry)
        for (int rx = 0; rx < 3; ++rx)
          if (kDigits[d][ry] & (0b100 >> rx))
            set_px(image, cx + rx, pt.y - 2 + ry, 1.0f, 1.0f, 0.2f);
      cx += 4;
    }
  }
}

}  // namespace duostream
