#include "duostream/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "duostream/config.hpp"
#include "duostream/csv.hpp"
#include "duostream/errors.hpp"
#include "duostream/rng.hpp"
#include "duostream/tnsr.hpp"

namespace duostream {

namespace {

struct Color {
  float r, g, b;
};

constexpr Color kPalette[8] = {
    {0.90f, 0.12f, 0.10f},  // red
    {0.10f, 0.78f, 0.15f},  // green
    {0.15f, 0.25f, 0.92f},  // blue
    {0.95f, 0.85f, 0.10f},  // yellow
    {0.85f, 0.12f, 0.80f},  // magenta
    {0.10f, 0.80f, 0.85f},  // cyan
    {0.95f, 0.55f, 0.10f},  // orange
    {0.55f, 0.15f, 0.90f},  // violet
};
constexpr int kShapeCount = 6;  // circle, square, triangle, ring, diamond, cross
constexpr float kBgMean = 0.45f;

Color class_color(int class_id) { return kPalette[class_id % 8]; }
int class_shape(int class_id) { return class_id % kShapeCount; }

// coverage of a shape at (x,y) relative to its center, in [0,1]
float shape_alpha(int shape, double x, double y, double r) {
  const double d = std::hypot(x, y);
  auto edge = [](double signed_dist) {
    // ~1px anti-aliased boundary
    return static_cast<float>(std::clamp(0.5 - signed_dist, 0.0, 1.0));
  };
  switch (shape) {
    case 0:  // circle
      return edge(d - r);
    case 1:  // square
      return edge(std::max(std::abs(x), std::abs(y)) - r * 0.82);
    case 2: {  // upward triangle
      const double h = r * 0.95;
      const double fy = y + h * 0.5;
      if (fy < 0.0) return 0.0f;
      const double half_w = (fy / (1.5 * h)) * 1.15 * h;
      return edge(std::abs(x) - half_w) * edge(fy - 1.5 * h);
    }
    case 3:  // ring
      return edge(std::abs(d - r * 0.75) - r * 0.28);
    case 4:  // diamond
      return edge((std::abs(x) + std::abs(y)) - r);
    case 5: {  // cross
      const double bar = r * 0.36;
      const float v = edge(std::max(std::abs(x) - bar, std::abs(y) - r));
      const float h2 = edge(std::max(std::abs(y) - bar, std::abs(x) - r));
      return std::max(v, h2);
    }
    default:
      return 0.0f;
  }
}

float bg_value(const SceneSpec& spec, int channel, double x, double y,
               int image_size) {
  const int g = spec.bg_grid_size;
  // value noise on a coarse wrapping grid so camera drift stays seamless
  double u = (x / image_size) * g;
  double v = (y / image_size) * g;
  u -= std::floor(u / g) * g;
  v -= std::floor(v / g) * g;
  const int x0 = static_cast<int>(u) % g, y0 = static_cast<int>(v) % g;
  const int x1 = (x0 + 1) % g, y1 = (y0 + 1) % g;
  const double fx = u - std::floor(u), fy = v - std::floor(v);
  auto at = [&](int yy, int xx) {
    return spec.bg_grid[static_cast<size_t>(channel) * g * g + yy * g + xx];
  };
  return static_cast<float>((1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
                            fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1)));
}

}  // namespace

void SceneConfig::validate() const {
  if (image_size < 32) throw ConfigError("scene: image_size must be >= 32");
  if (num_classes < 2) throw ConfigError("scene: at least 2 classes required");
  if (num_classes > 48) throw ConfigError("scene: at most 48 classes supported");
  if (min_objects < 1 || max_objects < min_objects)
    throw ConfigError("scene: bad object count range");
  if (max_objects > 4) throw ConfigError("scene: at most 4 objects per scene");
  if (max_objects > num_classes)
    throw ConfigError("scene: max_objects cannot exceed num_classes");
  if (saliency_grid < 4) throw ConfigError("scene: saliency grid too small");
}

SceneConfig scene_config_from_ini(const IniFile& ini) {
  SceneConfig cfg;
  cfg.image_size = static_cast<int>(ini.get_int_or("data", "image_size", 96));
  cfg.num_classes = static_cast<int>(ini.get_int_or("model", "num_classes", 4));
  cfg.min_objects = static_cast<int>(ini.get_int_or("data", "min_objects", 1));
  cfg.max_objects = static_cast<int>(ini.get_int_or(
      "data", "max_objects", std::min<int64_t>(4, cfg.num_classes)));
  cfg.drift_amplitude = ini.get_double_or("data", "drift_amplitude", 3.0);
  cfg.validate();
  return cfg;
}

Tensor render_scene(const SceneSpec& spec, const SceneConfig& config, double dx,
                    double dy) {
  const int s = config.image_size;
  Tensor image = Tensor::zeros({3, s, s});
  float* p = image.data();
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      // camera shift: sample the scene at shifted world coordinates
      const double wx = x + dx, wy = y + dy;
      float rgb[3];
      for (int c = 0; c < 3; ++c) rgb[c] = bg_value(spec, c, wx, wy, s);
      for (const ObjectSpec& obj : spec.objects) {
        const float a = shape_alpha(class_shape(obj.class_id), wx - obj.cx,
                                    wy - obj.cy, obj.radius);
        if (a <= 0.0f) continue;
        const Color col = class_color(obj.class_id);
        const float cols[3] = {col.r, col.g, col.b};
        const float k = a * static_cast<float>(obj.strength);
        for (int c = 0; c < 3; ++c) rgb[c] = (1.0f - k) * rgb[c] + k * cols[c];
      }
      for (int c = 0; c < 3; ++c) p[c * s * s + y * s + x] = rgb[c];
    }
  }
  return image;
}

SyntheticScene gen_synthetic_scene(uint64_t seed, const SceneConfig& config) {
  config.validate();
  Rng rng(mix_seed(seed, 0x7363656e65ull));
  SyntheticScene scene;
  scene.seed = seed;

  const int g = 5;
  scene.spec.bg_grid_size = g;
  scene.spec.bg_grid.resize(3u * g * g);
  for (auto& v : scene.spec.bg_grid)
    v = static_cast<float>(rng.uniform(kBgMean - 0.10, kBgMean + 0.10));

  // distinct classes for this scene
  const int count = config.min_objects +
                    static_cast<int>(rng.below(static_cast<uint64_t>(
                        config.max_objects - config.min_objects + 1)));
  std::vector<int> classes(static_cast<size_t>(config.num_classes));
  std::iota(classes.begin(), classes.end(), 0);
  for (size_t i = classes.size() - 1; i > 0; --i)
    std::swap(classes[i], classes[static_cast<size_t>(rng.below(i + 1))]);
  classes.resize(static_cast<size_t>(count));

  const int s = config.image_size;
  const double cell = static_cast<double>(s) / config.saliency_grid;
  const double min_sep = 3.0 * cell;  // keeps saliency peaks separable

  for (int i = 0; i < count; ++i) {
    ObjectSpec obj;
    obj.class_id = classes[static_cast<size_t>(i)];
    obj.strength = (i == 0) ? 1.0 : config.muted_strength;
    double radius =
        rng.uniform(config.min_radius_frac * s, config.max_radius_frac * s);
    bool placed = false;
    for (int round = 0; round < 6 && !placed; ++round) {
      for (int attempt = 0; attempt < 120 && !placed; ++attempt) {
        const double margin = radius + 3.0;
        const double cx = rng.uniform(margin, s - margin);
        const double cy = rng.uniform(margin, s - margin);
        bool ok = true;
        for (const ObjectSpec& other : scene.spec.objects) {
          const double need = std::max(radius + other.radius + 2.0, min_sep);
          if (std::hypot(cx - other.cx, cy - other.cy) < need) {
            ok = false;
            break;
          }
        }
        if (ok) {
          obj.cx = cx;
          obj.cy = cy;
          obj.radius = radius;
          placed = true;
        }
      }
      if (!placed) radius = std::max(radius * 0.85, 0.07 * s);
    }
    if (!placed) continue;  // crowded draw; drop the object
    const Color col = class_color(obj.class_id);
    obj.contrast = obj.strength *
                   (std::abs(col.r - kBgMean) + std::abs(col.g - kBgMean) +
                    std::abs(col.b - kBgMean)) /
                   3.0;
    scene.spec.objects.push_back(obj);
  }

  scene.labels.assign(static_cast<size_t>(config.num_classes), 0.0f);
  for (const ObjectSpec& obj : scene.spec.objects)
    scene.labels[static_cast<size_t>(obj.class_id)] = 1.0f;

  // per-object Gaussians weighted by contrast, lightly blurred, normalized
  const int sg = config.saliency_grid;
  std::vector<double> raw(static_cast<size_t>(sg) * sg, 0.0);
  for (const ObjectSpec& obj : scene.spec.objects) {
    const double ox = obj.cx / cell, oy = obj.cy / cell;
    const double sigma = std::max(0.8, 0.55 * obj.radius / cell);
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int iy = 0; iy < sg; ++iy)
      for (int ix = 0; ix < sg; ++ix) {
        const double dxc = (ix + 0.5) - ox, dyc = (iy + 0.5) - oy;
        raw[static_cast<size_t>(iy) * sg + ix] +=
            obj.contrast * std::exp(-(dxc * dxc + dyc * dyc) * inv2s2);
      }
  }
  const double w1 = std::exp(-0.5 / 0.5), w2 = std::exp(-1.0 / 0.5);
  std::vector<double> blurred(raw.size(), 0.0);
  for (int iy = 0; iy < sg; ++iy)
    for (int ix = 0; ix < sg; ++ix) {
      double acc = 0.0;
      for (int oy = -1; oy <= 1; ++oy)
        for (int ox = -1; ox <= 1; ++ox) {
          const int yy = iy + oy, xx = ix + ox;
          if (yy < 0 || yy >= sg || xx < 0 || xx >= sg) continue;
          const double w = (oy == 0 && ox == 0) ? 1.0
                           : (oy == 0 || ox == 0) ? w1
                                                  : w2;
          acc += w * raw[static_cast<size_t>(yy) * sg + xx];
        }
      blurred[static_cast<size_t>(iy) * sg + ix] = acc;
    }
  const double total = std::accumulate(blurred.begin(), blurred.end(), 0.0);
  scene.saliency_gt.resize(blurred.size());
  if (total <= 0.0) {
    std::fill(scene.saliency_gt.begin(), scene.saliency_gt.end(),
              1.0f / static_cast<float>(blurred.size()));
  } else {
    for (size_t i = 0; i < blurred.size(); ++i)
      scene.saliency_gt[i] = static_cast<float>(blurred[i] / total);
  }
  // exact unit sum in float
  double fsum = 0.0;
  for (float v : scene.saliency_gt) fsum += v;
  const float inv = static_cast<float>(1.0 / fsum);
  for (auto& v : scene.saliency_gt) v *= inv;

  scene.image = render_scene(scene.spec, config, 0.0, 0.0);
  return scene;
}

SyntheticScene SceneDataset::scene(int index) const {
  return gen_synthetic_scene(mix_seed(base_seed, static_cast<uint64_t>(index)),
                             config);
}

void save_scene_cache(const std::string& prefix, const SceneDataset& data) {
  TnsrFile file;
  CsvWriter csv(prefix + ".csv", {"index", "seed", "labels"});
  char name[32];
  for (int i = 0; i < data.count; ++i) {
    SyntheticScene s = data.scene(i);
    std::snprintf(name, sizeof(name), "image_%05d", i);
    file[name] = tnsr_from_tensor(s.image);
    std::snprintf(name, sizeof(name), "saliency_%05d", i);
    TnsrEntry sal;
    sal.shape = {data.config.saliency_grid, data.config.saliency_grid};
    sal.data = s.saliency_gt;
    file[name] = std::move(sal);
    std::string labels;
    for (size_t k = 0; k < s.labels.size(); ++k) {
      if (k) labels += ';';
      labels += s.labels[k] > 0.5f ? '1' : '0';
    }
    csv.field(static_cast<int64_t>(i))
        .field(static_cast<int64_t>(s.seed))
        .field(labels);
    csv.end_row();
  }
  tnsr_write(prefix + ".tnsr", file);
}

std::vector<SyntheticScene> load_scene_cache(const std::string& prefix) {
  TnsrFile file = tnsr_read(prefix + ".tnsr");
  auto rows = csv_read(prefix + ".csv");
  std::vector<SyntheticScene> out;
  char name[32];
  for (size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() < 3) continue;
    const int i = std::stoi(rows[r][0]);
    SyntheticScene s;
    s.seed = static_cast<uint64_t>(std::stoll(rows[r][1]));
    std::snprintf(name, sizeof(name), "image_%05d", i);
    s.image = tensor_from_tnsr(file.at(name));
    std::snprintf(name, sizeof(name), "saliency_%05d", i);
    s.saliency_gt = file.at(name).data;
    for (char c : rows[r][2])
      if (c == '0' || c == '1') s.labels.push_back(c == '1' ? 1.0f : 0.0f);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace duostream
