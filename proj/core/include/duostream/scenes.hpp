#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "duostream/tensor.hpp"

namespace duostream {

class IniFile;

// Multi-object scenes: colored geometric shapes over a muted textured
// background. One object per scene gets a contrast boost and carries the
// largest share of the ground-truth saliency mass.
struct SceneConfig {
  int image_size = 96;
  int num_classes = 4;
  int min_objects = 1;
  int max_objects = 4;
  int saliency_grid = 16;
  double min_radius_frac = 0.11;  // of image size
  double max_radius_frac = 0.17;
  double muted_strength = 0.6;    // color strength of non-boosted objects
  double drift_amplitude = 3.0;   // pixels, for movie frames

  void validate() const;
};

SceneConfig scene_config_from_ini(const IniFile& ini);

struct ObjectSpec {
  int class_id = 0;
  double cx = 0.0, cy = 0.0;  // pixels
  double radius = 0.0;
  double strength = 1.0;  // 1 for the boosted object
  double contrast = 0.0;  // drives its saliency mass
};

struct SceneSpec {
  std::vector<ObjectSpec> objects;
  std::vector<float> bg_grid;  // coarse value-noise grid, 3 channels
  int bg_grid_size = 5;
};

struct SyntheticScene {
  SceneSpec spec;
  Tensor image;                    // [3,S,S]
  std::vector<float> labels;       // multi-hot over num_classes
  std::vector<float> saliency_gt;  // saliency_grid^2, sums to 1
  uint64_t seed = 0;
};

SyntheticScene gen_synthetic_scene(uint64_t seed, const SceneConfig& config);

// Re-renders a scene with the camera shifted by (dx,dy) pixels.
Tensor render_scene(const SceneSpec& spec, const SceneConfig& config,
                    double dx, double dy);

// Lazily generated dataset; scene i is deterministic in (base_seed, i).
struct SceneDataset {
  SceneConfig config;
  uint64_t base_seed = 0;
  int count = 0;

  SyntheticScene scene(int index) const;
};

// Disk cache as a TNSR file (image_NNNN / saliency_NNNN entries) plus a CSV
// with seeds and labels.
void save_scene_cache(const std::string& prefix, const SceneDataset& data);
std::vector<SyntheticScene> load_scene_cache(const std::string& prefix);

}  // namespace duostream
