#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "duostream/retina.hpp"
#include "duostream/streams.hpp"
#include "duostream/tensor.hpp"

namespace duostream {

class Rng;

// Record of previously visited locations. The inhibition map over the
// saliency grid is relu(1 - sum of unit-peak Gaussians centered at the
// visits), so the map is exactly 0 at every prior fixation center.
struct IorState {
  std::vector<Vec2> fixations;  // normalized coordinates
  double sigma = 0.1;           // in normalized map units
  int grid = 16;
};

// Evaluated at the grid cell centers, row-major, values in [0,1].
std::vector<float> ior_map(const IorState& state);

// Elementwise product with renormalization; an all-zero product falls back
// to the uniform map.
std::vector<float> apply_ior(const std::vector<float>& saliency,
                             const std::vector<float>& ior);

// Multinomial draw over cells; returns the chosen cell's center in
// normalized image coordinates. The map must be finite and sum to 1 (1e-4).
Vec2 sample_fixation(const std::vector<float>& prob_map, int grid, Rng& rng);

enum class FixationMode { Learned, Random };

struct FixationTrace {
  std::vector<Vec2> fixations;                    // length num_fixations
  std::vector<std::vector<float>> saliency_maps;  // per step, pre-inhibition
  std::vector<std::vector<float>> ior_maps;       // per step
  uint64_t seed = 0;
};

void write_trace_csv(const std::string& path, const FixationTrace& trace);

struct LoopOptions {
  int num_fixations = 8;
  FixationMode mode = FixationMode::Learned;
  bool train_where = false;  // batch-stat BN + gradient graph
  bool train_what = false;
  bool use_ior = true;
  double ior_sigma = 0.1;
  uint64_t seed = 0;
  bool record_maps = true;
};

// One loop pass over a batch of images (lockstep across the batch, sequential
// over fixations). `where` may be null only in Random mode; `what` may be
// null when only gaze artifacts are needed. Per-image randomness comes from
// substreams of opts.seed, so results do not depend on batch grouping.
struct LoopResult {
  std::vector<FixationTrace> traces;
  SceneRepresentation representation;        // final (undefined without `what`)
  std::vector<Tensor> step_saliency;         // per step [N,1,g,g] (with `where`)
  std::vector<SceneRepresentation> step_reps;  // per step (with `what`)
};

LoopResult run_fixation_loop(const std::vector<Tensor>& images, Stream* where,
                             Stream* what, const LoopOptions& opts);

// Single-image convenience wrapper.
LoopResult run_fixation_loop(const Tensor& image, Stream* where, Stream* what,
                             const LoopOptions& opts);

}  // namespace duostream
