#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "duostream/tensor.hpp"

namespace duostream {

struct OptimizerConfig {
  float learning_rate = 0.002f;
  float beta1 = 0.9f;
  float beta2 = 0.99f;
  float epsilon = 1e-8f;
};

// Bias-corrected Adam. Moment buffers are allocated per parameter on
// construction; the step counter advances by exactly one per step().
class Adam {
 public:
  Adam(std::vector<Tensor> params, OptimizerConfig config);

  // Applies one update from the accumulated gradients. Parameters without a
  // gradient buffer are left untouched but their moments still decay.
  void step();
  void zero_grad();

  int64_t step_count() const { return step_count_; }
  const OptimizerConfig& config() const { return config_; }
  void set_learning_rate(float lr) { config_.learning_rate = lr; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  OptimizerConfig config_;
  int64_t step_count_ = 0;
};

// Central-difference gradient verification. Runs the forward closure with the
// parameter coordinate nudged by +-h (float storage, double accumulation on
// the outside), compares against the analytic gradient, and reports the worst
// relative error over the probed coordinates.
struct GradCheckReport {
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  int checked = 0;
  int skipped = 0;  // coordinates with both gradients ~0
};

// `loss_fn` must rebuild the graph and return the scalar loss each call.
// Probes up to `max_coords_per_param` coordinates per parameter (all when the
// parameter is smaller). Coordinates are chosen deterministically from seed.
// `coord_filter`, when set, can exclude coordinates from the comparison set
// (e.g., relu inputs sitting exactly on the kink).
using CoordFilter = std::function<bool(const Tensor& param, int64_t coord)>;
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<Tensor>& params,
                           double h = 1e-3, int max_coords_per_param = 8,
                           uint64_t seed = 0,
                           const CoordFilter& coord_filter = nullptr);

}  // namespace duostream
