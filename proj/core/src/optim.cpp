#include "duostream/optim.hpp"

#include <algorithm>
#include <cmath>

#include "duostream/errors.hpp"
#include "duostream/rng.hpp"

namespace duostream {

Adam::Adam(std::vector<Tensor> params, OptimizerConfig config)
    : params_(std::move(params)), config_(config) {
  if (config_.learning_rate <= 0.0f)
    throw ConfigError("adam: learning rate must be positive");
  if (config_.beta1 <= 0.0f || config_.beta1 >= 1.0f || config_.beta2 <= 0.0f ||
      config_.beta2 >= 1.0f)
    throw ConfigError("adam: betas must lie in (0,1)");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.size()), 0.0f);
    v_.emplace_back(static_cast<size_t>(p.size()), 0.0f);
  }
}

void Adam::step() {
  ++step_count_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  const float lr = config_.learning_rate;
  const float eps = config_.epsilon;
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    const float* g = p.grad();
    float* m = m_[pi].data();
    float* v = v_[pi].data();
    float* x = p.data();
    const int64_t n = p.size();
    for (int64_t i = 0; i < n; ++i) {
      const float gi = g ? g[i] : 0.0f;
      m[i] = static_cast<float>(b1) * m[i] + (1.0f - static_cast<float>(b1)) * gi;
      v[i] = static_cast<float>(b2) * v[i] + (1.0f - static_cast<float>(b2)) * gi * gi;
      if (!g) continue;
      const float mhat = static_cast<float>(m[i] / bc1);
      const float vhat = static_cast<float>(v[i] / bc2);
      x[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<Tensor>& params, double h,
                           int max_coords_per_param, uint64_t seed,
                           const CoordFilter& coord_filter) {
  GradCheckReport report;

  // Analytic pass.
  for (const auto& p : params) const_cast<Tensor&>(p).zero_grad();
  Tensor loss = loss_fn();
  loss.backward();
  std::vector<std::vector<float>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    const float* g = p.grad();
    analytic.emplace_back(g ? std::vector<float>(g, g + p.size())
                            : std::vector<float>(static_cast<size_t>(p.size()), 0.0f));
  }

  Rng rng(mix_seed(seed, 0x6772616463686bull));
  double rel_sum = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    const int64_t n = p.size();
    std::vector<int64_t> coords;
    if (n <= max_coords_per_param) {
      coords.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    } else {
      for (int i = 0; i < max_coords_per_param; ++i)
        coords.push_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(n))));
    }
    for (int64_t ci : coords) {
      if (coord_filter && !coord_filter(p, ci)) {
        ++report.skipped;
        continue;
      }
      float* x = p.data();
      const float orig = x[ci];
      x[ci] = static_cast<float>(orig + h);
      const double f_plus = [&] {
        NoGradGuard ng;
        return static_cast<double>(loss_fn().item());
      }();
      x[ci] = static_cast<float>(orig - h);
      const double f_minus = [&] {
        NoGradGuard ng;
        return static_cast<double>(loss_fn().item());
      }();
      x[ci] = orig;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double exact = analytic[pi][static_cast<size_t>(ci)];
      const double denom = std::abs(numeric) + std::abs(exact);
      if (denom < 1e-7) {
        ++report.skipped;
        continue;
      }
      const double rel = std::abs(numeric - exact) / denom;
      report.max_rel_error = std::max(report.max_rel_error, rel);
      rel_sum += rel;
      ++report.checked;
    }
  }
  if (report.checked > 0) report.mean_rel_error = rel_sum / report.checked;
  return report;
}

}  // namespace duostream
