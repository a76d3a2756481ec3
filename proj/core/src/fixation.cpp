#include "duostream/fixation.hpp"

#include <cmath>

#include "duostream/csv.hpp"
#include "duostream/errors.hpp"
#include "duostream/ops.hpp"
#include "duostream/rng.hpp"

namespace duostream {

std::vector<float> ior_map(const IorState& state) {
  if (state.sigma <= 0.0) throw DimensionError("ior_map: sigma must be positive");
  const int g = state.grid;
  std::vector<float> out(static_cast<size_t>(g) * g, 1.0f);
  if (state.fixations.empty()) return out;
  const double inv2s2 = 1.0 / (2.0 * state.sigma * state.sigma);
  for (int iy = 0; iy < g; ++iy) {
    const double cy = (iy + 0.5) / g;
    for (int ix = 0; ix < g; ++ix) {
      const double cx = (ix + 0.5) / g;
      double sum = 0.0;
      for (const Vec2& l : state.fixations) {
        const double dx = cx - l.x, dy = cy - l.y;
        sum += std::exp(-(dx * dx + dy * dy) * inv2s2);
      }
      const double v = 1.0 - sum;
      out[static_cast<size_t>(iy) * g + ix] = v > 0.0 ? static_cast<float>(v) : 0.0f;
    }
  }
  return out;
}

std::vector<float> apply_ior(const std::vector<float>& saliency,
                             const std::vector<float>& ior) {
  if (saliency.size() != ior.size())
    throw DimensionError("apply_ior: map sizes differ");
  double pre = 0.0;
  for (float v : saliency) pre += v;
  if (std::abs(pre - 1.0) > 1e-4)
    throw DimensionError("apply_ior: saliency must sum to 1 within 1e-4");

  std::vector<float> out(saliency.size());
  double sum = 0.0;
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = saliency[i] * ior[i];
    sum += out[i];
  }
  if (sum == 0.0) {
    const float u = 1.0f / static_cast<float>(out.size());
    std::fill(out.begin(), out.end(), u);
    return out;
  }
  const float inv = static_cast<float>(1.0 / sum);
  for (auto& v : out) v *= inv;
  return out;
}

Vec2 sample_fixation(const std::vector<float>& prob_map, int grid, Rng& rng) {
  if (prob_map.size() != static_cast<size_t>(grid) * grid)
    throw DimensionError("sample_fixation: map size does not match grid");
  double sum = 0.0;
  for (float v : prob_map) {
    if (!std::isfinite(v)) throw NumericError("sample_fixation: non-finite map");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-4)
    throw DimensionError("sample_fixation: map must sum to 1 within 1e-4");

  const double u = rng.uniform() * sum;
  double acc = 0.0;
  size_t chosen = prob_map.size() - 1;
  for (size_t i = 0; i < prob_map.size(); ++i) {
    acc += prob_map[i];
    if (u < acc) {
      chosen = i;
      break;
    }
  }
  const int iy = static_cast<int>(chosen) / grid;
  const int ix = static_cast<int>(chosen) % grid;
  return {(ix + 0.5) / grid, (iy + 0.5) / grid};
}

void write_trace_csv(const std::string& path, const FixationTrace& trace) {
  CsvWriter csv(path, {"step", "x", "y"});
  for (size_t i = 0; i < trace.fixations.size(); ++i) {
    csv.field(static_cast<int64_t>(i + 1))
        .field(trace.fixations[i].x)
        .field(trace.fixations[i].y);
    csv.end_row();
  }
}

namespace {

std::vector<float> tensor_map(const Tensor& maps, int sample, int cells) {
  const float* p = maps.data() + static_cast<int64_t>(sample) * cells;
  return std::vector<float>(p, p + cells);
}

std::vector<float> uniform_map(int cells) {
  return std::vector<float>(static_cast<size_t>(cells), 1.0f / cells);
}

std::vector<float> ones_map(int cells) {
  return std::vector<float>(static_cast<size_t>(cells), 1.0f);
}

}  // namespace

LoopResult run_fixation_loop(const std::vector<Tensor>& images, Stream* where,
                             Stream* what, const LoopOptions& opts) {
  if (images.empty()) throw DimensionError("fixation loop: no images");
  if (!where && opts.mode == FixationMode::Learned)
    throw DimensionError("fixation loop: learned mode needs a saliency stream");
  const int n = static_cast<int>(images.size());
  const int g = where ? where->config().saliency_grid
                      : (what ? what->config().saliency_grid : 16);
  const int cells = g * g;
  const int height = images[0].dim(1), width = images[0].dim(2);

  LoopResult result;
  result.traces.resize(static_cast<size_t>(n));
  std::vector<Rng> rngs;
  std::vector<IorState> ior_states(static_cast<size_t>(n));
  std::vector<Vec2> current(static_cast<size_t>(n), Vec2{0.5, 0.5});
  for (int i = 0; i < n; ++i) {
    rngs.emplace_back(mix_seed(opts.seed, static_cast<uint64_t>(i)));
    ior_states[static_cast<size_t>(i)].sigma = opts.ior_sigma;
    ior_states[static_cast<size_t>(i)].grid = g;
    result.traces[static_cast<size_t>(i)].seed =
        mix_seed(opts.seed, static_cast<uint64_t>(i));
  }

  SceneRepresentation rep;
  if (what) rep = what->initial_representation(n);

  auto sample_batch = [&](Stream& stream) {
    std::vector<Tensor> views;
    views.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const SamplingGrid grid = build_sampling_grid(
          stream.retina_params(current[static_cast<size_t>(i)]), width, height);
      views.push_back(sample_image(images[static_cast<size_t>(i)], grid));
    }
    return stack0(views);
  };

  for (int step = 0; step < opts.num_fixations; ++step) {
    for (int i = 0; i < n; ++i)
      result.traces[static_cast<size_t>(i)].fixations.push_back(
          current[static_cast<size_t>(i)]);

    Tensor saliency;  // [N,1,g,g]
    if (where) {
      if (opts.train_where) {
        Tensor views = sample_batch(*where);
        saliency = where->saliency_map(where->backbone_forward(views, true), true);
      } else {
        NoGradGuard ng;
        Tensor views = sample_batch(*where);
        saliency = where->saliency_map(where->backbone_forward(views, false), false);
      }
      result.step_saliency.push_back(saliency);
    }

    if (what) {
      if (opts.train_what) {
        Tensor views = sample_batch(*what);
        rep = what->recognize(what->backbone_forward(views, true)[3], rep);
      } else {
        NoGradGuard ng;
        Tensor views = sample_batch(*what);
        rep = what->recognize(what->backbone_forward(views, false)[3], rep);
      }
      result.step_reps.push_back(rep);
    }

    // choose the next fixation
    for (int i = 0; i < n; ++i) {
      IorState& state = ior_states[static_cast<size_t>(i)];
      FixationTrace& trace = result.traces[static_cast<size_t>(i)];
      std::vector<float> sal = where ? tensor_map(saliency, i, cells)
                                     : uniform_map(cells);
      // the current location counts as visited before the next draw
      state.fixations.push_back(current[static_cast<size_t>(i)]);
      std::vector<float> inhibition =
          opts.use_ior ? ior_map(state) : ones_map(cells);
      if (opts.record_maps) {
        trace.saliency_maps.push_back(sal);
        trace.ior_maps.push_back(inhibition);
      }
      if (step + 1 >= opts.num_fixations) continue;
      Rng& rng = rngs[static_cast<size_t>(i)];
      if (opts.mode == FixationMode::Random) {
        current[static_cast<size_t>(i)] = sample_fixation(uniform_map(cells), g, rng);
      } else {
        current[static_cast<size_t>(i)] =
            sample_fixation(apply_ior(sal, inhibition), g, rng);
      }
    }
  }

  result.representation = rep;
  return result;
}

LoopResult run_fixation_loop(const Tensor& image, Stream* where, Stream* what,
                             const LoopOptions& opts) {
  return run_fixation_loop(std::vector<Tensor>{image}, where, what, opts);
}

}  // namespace duostream
