#include "duostream/synthbrain.hpp"

#include <algorithm>
#include <cmath>

#include "duostream/config.hpp"
#include "duostream/errors.hpp"
#include "duostream/ops.hpp"
#include "duostream/rng.hpp"

namespace duostream {

SessionConfig session_config_from_ini(const IniFile& ini) {
  SessionConfig cfg;
  cfg.scene = scene_config_from_ini(ini);
  cfg.tr = ini.get_double_or("session", "tr", 2.5);
  cfg.frames_per_tr = static_cast<int>(ini.get_int_or("session", "frames_per_tr", 8));
  if (ini.has("session", "n_volumes")) {
    cfg.n_volumes = static_cast<int>(ini.get_int("session", "n_volumes"));
  } else {
    const double duration = ini.get_double_or("session", "duration_s", 720.0);
    cfg.n_volumes = static_cast<int>(duration / cfg.tr);
  }
  if (cfg.n_volumes < 8) throw ConfigError("session: too few volumes");
  if (cfg.frames_per_tr < 1) throw ConfigError("session: frames_per_tr must be >= 1");
  return cfg;
}

SyntheticScene MovieSession::scene_for(int volume) const {
  return gen_synthetic_scene(
      mix_seed(config.seed, 0x6d6f766965ull + static_cast<uint64_t>(volume)),
      config.scene);
}

Tensor MovieSession::frame(int volume, int phase) const {
  const SyntheticScene scene = scene_for(volume);
  Rng rng(mix_seed(config.seed, 0x6472696674ull + static_cast<uint64_t>(volume)));
  const double theta = rng.uniform(0.0, 6.283185307179586);
  const double amp = config.scene.drift_amplitude;
  // linear drift through the scene over its frames, zero-mean
  const double s = (phase + 0.5) / config.frames_per_tr - 0.5;
  return render_scene(scene.spec, config.scene, amp * s * std::cos(theta),
                      amp * s * std::sin(theta));
}

namespace {

// average-pool a [C,H,W] slice of a batched tensor down to 2x2 per channel
void pool_2x2_into(const Tensor& maps, int sample, std::vector<float>& dst) {
  const int c = maps.dim(1), h = maps.dim(2), w = maps.dim(3);
  const float* base = maps.data() + static_cast<int64_t>(sample) * c * h * w;
  for (int ci = 0; ci < c; ++ci) {
    const float* plane = base + static_cast<int64_t>(ci) * h * w;
    for (int py = 0; py < 2; ++py)
      for (int px = 0; px < 2; ++px) {
        const int y0 = py * h / 2, y1 = (py + 1) * h / 2;
        const int x0 = px * w / 2, x1 = (px + 1) * w / 2;
        double acc = 0.0;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) acc += plane[y * w + x];
        dst.push_back(static_cast<float>(acc / ((y1 - y0) * (x1 - x0))));
      }
  }
}

struct LayerLayout {
  std::vector<std::string> ids;
  std::vector<int> units;
};

LayerLayout layout_for(const Stream& stream, bool mid_late_only) {
  LayerLayout lay;
  const auto& w = stream.config().widths;
  const int first = mid_late_only ? 2 : 0;
  for (int b = first; b < 4; ++b) {
    lay.ids.push_back("b" + std::to_string(b + 1));
    lay.units.push_back(w[static_cast<size_t>(b)] * 4);
  }
  lay.ids.push_back("head");
  if (stream.config().objective == Objective::Saliency)
    lay.units.push_back(stream.config().saliency_grid * stream.config().saliency_grid);
  else
    lay.units.push_back(stream.config().gru_hidden + stream.config().num_classes);
  return lay;
}

}  // namespace

ExtractResult extract_session_features(const MovieSession& session,
                                       Stream* driver,
                                       const std::vector<ExtractSpec>& specs,
                                       FixationMode mode, double ior_sigma,
                                       uint64_t seed, int batch_volumes) {
  if (mode == FixationMode::Learned) {
    if (!driver) throw DimensionError("extract: learned mode needs a driver stream");
    if (driver->config().objective != Objective::Saliency)
      throw DimensionError("extract: driver must be a saliency stream");
  }
  NoGradGuard ng;
  const SessionConfig& cfg = session.config;
  const int frames = cfg.total_frames();
  const int fpt = cfg.frames_per_tr;
  const int sal_grid = driver ? driver->config().saliency_grid : 16;
  const int cells = sal_grid * sal_grid;

  ExtractResult result;
  result.fixations.assign(static_cast<size_t>(cfg.n_volumes), {});
  result.features.resize(specs.size());
  std::vector<LayerLayout> layouts;
  for (size_t s = 0; s < specs.size(); ++s) {
    layouts.push_back(layout_for(*specs[s].stream, specs[s].mid_late_only));
    FeatureTimeseries& ft = result.features[s];
    ft.frame_rate = cfg.frame_rate();
    ft.time_steps = frames;
    for (size_t l = 0; l < layouts[s].ids.size(); ++l) {
      LayerFeatures layer;
      layer.id = specs[s].name + "." + layouts[s].ids[l];
      layer.units = layouts[s].units[l];
      layer.data.assign(static_cast<size_t>(frames) * layer.units, 0.0f);
      ft.layers.push_back(std::move(layer));
    }
  }

  for (int v0 = 0; v0 < cfg.n_volumes; v0 += batch_volumes) {
    const int v1 = std::min(cfg.n_volumes, v0 + batch_volumes);
    const int n = v1 - v0;
    std::vector<Rng> rngs;
    std::vector<IorState> ior(static_cast<size_t>(n));
    std::vector<Vec2> fix(static_cast<size_t>(n), Vec2{0.5, 0.5});
    for (int i = 0; i < n; ++i) {
      rngs.emplace_back(mix_seed(seed, 0x6669786174ull + static_cast<uint64_t>(v0 + i)));
      ior[static_cast<size_t>(i)].sigma = ior_sigma;
      ior[static_cast<size_t>(i)].grid = sal_grid;
    }
    std::vector<SceneRepresentation> reps(specs.size());
    for (size_t s = 0; s < specs.size(); ++s)
      if (specs[s].stream->config().objective == Objective::Recognition)
        reps[s] = specs[s].stream->initial_representation(n);

    for (int phase = 0; phase < fpt; ++phase) {
      const int t_base = (v0)*fpt + phase;
      std::vector<Tensor> images;
      images.reserve(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) images.push_back(session.frame(v0 + i, phase));

      auto batch_views = [&](const Stream& stream) {
        std::vector<Tensor> views;
        views.reserve(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
          const SamplingGrid grid = build_sampling_grid(
              stream.retina_params(fix[static_cast<size_t>(i)]),
              cfg.scene.image_size, cfg.scene.image_size);
          views.push_back(sample_image(images[static_cast<size_t>(i)], grid));
        }
        return stack0(views);
      };

      Tensor driver_saliency;
      bool driver_recorded = false;
      for (size_t s = 0; s < specs.size(); ++s) {
        Stream& stream = *specs[s].stream;
        const auto feats = stream.backbone_forward(batch_views(stream), false);
        Tensor head;
        if (stream.config().objective == Objective::Saliency) {
          head = stream.saliency_map(feats, false);
          if (specs[s].stream == driver) {
            driver_saliency = head;
            driver_recorded = true;
          }
        } else {
          reps[s] = stream.recognize(feats[3], reps[s]);
        }
        // write features for frame (v0+i)*fpt + phase
        FeatureTimeseries& ft = result.features[s];
        const int first_block = specs[s].mid_late_only ? 2 : 0;
        for (int i = 0; i < n; ++i) {
          const int t = (v0 + i) * fpt + phase;
          size_t layer_idx = 0;
          for (int b = first_block; b < 4; ++b, ++layer_idx) {
            std::vector<float> pooled;
            pooled.reserve(static_cast<size_t>(ft.layers[layer_idx].units));
            pool_2x2_into(feats[static_cast<size_t>(b)], i, pooled);
            std::copy(pooled.begin(), pooled.end(),
                      ft.layers[layer_idx].data.begin() +
                          static_cast<size_t>(t) * ft.layers[layer_idx].units);
          }
          LayerFeatures& head_layer = ft.layers[layer_idx];
          float* dst = head_layer.data.data() +
                       static_cast<size_t>(t) * head_layer.units;
          if (stream.config().objective == Objective::Saliency) {
            const float* src = head.data() + static_cast<int64_t>(i) * cells;
            std::copy(src, src + cells, dst);
          } else {
            const Tensor& hidden = reps[s].hidden;
            const Tensor& logits = reps[s].logits;
            const int hd = hidden.dim(1), kd = logits.dim(1);
            std::copy(hidden.data() + static_cast<int64_t>(i) * hd,
                      hidden.data() + static_cast<int64_t>(i + 1) * hd, dst);
            std::copy(logits.data() + static_cast<int64_t>(i) * kd,
                      logits.data() + static_cast<int64_t>(i + 1) * kd, dst + hd);
          }
        }
      }
      if (driver && !driver_recorded) {
        const auto feats = driver->backbone_forward(batch_views(*driver), false);
        driver_saliency = driver->saliency_map(feats, false);
      }
      (void)t_base;

      // advance fixations within the scene
      for (int i = 0; i < n; ++i) {
        result.fixations[static_cast<size_t>(v0 + i)].push_back(
            fix[static_cast<size_t>(i)]);
        IorState& state = ior[static_cast<size_t>(i)];
        state.fixations.push_back(fix[static_cast<size_t>(i)]);
        if (phase + 1 >= fpt) continue;
        Rng& rng = rngs[static_cast<size_t>(i)];
        if (mode == FixationMode::Random) {
          std::vector<float> uniform(static_cast<size_t>(cells), 1.0f / cells);
          fix[static_cast<size_t>(i)] = sample_fixation(uniform, sal_grid, rng);
        } else {
          const float* src =
              driver_saliency.data() + static_cast<int64_t>(i) * cells;
          std::vector<float> sal(src, src + cells);
          fix[static_cast<size_t>(i)] =
              sample_fixation(apply_ior(sal, ior_map(state)), sal_grid, rng);
        }
      }
    }
  }
  return result;
}

TeacherVoxelConfig teacher_voxel_config_from_ini(const IniFile& ini) {
  TeacherVoxelConfig cfg;
  cfg.rois_per_class = static_cast<int>(ini.get_int_or("voxels", "rois_per_class", 4));
  cfg.voxels_per_roi = static_cast<int>(ini.get_int_or("voxels", "voxels_per_roi", 25));
  cfg.noise_voxels = static_cast<int>(ini.get_int_or("voxels", "noise_voxels", 40));
  cfg.mix_features = static_cast<int>(ini.get_int_or("voxels", "mix_features", 12));
  cfg.snr = ini.get_double_or("voxels", "snr", 2.5);
  return cfg;
}

namespace {

// features flattened to [time x units], each unit z-scored
struct FlatFeatures {
  int time = 0;
  int units = 0;
  std::vector<double> values;
};

FlatFeatures flatten_standardize(const FeatureTimeseries& ft) {
  ft.validate();
  FlatFeatures flat;
  flat.time = ft.time_steps;
  for (const auto& l : ft.layers) flat.units += l.units;
  flat.values.assign(static_cast<size_t>(flat.time) * flat.units, 0.0);
  int col = 0;
  for (const auto& l : ft.layers) {
    for (int u = 0; u < l.units; ++u) {
      double mean = 0.0;
      for (int t = 0; t < flat.time; ++t)
        mean += l.data[static_cast<size_t>(t) * l.units + u];
      mean /= flat.time;
      double var = 0.0;
      for (int t = 0; t < flat.time; ++t) {
        const double d = l.data[static_cast<size_t>(t) * l.units + u] - mean;
        var += d * d;
      }
      var /= flat.time;
      const double inv = var > 1e-12 ? 1.0 / std::sqrt(var) : 0.0;
      for (int t = 0; t < flat.time; ++t)
        flat.values[static_cast<size_t>(t) * flat.units + col] =
            (l.data[static_cast<size_t>(t) * l.units + u] - mean) * inv;
      ++col;
    }
  }
  return flat;
}

std::vector<double> zscore(std::vector<double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  const double inv = var > 1e-30 ? 1.0 / std::sqrt(var) : 0.0;
  for (auto& x : v) x = (x - mean) * inv;
  return v;
}

}  // namespace

TeacherVoxelSet make_teacher_voxels(const FeatureTimeseries& dorsal_teacher,
                                    const FeatureTimeseries& ventral_teacher,
                                    const TeacherVoxelConfig& config, double tr) {
  if (config.snr <= 0.0)
    throw DimensionError("make_teacher_voxels: snr must be positive");
  if (dorsal_teacher.time_steps != ventral_teacher.time_steps)
    throw DimensionError("make_teacher_voxels: teachers disagree on time axis");

  const FlatFeatures dorsal = flatten_standardize(dorsal_teacher);
  const FlatFeatures ventral = flatten_standardize(ventral_teacher);
  const double frame_rate = dorsal_teacher.frame_rate;
  const int fpt = static_cast<int>(std::lround(frame_rate * tr));
  const int n_volumes = dorsal.time / fpt;

  HrfParams hrf;
  hrf.dt = 1.0 / frame_rate;
  const std::vector<double> kernel = hrf_kernel(hrf);

  TeacherVoxelSet set;
  set.snr = config.snr;
  set.seed = config.seed;
  set.n_volumes = n_volumes;
  const int signal_vox = 2 * config.rois_per_class * config.voxels_per_roi;
  set.n_vox = signal_vox + config.noise_voxels;
  set.values.assign(static_cast<size_t>(n_volumes) * set.n_vox, 0.0f);
  set.labels.resize(static_cast<size_t>(set.n_vox));
  set.roi_ids.assign(static_cast<size_t>(set.n_vox), -1);

  Rng rng(mix_seed(config.seed, 0x766f78656c73ull));
  int voxel = 0;
  for (int cls = 0; cls < 2; ++cls) {
    const FlatFeatures& flat = cls == 0 ? dorsal : ventral;
    const char* label = cls == 0 ? "dorsal" : "ventral";
    for (int roi = 0; roi < config.rois_per_class; ++roi) {
      const int roi_id = cls * config.rois_per_class + roi;
      // ROI-shared sparse support and base weights
      std::vector<int> support(static_cast<size_t>(config.mix_features));
      std::vector<double> base(static_cast<size_t>(config.mix_features));
      for (int j = 0; j < config.mix_features; ++j) {
        support[static_cast<size_t>(j)] =
            static_cast<int>(rng.below(static_cast<uint64_t>(flat.units)));
        base[static_cast<size_t>(j)] = std::abs(rng.normal()) + 0.15;
      }
      for (int v = 0; v < config.voxels_per_roi; ++v, ++voxel) {
        std::vector<double> drive(static_cast<size_t>(flat.time), 0.0);
        for (int j = 0; j < config.mix_features; ++j) {
          const double w =
              base[static_cast<size_t>(j)] * (1.0 + 0.35 * std::abs(rng.normal()));
          const int u = support[static_cast<size_t>(j)];
          for (int t = 0; t < flat.time; ++t)
            drive[static_cast<size_t>(t)] +=
                w * flat.values[static_cast<size_t>(t) * flat.units + u];
        }
        drive = zscore(std::move(drive));
        std::vector<double> vol = zscore(
            hrf_convolve_downsample_series(drive, kernel, fpt));
        for (int t = 0; t < n_volumes; ++t) {
          const double noise = rng.normal() / config.snr;
          set.values[static_cast<size_t>(t) * set.n_vox + voxel] =
              static_cast<float>(vol[static_cast<size_t>(t)] + noise);
        }
        set.labels[static_cast<size_t>(voxel)] = label;
        set.roi_ids[static_cast<size_t>(voxel)] = roi_id;
      }
    }
  }
  for (int v = 0; v < config.noise_voxels; ++v, ++voxel) {
    for (int t = 0; t < n_volumes; ++t)
      set.values[static_cast<size_t>(t) * set.n_vox + voxel] =
          static_cast<float>(rng.normal());
    set.labels[static_cast<size_t>(voxel)] = "noise";
  }
  return set;
}

TeacherSession simulate_session(Stream& teacher_where, Stream& teacher_what,
                                const SessionConfig& session_config,
                                const TeacherVoxelConfig& voxel_config,
                                double ior_sigma) {
  if (session_config.duration_seconds() < 300.0)
    throw ConfigError("simulate_session: session must span at least 5 minutes");
  MovieSession movie{session_config};
  std::vector<ExtractSpec> specs = {
      {&teacher_where, "teacher_where", true},
      {&teacher_what, "teacher_what", true},
  };
  ExtractResult extracted = extract_session_features(
      movie, &teacher_where, specs, FixationMode::Learned, ior_sigma,
      mix_seed(session_config.seed, 0x7465616368ull));

  TeacherSession out;
  out.session = session_config;
  out.voxels = make_teacher_voxels(extracted.features[0], extracted.features[1],
                                   voxel_config, session_config.tr);
  return out;
}

}  // namespace duostream
