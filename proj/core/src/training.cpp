#include "duostream/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "duostream/config.hpp"
#include "duostream/csv.hpp"
#include "duostream/errors.hpp"
#include "duostream/fixation.hpp"
#include "duostream/ops.hpp"
#include "duostream/rng.hpp"

namespace duostream {

namespace {

std::vector<int> shuffled_indices(int count, Rng& rng) {
  std::vector<int> idx(static_cast<size_t>(count));
  std::iota(idx.begin(), idx.end(), 0);
  for (size_t i = idx.size() - 1; i > 0; --i)
    std::swap(idx[i], idx[static_cast<size_t>(rng.below(i + 1))]);
  return idx;
}

Tensor stack_retinal_views(const std::vector<SyntheticScene>& scenes,
                           const Stream& stream,
                           const std::vector<Vec2>& fixations) {
  std::vector<Tensor> views;
  views.reserve(scenes.size());
  for (size_t i = 0; i < scenes.size(); ++i) {
    const SamplingGrid grid =
        build_sampling_grid(stream.retina_params(fixations[i]),
                            scenes[i].image.dim(2), scenes[i].image.dim(1));
    views.push_back(sample_image(scenes[i].image, grid));
  }
  return stack0(views);
}

std::vector<float> concat_saliency_targets(
    const std::vector<SyntheticScene>& scenes) {
  std::vector<float> out;
  for (const auto& s : scenes)
    out.insert(out.end(), s.saliency_gt.begin(), s.saliency_gt.end());
  return out;
}

std::vector<float> concat_labels(const std::vector<SyntheticScene>& scenes) {
  std::vector<float> out;
  for (const auto& s : scenes)
    out.insert(out.end(), s.labels.begin(), s.labels.end());
  return out;
}

std::vector<SyntheticScene> load_batch(const SceneDataset& data,
                                       const std::vector<int>& order,
                                       size_t begin, size_t end) {
  std::vector<SyntheticScene> scenes;
  scenes.reserve(end - begin);
  for (size_t i = begin; i < end; ++i) scenes.push_back(data.scene(order[i]));
  return scenes;
}

double validation_kl(Stream& where, const SceneDataset& val) {
  NoGradGuard ng;
  double total = 0.0;
  const int batch = 32;
  for (int begin = 0; begin < val.count; begin += batch) {
    const int end = std::min(val.count, begin + batch);
    std::vector<SyntheticScene> scenes;
    for (int i = begin; i < end; ++i) scenes.push_back(val.scene(i));
    std::vector<Vec2> fix(scenes.size(), Vec2{0.5, 0.5});
    Tensor views = stack_retinal_views(scenes, where, fix);
    Tensor map = where.saliency_map(where.backbone_forward(views, false), false);
    Tensor kl = kl_saliency_loss(map, concat_saliency_targets(scenes));
    total += static_cast<double>(kl.item()) * static_cast<double>(scenes.size());
  }
  return total / val.count;
}

void append_metrics(CsvWriter* metrics, int stage, int epoch, double train_loss,
                    double val_kl, double val_f1) {
  if (!metrics) return;
  metrics->field(static_cast<int64_t>(stage))
      .field(static_cast<int64_t>(epoch))
      .field(train_loss);
  metrics->field(val_kl).field(val_f1);
  metrics->end_row();
  metrics->flush();
}

void check_loss(float value) {
  if (!std::isfinite(value))
    throw NumericError("training diverged: loss is non-finite");
}

}  // namespace

TrainSchedule schedule_from_ini(const IniFile& ini, int stage) {
  if (stage < 1 || stage > 3) throw ConfigError("train: stage must be 1, 2, or 3");
  TrainSchedule s;
  s.stage = stage;
  s.opt.learning_rate =
      static_cast<float>(ini.get_double_or("train", "lr", stage == 3 ? 0.0002 : 0.002));
  s.opt.beta1 = static_cast<float>(ini.get_double_or("train", "beta1", 0.9));
  s.opt.beta2 = static_cast<float>(ini.get_double_or("train", "beta2", 0.99));
  const char* key = stage == 1 ? "stage1_epochs"
                    : stage == 2 ? "stage2_epochs"
                                 : "stage3_epochs";
  s.epochs = static_cast<int>(ini.get_int_or("train", key, stage == 2 ? 3 : 2));
  s.batch = static_cast<int>(ini.get_int_or("train", "batch", 32));
  s.num_fixations = static_cast<int>(ini.get_int_or("model", "num_fixations", 8));
  s.ior_sigma = ini.get_double_or("model", "ior_sigma", 0.1);
  if (s.epochs < 1 || s.batch < 1) throw ConfigError("train: bad epochs/batch");
  return s;
}

StageResult stage1_train(Stream& where, const SceneDataset& train,
                         const SceneDataset& val, const TrainSchedule& schedule,
                         uint64_t seed, CsvWriter* metrics) {
  StageResult result;
  Adam adam(where.parameter_tensors(), schedule.opt);
  Rng order_rng(mix_seed(seed, 0x73316f72646572ull));
  Rng fix_rng(mix_seed(seed, 0x733166697873ull));

  result.epoch0_val = validation_kl(where, val);
  append_metrics(metrics, 1, 0, 0.0, result.epoch0_val, 0.0);

  for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
    const std::vector<int> order = shuffled_indices(train.count, order_rng);
    double loss_sum = 0.0;
    int64_t samples = 0;
    for (size_t begin = 0; begin < order.size();
         begin += static_cast<size_t>(schedule.batch)) {
      const size_t end =
          std::min(order.size(), begin + static_cast<size_t>(schedule.batch));
      std::vector<SyntheticScene> scenes = load_batch(train, order, begin, end);
      std::vector<Vec2> fixations;
      fixations.reserve(scenes.size());
      for (size_t i = 0; i < scenes.size(); ++i)
        fixations.push_back({fix_rng.uniform(), fix_rng.uniform()});

      adam.zero_grad();
      Tensor views = stack_retinal_views(scenes, where, fixations);
      Tensor map = where.saliency_map(where.backbone_forward(views, true), true);
      Tensor loss = kl_saliency_loss(map, concat_saliency_targets(scenes));
      check_loss(loss.item());
      loss.backward();
      adam.step();
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(scenes.size());
      samples += static_cast<int64_t>(scenes.size());
    }
    const double train_loss = loss_sum / static_cast<double>(samples);
    result.epoch_train_loss.push_back(train_loss);
    result.final_val = validation_kl(where, val);
    append_metrics(metrics, 1, epoch, train_loss, result.final_val, 0.0);
  }
  return result;
}

StageResult stage2_train(Stream& what, Stream& where_frozen,
                         const SceneDataset& train, const SceneDataset& val,
                         const TrainSchedule& schedule, uint64_t seed,
                         CsvWriter* metrics) {
  StageResult result;
  Adam adam(what.parameter_tensors(), schedule.opt);
  Rng order_rng(mix_seed(seed, 0x73326f72646572ull));

  {
    EvalMetrics m = evaluate(&where_frozen, &what, val, mix_seed(seed, 1),
                             schedule.num_fixations, schedule.ior_sigma);
    result.epoch0_val = m.macro_f1;
    append_metrics(metrics, 2, 0, 0.0, 0.0, m.macro_f1);
  }

  uint64_t batch_counter = 0;
  for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
    const std::vector<int> order = shuffled_indices(train.count, order_rng);
    double loss_sum = 0.0;
    int64_t samples = 0;
    for (size_t begin = 0; begin < order.size();
         begin += static_cast<size_t>(schedule.batch)) {
      const size_t end =
          std::min(order.size(), begin + static_cast<size_t>(schedule.batch));
      std::vector<SyntheticScene> scenes = load_batch(train, order, begin, end);
      std::vector<Tensor> images;
      images.reserve(scenes.size());
      for (const auto& s : scenes) images.push_back(s.image);

      LoopOptions opts;
      opts.num_fixations = schedule.num_fixations;
      opts.mode = FixationMode::Learned;
      opts.train_where = false;
      opts.train_what = true;
      opts.ior_sigma = schedule.ior_sigma;
      opts.seed = mix_seed(seed, 0x6c6f6f70ull + (++batch_counter));
      opts.record_maps = false;

      adam.zero_grad();
      LoopResult loop = run_fixation_loop(images, &where_frozen, &what, opts);
      Tensor loss =
          bce_multilabel_loss(loop.representation.logits, concat_labels(scenes));
      check_loss(loss.item());
      loss.backward();
      adam.step();
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(scenes.size());
      samples += static_cast<int64_t>(scenes.size());
    }
    const double train_loss = loss_sum / static_cast<double>(samples);
    result.epoch_train_loss.push_back(train_loss);
    EvalMetrics m = evaluate(&where_frozen, &what, val, mix_seed(seed, 1),
                             schedule.num_fixations, schedule.ior_sigma);
    result.final_val = m.macro_f1;
    append_metrics(metrics, 2, epoch, train_loss, 0.0, m.macro_f1);
  }
  return result;
}

StageResult stage3_train(Stream& where, Stream& what, const SceneDataset& train,
                         const SceneDataset& val, const TrainSchedule& schedule,
                         uint64_t seed, CsvWriter* metrics) {
  StageResult result;
  std::vector<Tensor> params = where.parameter_tensors();
  for (auto& p : what.parameter_tensors()) params.push_back(p);
  Adam adam(std::move(params), schedule.opt);
  Rng order_rng(mix_seed(seed, 0x73336f72646572ull));

  auto combined_val = [&] {
    EvalMetrics m = evaluate(&where, &what, val, mix_seed(seed, 1),
                             schedule.num_fixations, schedule.ior_sigma);
    // 0.5*KL + 0.5*BCE is the training objective; report its pieces too
    return m;
  };

  {
    EvalMetrics m = combined_val();
    result.epoch0_val = 0.5 * m.saliency_kl + 0.5 * (1.0 - m.macro_f1);
    append_metrics(metrics, 3, 0, 0.0, m.saliency_kl, m.macro_f1);
  }

  uint64_t batch_counter = 0;
  for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
    const std::vector<int> order = shuffled_indices(train.count, order_rng);
    double loss_sum = 0.0;
    int64_t samples = 0;
    for (size_t begin = 0; begin < order.size();
         begin += static_cast<size_t>(schedule.batch)) {
      const size_t end =
          std::min(order.size(), begin + static_cast<size_t>(schedule.batch));
      std::vector<SyntheticScene> scenes = load_batch(train, order, begin, end);
      std::vector<Tensor> images;
      images.reserve(scenes.size());
      for (const auto& s : scenes) images.push_back(s.image);

      LoopOptions opts;
      opts.num_fixations = schedule.num_fixations;
      opts.mode = FixationMode::Learned;
      opts.train_where = true;
      opts.train_what = true;
      opts.ior_sigma = schedule.ior_sigma;
      opts.seed = mix_seed(seed, 0x73336c6f6f70ull + (++batch_counter));
      opts.record_maps = false;

      adam.zero_grad();
      LoopResult loop = run_fixation_loop(images, &where, &what, opts);
      const std::vector<float> targets = concat_saliency_targets(scenes);
      Tensor kl_total;
      for (size_t s = 0; s < loop.step_saliency.size(); ++s) {
        Tensor step_kl = kl_saliency_loss(loop.step_saliency[s], targets);
        kl_total = s == 0 ? step_kl : add(kl_total, step_kl);
      }
      Tensor kl_mean =
          scale(kl_total, 1.0f / static_cast<float>(loop.step_saliency.size()));
      Tensor bce =
          bce_multilabel_loss(loop.representation.logits, concat_labels(scenes));
      Tensor loss = add(scale(kl_mean, 0.5f), scale(bce, 0.5f));
      check_loss(loss.item());
      loss.backward();
      adam.step();
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(scenes.size());
      samples += static_cast<int64_t>(scenes.size());
    }
    const double train_loss = loss_sum / static_cast<double>(samples);
    result.epoch_train_loss.push_back(train_loss);
    EvalMetrics m = combined_val();
    result.final_val = 0.5 * m.saliency_kl + 0.5 * (1.0 - m.macro_f1);
    append_metrics(metrics, 3, epoch, train_loss, m.saliency_kl, m.macro_f1);
  }
  return result;
}

double macro_f1(const std::vector<float>& logits,
                const std::vector<float>& targets, int n, int k) {
  if (logits.size() != static_cast<size_t>(n) * k ||
      targets.size() != logits.size())
    throw DimensionError("macro_f1: size mismatch");
  double sum = 0.0;
  for (int c = 0; c < k; ++c) {
    int64_t tp = 0, fp = 0, fn = 0;
    for (int i = 0; i < n; ++i) {
      const bool pred = logits[static_cast<size_t>(i) * k + c] > 0.0f;  // sigmoid > 0.5
      const bool truth = targets[static_cast<size_t>(i) * k + c] > 0.5f;
      if (pred && truth) ++tp;
      else if (pred && !truth) ++fp;
      else if (!pred && truth) ++fn;
    }
    const double denom = 2.0 * tp + fp + fn;
    sum += denom > 0.0 ? (2.0 * tp) / denom : 0.0;
  }
  return sum / k;
}

EvalMetrics evaluate(Stream* where, Stream* what, const SceneDataset& data,
                     uint64_t seed, int num_fixations, double ior_sigma) {
  NoGradGuard ng;
  EvalMetrics out;
  const int batch = 32;
  std::vector<float> all_logits, all_labels;
  double kl_sum = 0.0;
  int64_t kl_count = 0;
  // pooled saliency correlation accumulators
  double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  int64_t cells = 0;

  for (int begin = 0; begin < data.count; begin += batch) {
    const int end = std::min(data.count, begin + batch);
    std::vector<SyntheticScene> scenes;
    for (int i = begin; i < end; ++i) scenes.push_back(data.scene(i));
    std::vector<Tensor> images;
    for (const auto& s : scenes) images.push_back(s.image);

    LoopOptions opts;
    opts.num_fixations = num_fixations;
    opts.mode = where ? FixationMode::Learned : FixationMode::Random;
    opts.ior_sigma = ior_sigma;
    opts.seed = mix_seed(seed, static_cast<uint64_t>(begin));
    opts.record_maps = false;

    LoopResult loop = run_fixation_loop(images, where, what, opts);

    if (what) {
      const Tensor& logits = loop.representation.logits;
      all_logits.insert(all_logits.end(), logits.data(),
                        logits.data() + logits.size());
      const std::vector<float> labels = concat_labels(scenes);
      all_labels.insert(all_labels.end(), labels.begin(), labels.end());
    }
    if (where) {
      const std::vector<float> targets = concat_saliency_targets(scenes);
      for (const Tensor& map : loop.step_saliency) {
        Tensor detached = map;
        Tensor kl = kl_saliency_loss(detached, targets);
        kl_sum += static_cast<double>(kl.item()) * static_cast<double>(scenes.size());
        kl_count += static_cast<int64_t>(scenes.size());
      }
      // correlation uses the first step's map (center fixation)
      const Tensor& first = loop.step_saliency.front();
      for (int64_t i = 0; i < first.size(); ++i) {
        const double x = first.data()[i];
        const double y = targets[static_cast<size_t>(i)];
        sx += x; sy += y; sxx += x * x; syy += y * y; sxy += x * y;
        ++cells;
      }
    }
  }

  if (what && !all_logits.empty())
    out.macro_f1 = macro_f1(all_logits, all_labels,
                            static_cast<int>(all_labels.size()) /
                                what->config().num_classes,
                            what->config().num_classes);
  if (kl_count > 0) out.saliency_kl = kl_sum / static_cast<double>(kl_count);
  if (cells > 1) {
    const double n = static_cast<double>(cells);
    const double cov = sxy - sx * sy / n;
    const double vx = sxx - sx * sx / n;
    const double vy = syy - sy * sy / n;
    out.saliency_corr = (vx > 0 && vy > 0) ? cov / std::sqrt(vx * vy) : 0.0;
  }
  return out;
}

uint64_t stream_state_hash(Stream& stream) {
  uint64_t h = 0xcbf29ce484222325ull;
  auto feed = [&h](const float* p, size_t n) {
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n * sizeof(float); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& p : stream.parameters())
    feed(p.tensor.data(), static_cast<size_t>(p.tensor.size()));
  for (const auto& b : stream.buffers()) feed(b.values->data(), b.values->size());
  return h;
}

}  // namespace duostream
