#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "duostream/optim.hpp"
#include "duostream/scenes.hpp"
#include "duostream/streams.hpp"

namespace duostream {

class CsvWriter;
class IniFile;

// The three-stage curriculum: stage 1 trains the saliency stream against the
// ground-truth maps using random fixations; stage 2 trains the recognition
// stream through the fixation loop with the saliency stream frozen; stage 3
// fine-tunes both, equally weighting the two objectives.
struct TrainSchedule {
  int stage = 1;
  OptimizerConfig opt;  // lr 0.002 / 0.002 / 0.0002, betas 0.9/0.99
  int epochs = 6;
  int batch = 32;
  int num_fixations = 8;
  double ior_sigma = 0.1;
};

TrainSchedule schedule_from_ini(const IniFile& ini, int stage);

struct StageResult {
  double epoch0_val = 0.0;  // validation metric before training
  double final_val = 0.0;   // validation metric after the last epoch
  std::vector<double> epoch_train_loss;
};

// Validation metric: mean saliency KL (center fixation, eval mode).
StageResult stage1_train(Stream& where, const SceneDataset& train,
                         const SceneDataset& val, const TrainSchedule& schedule,
                         uint64_t seed, CsvWriter* metrics);

// Validation metric: macro-F1 through the fixation loop. The frozen stream is
// run in eval mode with no gradient; its state is bit-identical afterwards.
StageResult stage2_train(Stream& what, Stream& where_frozen,
                         const SceneDataset& train, const SceneDataset& val,
                         const TrainSchedule& schedule, uint64_t seed,
                         CsvWriter* metrics);

// Validation metric: 0.5*KL + 0.5*BCE on the validation set.
StageResult stage3_train(Stream& where, Stream& what, const SceneDataset& train,
                         const SceneDataset& val, const TrainSchedule& schedule,
                         uint64_t seed, CsvWriter* metrics);

struct EvalMetrics {
  double macro_f1 = 0.0;
  double saliency_kl = 0.0;
  double saliency_corr = 0.0;
};

// Runs the fixation loop in eval mode over the dataset. Either stream may be
// null; absent streams leave their metrics at 0.
EvalMetrics evaluate(Stream* where, Stream* what, const SceneDataset& data,
                     uint64_t seed, int num_fixations, double ior_sigma);

// Mean over classes of F1 at threshold 0.5 (logit 0). Exposed for the
// confusion-matrix oracle test.
double macro_f1(const std::vector<float>& logits,
                const std::vector<float>& targets, int n, int k);

// FNV-1a over the parameter and buffer bytes; used by the freeze contract.
uint64_t stream_state_hash(Stream& stream);

// Canonical checkpoint names inside a run directory.
constexpr const char* kWhereStage1 = "where_s1.tnsr";
constexpr const char* kWhatStage2 = "what_s2.tnsr";
constexpr const char* kWhereStage3 = "where_s3.tnsr";
constexpr const char* kWhatStage3 = "what_s3.tnsr";

}  // namespace duostream
