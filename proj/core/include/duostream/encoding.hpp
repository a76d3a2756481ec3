#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace duostream {

class IniFile;

// ---- feature carriers ------------------------------------------------------

struct LayerFeatures {
  std::string id;
  int units = 0;
  std::vector<float> data;  // row-major [time x units]
};

struct FeatureTimeseries {
  std::vector<LayerFeatures> layers;
  double frame_rate = 0.0;  // Hz
  int time_steps = 0;

  void validate() const;  // equal time axes, finite values
};

// ---- hemodynamics ----------------------------------------------------------

// Difference of gamma densities; with the default shapes/scales the positive
// lobe's mode sits at (shape-1)*scale = 5 s.
struct HrfParams {
  double peak_shape = 6.0;
  double peak_scale = 1.0;  // seconds
  double undershoot_shape = 16.0;
  double undershoot_scale = 1.0;
  double undershoot_ratio = 1.0 / 6.0;
  double dt = 0.1;
  double duration = 30.0;
};

// Sampled on the dt grid from t=0, peak-normalized to 1.
std::vector<double> hrf_kernel(const HrfParams& params);

struct ScanParams {
  double tr = 2.5;
  int n_volumes = 0;  // 0 = derived from the data
  double train_fraction = 0.81;
  double test_fraction = 0.19;
};

// Contiguous split: train rows [0, n_train), test rows [n_train, n_total).
// Constructed through this type only, so overlap is impossible.
struct TimeSplit {
  int n_train = 0;
  int n_total = 0;
  int n_test() const { return n_total - n_train; }
};
TimeSplit make_split(int n_volumes, const ScanParams& scan);

// ---- dimensionality reduction ---------------------------------------------

struct PcaResult {
  int time = 0;
  int k = 0;
  std::vector<double> scores;  // row-major [time x k], column-centered
  double variance_retained = 0.0;  // overall, vs the original features
  std::vector<int> per_layer_k;
  std::vector<double> per_layer_retained;
};

// PCA per layer keeping >= variance_kept, concatenation, then a second PCA
// sized so the overall retained variance (direct reconstruction against the
// original concatenated features) is >= variance_kept. Economy-size: works
// whether units exceed the time length or not.
PcaResult two_stage_pca(const FeatureTimeseries& features, double variance_kept);

// ---- regressors ------------------------------------------------------------

struct RegressorMatrix {
  int n_volumes = 0;
  int k = 0;
  std::vector<double> values;  // row-major
};

// Causal convolution at the frame rate (output length = input length), then
// per-TR averaging down to volumes.
RegressorMatrix hrf_convolve_downsample(const PcaResult& components,
                                        const std::vector<double>& kernel,
                                        double frame_rate,
                                        const ScanParams& scan);

// Same path for a single series (used when synthesizing voxel drives).
std::vector<double> hrf_convolve_downsample_series(
    const std::vector<double>& series, const std::vector<double>& kernel,
    int frames_per_tr);

// ---- estimation and testing -------------------------------------------------

struct RidgeFit {
  std::vector<double> weights;
  double lambda = 0.0;
};

// Solves (X^T X + lambda I) w = X^T y over the lambda grid, choosing lambda by
// correlation on the last contiguous 20% of the rows, then refits on all rows.
// All lambdas must be positive.
RidgeFit ridge_fit(const std::vector<double>& x, int rows, int cols,
                   const std::vector<double>& y,
                   const std::vector<double>& lambdas);

struct CorrResult {
  double r = 0.0;
  bool degenerate = false;  // constant prediction or measurement
};

CorrResult predict_correlate(const std::vector<double>& weights,
                             const std::vector<double>& x_test, int rows,
                             int cols, const std::vector<double>& y_test);

CorrResult pearson(const std::vector<double>& a, const std::vector<double>& b);

// Permutes the order of contiguous ceil(block_seconds/tr)-volume blocks of
// the measured series. p = (1 + #{r_perm >= r_obs}) / (1 + n_perm). Requires
// at least 3 full blocks.
double block_permutation_test(const std::vector<double>& prediction,
                              const std::vector<double>& measured,
                              double block_seconds, double tr, int n_perm,
                              uint64_t seed);

// Benjamini-Hochberg step-up at level q.
std::vector<uint8_t> fdr_bh(const std::vector<double>& pvals, double q);

struct PWhere {
  double value = 0.0;
  bool defined = false;
};
// r_where^2 / (r_where^2 + r_what^2); undefined when both are exactly 0.
PWhere p_where(double r_where, double r_what);

// Mean over (x=r_what, y=r_where) points of |x - y|.
double separability(const std::vector<std::pair<double, double>>& points);

// ---- the voxelwise pipeline --------------------------------------------------

struct EncodingConfig {
  double variance_kept = 0.99;
  HrfParams hrf;
  std::vector<double> lambdas;  // default: 7 log-spaced in [1e-2, 1e4]
  int n_perm = 1000;
  double block_seconds = 20.0;
  double fdr_q = 0.05;
  uint64_t seed = 0;
  int threads = 1;
};

std::vector<double> default_lambda_grid();
EncodingConfig encoding_config_from_ini(const IniFile& ini);

struct VoxelResult {
  int voxel_id = 0;
  double r_where = 0.0, r_what = 0.0;
  double p_value_where = 1.0, p_value_what = 1.0;
  bool fdr_where = false, fdr_what = false;
  PWhere pwhere;
  bool degenerate_where = false, degenerate_what = false;
};

struct EncodingResult {
  std::vector<VoxelResult> voxels;
  TimeSplit split;
  int k_where = 0, k_what = 0;
  double variance_retained_where = 0.0, variance_retained_what = 0.0;
};

// Fits both encoding models for every voxel. `voxels` is row-major
// [n_volumes x n_vox], already at the scanner rate.
EncodingResult run_encoding(const FeatureTimeseries& where_features,
                            const FeatureTimeseries& what_features,
                            const std::vector<float>& voxels, int n_volumes,
                            int n_vox, const ScanParams& scan,
                            const EncodingConfig& config);

// PCA + HRF + downsampling for one stream, reusable across voxel sets and
// stream pairings.
struct PreparedRegressors {
  RegressorMatrix reg;
  double variance_retained = 0.0;
};
PreparedRegressors prepare_regressors(const FeatureTimeseries& features,
                                      const EncodingConfig& config,
                                      int n_volumes, double tr);
EncodingResult run_encoding_prepared(const PreparedRegressors& where_reg,
                                     const PreparedRegressors& what_reg,
                                     const std::vector<float>& voxels,
                                     int n_volumes, int n_vox,
                                     const ScanParams& scan,
                                     const EncodingConfig& config);

// encoding_results.csv with the columns: voxel_id, r_where, r_what, p_where,
// p_value_where, p_value_what, fdr_where, fdr_what.
void write_encoding_csv(const std::string& path, const EncodingResult& result);

}  // namespace duostream
