#include "duostream/encoding.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "duostream/config.hpp"
#include "duostream/csv.hpp"
#include "duostream/errors.hpp"
#include "duostream/rng.hpp"

namespace duostream {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd layer_to_centered(const LayerFeatures& layer, int time_steps) {
  MatrixXd x(time_steps, layer.units);
  for (int t = 0; t < time_steps; ++t)
    for (int u = 0; u < layer.units; ++u)
      x(t, u) = layer.data[static_cast<size_t>(t) * layer.units + u];
  x.rowwise() -= x.colwise().mean();
  return x;
}

struct PcaStage {
  MatrixXd scores;   // time x k
  double retained = 0.0;  // fraction of this input's variance
  double total = 0.0;     // input scatter (||X||_F^2 after centering)
};

// Economy PCA of a centered matrix; keeps the smallest k with
// cumulative/total >= keep, unless force_k > 0 pins k.
PcaStage pca_centered(const MatrixXd& x, double keep, int force_k,
                      const std::string& label) {
  PcaStage out;
  const int time = static_cast<int>(x.rows());
  const int units = static_cast<int>(x.cols());
  out.total = x.squaredNorm();
  if (out.total <= 1e-18 * std::max(1.0, static_cast<double>(time) * units))
    throw DimensionError("two_stage_pca: rank-0 layer: " + label);

  VectorXd evals;
  MatrixXd scores_full;
  if (units <= time) {
    const MatrixXd cov = x.transpose() * x;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
    // ascending -> reverse to descending
    const int m = units;
    evals.resize(m);
    MatrixXd v(units, m);
    for (int i = 0; i < m; ++i) {
      evals(i) = std::max(0.0, es.eigenvalues()(m - 1 - i));
      v.col(i) = es.eigenvectors().col(m - 1 - i);
    }
    scores_full = x * v;
  } else {
    const MatrixXd gram = x * x.transpose();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram);
    const int m = time;
    evals.resize(m);
    scores_full.resize(time, m);
    for (int i = 0; i < m; ++i) {
      const double ev = std::max(0.0, es.eigenvalues()(m - 1 - i));
      evals(i) = ev;
      // score_i = sqrt(lambda_i) * u_i
      scores_full.col(i) = es.eigenvectors().col(m - 1 - i) * std::sqrt(ev);
    }
  }

  const double total_ev = evals.sum();
  int k = force_k;
  if (k <= 0) {
    double acc = 0.0;
    k = static_cast<int>(evals.size());
    for (int i = 0; i < evals.size(); ++i) {
      acc += evals(i);
      if (acc >= keep * total_ev) {
        k = i + 1;
        break;
      }
    }
  }
  k = std::min<int>(k, static_cast<int>(evals.size()));
  double kept = 0.0;
  for (int i = 0; i < k; ++i) kept += evals(i);
  out.retained = total_ev > 0.0 ? kept / total_ev : 0.0;
  out.scores = scores_full.leftCols(k);
  return out;
}

int frames_per_tr(double frame_rate, double tr) {
  const double f = frame_rate * tr;
  const int fpt = static_cast<int>(std::lround(f));
  if (fpt < 1 || std::abs(f - fpt) > 1e-6)
    throw DimensionError("hrf_convolve_downsample: frame rate must tile the TR");
  return fpt;
}

std::vector<double> causal_convolve(const std::vector<double>& x,
                                    const std::vector<double>& kernel) {
  std::vector<double> out(x.size(), 0.0);
  const int n = static_cast<int>(x.size());
  const int m = static_cast<int>(kernel.size());
  for (int t = 0; t < n; ++t) {
    double acc = 0.0;
    const int kmax = std::min(m - 1, t);
    for (int tau = 0; tau <= kmax; ++tau) acc += kernel[static_cast<size_t>(tau)] * x[static_cast<size_t>(t - tau)];
    out[static_cast<size_t>(t)] = acc;
  }
  return out;
}

}  // namespace

void FeatureTimeseries::validate() const {
  if (layers.empty()) throw DimensionError("features: no layers");
  for (const auto& l : layers) {
    if (l.units <= 0) throw DimensionError("features: empty layer " + l.id);
    if (l.data.size() != static_cast<size_t>(time_steps) * l.units)
      throw DimensionError("features: layer " + l.id + " has a mismatched time axis");
    for (float v : l.data)
      if (!std::isfinite(v))
        throw NumericError("features: non-finite value in layer " + l.id);
  }
}

std::vector<double> hrf_kernel(const HrfParams& p) {
  if (p.dt <= 0.0) throw DimensionError("hrf_kernel: dt must be positive");
  if (p.duration < 30.0)
    throw DimensionError("hrf_kernel: duration must be at least 30 s");
  auto gamma_pdf = [](double t, double shape, double scl) {
    if (t <= 0.0) return 0.0;
    return std::exp((shape - 1.0) * std::log(t / scl) - t / scl -
                    std::lgamma(shape)) /
           scl;
  };
  const int n = static_cast<int>(std::floor(p.duration / p.dt)) + 1;
  std::vector<double> h(static_cast<size_t>(n));
  double peak = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = i * p.dt;
    h[static_cast<size_t>(i)] =
        gamma_pdf(t, p.peak_shape, p.peak_scale) -
        p.undershoot_ratio * gamma_pdf(t, p.undershoot_shape, p.undershoot_scale);
    peak = std::max(peak, h[static_cast<size_t>(i)]);
  }
  if (peak <= 0.0) throw NumericError("hrf_kernel: non-positive kernel peak");
  for (auto& v : h) v /= peak;
  return h;
}

TimeSplit make_split(int n_volumes, const ScanParams& scan) {
  if (std::abs(scan.train_fraction + scan.test_fraction - 1.0) > 1e-9)
    throw ConfigError("scan: train and test fractions must sum to 1");
  if (n_volumes < 4) throw DimensionError("scan: too few volumes to split");
  TimeSplit split;
  split.n_total = n_volumes;
  split.n_train = static_cast<int>(std::lround(scan.train_fraction * n_volumes));
  split.n_train = std::clamp(split.n_train, 1, n_volumes - 1);
  return split;
}

PcaResult two_stage_pca(const FeatureTimeseries& features, double variance_kept) {
  features.validate();
  if (variance_kept <= 0.0 || variance_kept > 1.0)
    throw ConfigError("two_stage_pca: variance_kept must lie in (0,1]");
  const int time = features.time_steps;

  PcaResult result;
  result.time = time;

  std::vector<PcaStage> stage1;
  stage1.reserve(features.layers.size());
  double grand_total = 0.0, grand_kept = 0.0;
  int concat_cols = 0;
  for (const auto& layer : features.layers) {
    MatrixXd x = layer_to_centered(layer, time);
    stage1.push_back(pca_centered(x, variance_kept, 0, layer.id));
    const PcaStage& s = stage1.back();
    grand_total += s.total;
    grand_kept += s.total * s.retained;
    concat_cols += static_cast<int>(s.scores.cols());
    result.per_layer_k.push_back(static_cast<int>(s.scores.cols()));
    result.per_layer_retained.push_back(s.retained);
  }
  const double rho1 = grand_kept / grand_total;

  MatrixXd concat(time, concat_cols);
  int col = 0;
  for (const auto& s : stage1) {
    concat.middleCols(col, static_cast<int>(s.scores.cols())) = s.scores;
    col += static_cast<int>(s.scores.cols());
  }
  concat.rowwise() -= concat.colwise().mean();

  // second stage: pick k so the overall retention passes variance_kept
  const double needed = std::min(1.0, variance_kept / rho1);
  PcaStage stage2 = pca_centered(concat, needed, 0, "(concatenated)");

  result.k = static_cast<int>(stage2.scores.cols());
  result.variance_retained = rho1 * stage2.retained;
  result.scores.resize(static_cast<size_t>(time) * result.k);
  for (int t = 0; t < time; ++t)
    for (int j = 0; j < result.k; ++j)
      result.scores[static_cast<size_t>(t) * result.k + j] = stage2.scores(t, j);
  return result;
}

RegressorMatrix hrf_convolve_downsample(const PcaResult& components,
                                        const std::vector<double>& kernel,
                                        double frame_rate,
                                        const ScanParams& scan) {
  const int fpt = frames_per_tr(frame_rate, scan.tr);
  const int n_vol = components.time / fpt;
  if (n_vol < 1)
    throw DimensionError("hrf_convolve_downsample: series shorter than one TR");
  if (scan.n_volumes > 0 && scan.n_volumes != n_vol)
    throw DimensionError("hrf_convolve_downsample: volume count mismatch");

  RegressorMatrix reg;
  reg.n_volumes = n_vol;
  reg.k = components.k;
  reg.values.assign(static_cast<size_t>(n_vol) * components.k, 0.0);
  std::vector<double> series(static_cast<size_t>(components.time));
  for (int j = 0; j < components.k; ++j) {
    for (int t = 0; t < components.time; ++t)
      series[static_cast<size_t>(t)] =
          components.scores[static_cast<size_t>(t) * components.k + j];
    const std::vector<double> conv = causal_convolve(series, kernel);
    for (int v = 0; v < n_vol; ++v) {
      double acc = 0.0;
      for (int f = 0; f < fpt; ++f) acc += conv[static_cast<size_t>(v) * fpt + f];
      reg.values[static_cast<size_t>(v) * components.k + j] = acc / fpt;
    }
  }
  return reg;
}

std::vector<double> hrf_convolve_downsample_series(
    const std::vector<double>& series, const std::vector<double>& kernel,
    int fpt) {
  if (fpt < 1) throw DimensionError("downsample: frames per TR must be >= 1");
  const std::vector<double> conv = causal_convolve(series, kernel);
  const int n_vol = static_cast<int>(series.size()) / fpt;
  std::vector<double> out(static_cast<size_t>(n_vol));
  for (int v = 0; v < n_vol; ++v) {
    double acc = 0.0;
    for (int f = 0; f < fpt; ++f) acc += conv[static_cast<size_t>(v) * fpt + f];
    out[static_cast<size_t>(v)] = acc / fpt;
  }
  return out;
}

namespace {

VectorXd ridge_solve(const MatrixXd& xtx, const VectorXd& xty, double lambda) {
  MatrixXd a = xtx;
  a.diagonal().array() += lambda;
  return a.ldlt().solve(xty);
}

}  // namespace

RidgeFit ridge_fit(const std::vector<double>& x, int rows, int cols,
                   const std::vector<double>& y,
                   const std::vector<double>& lambdas) {
  if (x.size() != static_cast<size_t>(rows) * cols || y.size() != static_cast<size_t>(rows))
    throw DimensionError("ridge_fit: size mismatch");
  if (lambdas.empty()) throw DimensionError("ridge_fit: empty lambda grid");
  for (double l : lambdas)
    if (l <= 0.0) throw DimensionError("ridge_fit: lambdas must be positive");

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      xm(x.data(), rows, cols);
  Eigen::Map<const VectorXd> yv(y.data(), rows);
  {
    const double mean = yv.mean();
    if ((yv.array() - mean).abs().maxCoeff() == 0.0)
      throw DimensionError("ridge_fit: response has zero variance");
  }

  double best_lambda = lambdas.front();
  if (lambdas.size() > 1) {
    const int n_val = std::max(1, static_cast<int>(std::lround(0.2 * rows)));
    const int n_fit = rows - n_val;
    if (n_fit < 1) throw DimensionError("ridge_fit: too few rows for validation");
    const MatrixXd xf = xm.topRows(n_fit);
    const MatrixXd xv = xm.bottomRows(n_val);
    const VectorXd yf = yv.head(n_fit);
    const MatrixXd xtx = xf.transpose() * xf;
    const VectorXd xty = xf.transpose() * yf;

    std::vector<double> yval(y.end() - n_val, y.end());
    double best_score = -2.0;
    for (double lambda : lambdas) {
      const VectorXd w = ridge_solve(xtx, xty, lambda);
      const VectorXd pred = xv * w;
      std::vector<double> pv(pred.data(), pred.data() + pred.size());
      const CorrResult c = pearson(pv, yval);
      const double score = c.degenerate ? -2.0 : c.r;
      if (score > best_score) {
        best_score = score;
        best_lambda = lambda;
      }
    }
  }

  const MatrixXd xtx_full = xm.transpose() * xm;
  const VectorXd xty_full = xm.transpose() * yv;
  const VectorXd w = ridge_solve(xtx_full, xty_full, best_lambda);
  RidgeFit fit;
  fit.lambda = best_lambda;
  fit.weights.assign(w.data(), w.data() + w.size());
  return fit;
}

CorrResult pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw DimensionError("pearson: need two equal-length series");
  const double n = static_cast<double>(a.size());
  double sa = 0.0, sb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
  }
  const double ma = sa / n, mb = sb / n;
  double vaa = 0.0, vbb = 0.0, vab = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    vaa += da * da;
    vbb += db * db;
    vab += da * db;
  }
  CorrResult out;
  if (vaa <= 0.0 || vbb <= 0.0) {
    out.degenerate = true;
    out.r = 0.0;
    return out;
  }
  out.r = vab / std::sqrt(vaa * vbb);
  return out;
}

CorrResult predict_correlate(const std::vector<double>& weights,
                             const std::vector<double>& x_test, int rows,
                             int cols, const std::vector<double>& y_test) {
  if (weights.size() != static_cast<size_t>(cols) ||
      x_test.size() != static_cast<size_t>(rows) * cols ||
      y_test.size() != static_cast<size_t>(rows))
    throw DimensionError("predict_correlate: size mismatch");
  std::vector<double> pred(static_cast<size_t>(rows), 0.0);
  for (int i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (int j = 0; j < cols; ++j)
      acc += x_test[static_cast<size_t>(i) * cols + j] * weights[static_cast<size_t>(j)];
    pred[static_cast<size_t>(i)] = acc;
  }
  return pearson(pred, y_test);
}

double block_permutation_test(const std::vector<double>& prediction,
                              const std::vector<double>& measured,
                              double block_seconds, double tr, int n_perm,
                              uint64_t seed) {
  if (prediction.size() != measured.size())
    throw DimensionError("block_permutation_test: length mismatch");
  if (tr <= 0.0 || block_seconds <= 0.0)
    throw DimensionError("block_permutation_test: bad tr or block size");
  const int block = static_cast<int>(std::ceil(block_seconds / tr));
  const int n = static_cast<int>(measured.size());
  if (n < 3 * block)
    throw DimensionError("block_permutation_test: fewer than 3 blocks");
  const int n_chunks = (n + block - 1) / block;

  const CorrResult obs = pearson(prediction, measured);
  const double r_obs = obs.degenerate ? 0.0 : obs.r;

  Rng rng(mix_seed(seed, 0x7065726d75746bull));
  std::vector<int> order(static_cast<size_t>(n_chunks));
  std::vector<double> permuted(measured.size());
  int count = 0;
  for (int p = 0; p < n_perm; ++p) {
    std::iota(order.begin(), order.end(), 0);
    for (size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<size_t>(rng.below(i + 1))]);
    size_t pos = 0;
    for (int chunk : order) {
      const int begin = chunk * block;
      const int end = std::min(n, begin + block);
      for (int i = begin; i < end; ++i)
        permuted[pos++] = measured[static_cast<size_t>(i)];
    }
    const CorrResult c = pearson(prediction, permuted);
    const double r_perm = c.degenerate ? 0.0 : c.r;
    if (r_perm >= r_obs) ++count;
  }
  return (1.0 + count) / (1.0 + n_perm);
}

std::vector<uint8_t> fdr_bh(const std::vector<double>& pvals, double q) {
  for (double p : pvals)
    if (!(p >= 0.0 && p <= 1.0))
      throw DimensionError("fdr_bh: p-values must lie in [0,1]");
  const size_t m = pvals.size();
  std::vector<size_t> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](size_t a, size_t b) { return pvals[a] < pvals[b]; });
  size_t cutoff = 0;  // number of rejected hypotheses
  for (size_t i = 0; i < m; ++i) {
    const double threshold = q * static_cast<double>(i + 1) / static_cast<double>(m);
    if (pvals[idx[i]] <= threshold) cutoff = i + 1;
  }
  std::vector<uint8_t> flags(m, 0);
  for (size_t i = 0; i < cutoff; ++i) flags[idx[i]] = 1;
  return flags;
}

PWhere p_where(double r_where, double r_what) {
  PWhere out;
  const double denom = r_where * r_where + r_what * r_what;
  if (denom == 0.0) {
    out.defined = false;
    out.value = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.defined = true;
  out.value = r_where * r_where / denom;
  return out;
}

double separability(const std::vector<std::pair<double, double>>& points) {
  if (points.empty()) throw DimensionError("separability: no points");
  double acc = 0.0;
  for (const auto& [x, y] : points) acc += std::abs(x - y);
  return acc / static_cast<double>(points.size());
}

std::vector<double> default_lambda_grid() {
  // 7 log-spaced points over [1e-2, 1e4]
  std::vector<double> grid;
  for (int i = 0; i < 7; ++i) grid.push_back(std::pow(10.0, -2.0 + i));
  return grid;
}

EncodingConfig encoding_config_from_ini(const IniFile& ini) {
  EncodingConfig cfg;
  cfg.variance_kept = ini.get_double_or("encoding", "variance_kept", 0.99);
  cfg.n_perm = static_cast<int>(ini.get_int_or("encoding", "n_perm", 1000));
  cfg.block_seconds = ini.get_double_or("encoding", "block_seconds", 20.0);
  cfg.fdr_q = ini.get_double_or("encoding", "fdr_q", 0.05);
  cfg.hrf.dt = ini.get_double_or("encoding", "hrf_dt", cfg.hrf.dt);
  cfg.lambdas = default_lambda_grid();
  return cfg;
}

PreparedRegressors prepare_regressors(const FeatureTimeseries& features,
                                      const EncodingConfig& config,
                                      int n_volumes, double tr) {
  HrfParams hrf = config.hrf;
  hrf.dt = 1.0 / features.frame_rate;
  const std::vector<double> kernel = hrf_kernel(hrf);
  const PcaResult pca = two_stage_pca(features, config.variance_kept);
  ScanParams scan;
  scan.tr = tr;
  scan.n_volumes = n_volumes;
  PreparedRegressors out;
  out.variance_retained = pca.variance_retained;
  out.reg = hrf_convolve_downsample(pca, kernel, features.frame_rate, scan);
  return out;
}

EncodingResult run_encoding(const FeatureTimeseries& where_features,
                            const FeatureTimeseries& what_features,
                            const std::vector<float>& voxels, int n_volumes,
                            int n_vox, const ScanParams& scan,
                            const EncodingConfig& config) {
  return run_encoding_prepared(
      prepare_regressors(where_features, config, n_volumes, scan.tr),
      prepare_regressors(what_features, config, n_volumes, scan.tr), voxels,
      n_volumes, n_vox, scan, config);
}

EncodingResult run_encoding_prepared(const PreparedRegressors& where_prep,
                                     const PreparedRegressors& what_prep,
                                     const std::vector<float>& voxels,
                                     int n_volumes, int n_vox,
                                     const ScanParams& scan,
                                     const EncodingConfig& config) {
  if (voxels.size() != static_cast<size_t>(n_volumes) * n_vox)
    throw DimensionError("run_encoding: voxel matrix size mismatch");

  EncodingResult result;
  const RegressorMatrix& reg_where = where_prep.reg;
  const RegressorMatrix& reg_what = what_prep.reg;
  if (reg_where.n_volumes != n_volumes || reg_what.n_volumes != n_volumes)
    throw DimensionError("run_encoding: regressor volume count mismatch");
  result.k_where = reg_where.k;
  result.k_what = reg_what.k;
  result.variance_retained_where = where_prep.variance_retained;
  result.variance_retained_what = what_prep.variance_retained;

  const TimeSplit split = make_split(n_volumes, scan);
  result.split = split;

  auto slice_rows = [](const RegressorMatrix& reg, int begin, int end) {
    std::vector<double> out;
    out.reserve(static_cast<size_t>(end - begin) * reg.k);
    out.insert(out.end(), reg.values.begin() + static_cast<int64_t>(begin) * reg.k,
               reg.values.begin() + static_cast<int64_t>(end) * reg.k);
    return out;
  };
  const std::vector<double> xw_train = slice_rows(reg_where, 0, split.n_train);
  const std::vector<double> xw_test = slice_rows(reg_where, split.n_train, n_volumes);
  const std::vector<double> xh_train = slice_rows(reg_what, 0, split.n_train);
  const std::vector<double> xh_test = slice_rows(reg_what, split.n_train, n_volumes);

  result.voxels.resize(static_cast<size_t>(n_vox));
  auto run_voxel = [&](int v) {
    VoxelResult& out = result.voxels[static_cast<size_t>(v)];
    out.voxel_id = v;
    std::vector<double> y_train(static_cast<size_t>(split.n_train));
    std::vector<double> y_test(static_cast<size_t>(split.n_test()));
    for (int t = 0; t < split.n_train; ++t)
      y_train[static_cast<size_t>(t)] = voxels[static_cast<size_t>(t) * n_vox + v];
    for (int t = 0; t < split.n_test(); ++t)
      y_test[static_cast<size_t>(t)] =
          voxels[static_cast<size_t>(split.n_train + t) * n_vox + v];

    auto fit_one = [&](const std::vector<double>& x_train,
                       const std::vector<double>& x_test, int k, double& r_out,
                       double& p_out, bool& degenerate, uint64_t perm_salt) {
      const RidgeFit fit = ridge_fit(x_train, split.n_train, k, y_train, config.lambdas);
      const CorrResult c =
          predict_correlate(fit.weights, x_test, split.n_test(), k, y_test);
      r_out = c.degenerate ? 0.0 : c.r;
      degenerate = c.degenerate;
      std::vector<double> pred(static_cast<size_t>(split.n_test()), 0.0);
      for (int i = 0; i < split.n_test(); ++i) {
        double acc = 0.0;
        for (int j = 0; j < k; ++j)
          acc += x_test[static_cast<size_t>(i) * k + j] * fit.weights[static_cast<size_t>(j)];
        pred[static_cast<size_t>(i)] = acc;
      }
      p_out = block_permutation_test(pred, y_test, config.block_seconds, scan.tr,
                                     config.n_perm,
                                     mix_seed(config.seed, mix_seed(static_cast<uint64_t>(v), perm_salt)));
    };

    fit_one(xw_train, xw_test, reg_where.k, out.r_where, out.p_value_where,
            out.degenerate_where, 0x77ull);
    fit_one(xh_train, xh_test, reg_what.k, out.r_what, out.p_value_what,
            out.degenerate_what, 0x68ull);
    out.pwhere = p_where(out.r_where, out.r_what);
  };

  const int threads = std::max(1, config.threads);
  if (threads == 1) {
    for (int v = 0; v < n_vox; ++v) run_voxel(v);
  } else {
    std::vector<std::thread> pool;
    std::atomic_int next{0};
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          const int v = next.fetch_add(1);
          if (v >= n_vox) break;
          run_voxel(v);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<double> pw(static_cast<size_t>(n_vox)), ph(static_cast<size_t>(n_vox));
  for (int v = 0; v < n_vox; ++v) {
    pw[static_cast<size_t>(v)] = result.voxels[static_cast<size_t>(v)].p_value_where;
    ph[static_cast<size_t>(v)] = result.voxels[static_cast<size_t>(v)].p_value_what;
  }
  const std::vector<uint8_t> fw = fdr_bh(pw, config.fdr_q);
  const std::vector<uint8_t> fh = fdr_bh(ph, config.fdr_q);
  for (int v = 0; v < n_vox; ++v) {
    result.voxels[static_cast<size_t>(v)].fdr_where = fw[static_cast<size_t>(v)] != 0;
    result.voxels[static_cast<size_t>(v)].fdr_what = fh[static_cast<size_t>(v)] != 0;
  }
  return result;
}

void write_encoding_csv(const std::string& path, const EncodingResult& result) {
  CsvWriter csv(path, {"voxel_id", "r_where", "r_what", "p_where",
                       "p_value_where", "p_value_what", "fdr_where", "fdr_what"});
  for (const VoxelResult& v : result.voxels) {
    csv.field(static_cast<int64_t>(v.voxel_id)).field(v.r_where).field(v.r_what);
    csv.field(v.pwhere.defined ? format_double(v.pwhere.value) : "nan");
    csv.field(v.p_value_where).field(v.p_value_what);
    csv.field(static_cast<int64_t>(v.fdr_where ? 1 : 0));
    csv.field(static_cast<int64_t>(v.fdr_what ? 1 : 0));
    csv.end_row();
  }
}

}  // namespace duostream
