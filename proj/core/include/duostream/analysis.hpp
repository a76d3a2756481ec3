#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "duostream/encoding.hpp"
#include "duostream/synthbrain.hpp"

namespace duostream {

// ---- on-disk formats the encode command ingests/emits ------------------------

void save_features_tnsr(const std::string& path, const FeatureTimeseries& f);
FeatureTimeseries load_features_tnsr(const std::string& path);

void save_voxels_tnsr(const std::string& path, const TeacherVoxelSet& v);
TeacherVoxelSet load_voxels_tnsr(const std::string& path);

// voxel_id, label, roi
void write_voxel_labels_csv(const std::string& path, const TeacherVoxelSet& v);

// ---- pipeline configuration ---------------------------------------------------

struct PipelineConfig {
  SessionConfig session;
  TeacherVoxelConfig voxels;
  EncodingConfig encoding;
  ScanParams scan;
  double ior_sigma = 0.1;
};

PipelineConfig pipeline_config_from_ini(const IniFile& ini, uint64_t seed,
                                        int threads);

// ---- ROI summaries --------------------------------------------------------------

struct RoiSummary {
  int roi_id = 0;
  std::string label;
  int n_voxels = 0;
  double mean_r_where = 0.0;
  double mean_r_what = 0.0;
  double median_p_where = 0.0;
};

std::vector<RoiSummary> summarize_rois(const EncodingResult& enc,
                                       const TeacherVoxelSet& voxels);
// Separability over the signal-ROI points (x = mean r_what, y = mean r_where).
double roi_separability(const std::vector<RoiSummary>& rois);
double median_pwhere_for_label(const EncodingResult& enc,
                               const TeacherVoxelSet& voxels,
                               const std::string& label);

void write_report_csv(const std::string& path,
                      const std::vector<RoiSummary>& rois);

// ---- encode pipeline -------------------------------------------------------------

struct EncodePipelineResult {
  EncodingResult encoding;
  TeacherVoxelSet voxels;
  std::vector<RoiSummary> rois;
};

// Synthesizes the teacher session, extracts the analysis streams' features
// over the same stimuli (fixations driven by `where` in Learned mode), and
// fits both encoding models per voxel.
EncodePipelineResult run_encode_pipeline(Stream& where, Stream& what,
                                         Stream& teacher_where,
                                         Stream& teacher_what,
                                         const PipelineConfig& config,
                                         FixationMode mode);

// ---- ablation ----------------------------------------------------------------------

struct ComboResult {
  int id = 0;
  std::string where_member;  // stream filling the r_where role
  std::string what_member;
  double separability = 0.0;
  double median_pwhere_dorsal = 0.0;
  double median_pwhere_ventral = 0.0;
  EncodingResult encoding;
};

struct AblationResult {
  std::vector<ComboResult> combos;  // ids 1..5
  // learned-vs-random encoding deltas for the proposed pair, per voxel
  std::vector<double> delta_r_where;
  std::vector<double> delta_r_what;
  TeacherVoxelSet voxels;
};

// The five pairings: 1 (where, control-a) and 2 (control-b, what) differ only
// in input view inside the pair; 3 (where, control-b) and 4 (control-a, what)
// differ only in objective; 5 (where, what) differs in both. All five are
// evaluated against the same teacher brain with a shared fixation trace.
AblationResult run_ablation(Stream& where, Stream& what, Stream& control_a,
                            Stream& control_b, Stream& teacher_where,
                            Stream& teacher_what, const PipelineConfig& config);

void write_combos_csv(const std::string& path, const AblationResult& ablation);
void write_delta_r_csv(const std::string& path, const AblationResult& ablation);

// ---- run manifests -----------------------------------------------------------------

void write_manifest(const std::string& out_dir, const std::string& command,
                    const IniFile& ini, uint64_t seed, int threads,
                    const std::vector<std::string>& inputs);

}  // namespace duostream
