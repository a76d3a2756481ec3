#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "duostream/encoding.hpp"
#include "duostream/fixation.hpp"
#include "duostream/scenes.hpp"
#include "duostream/streams.hpp"

namespace duostream {

// ---- movie-like stimulus ----------------------------------------------------

// One scene per TR, shown for frames_per_tr frames with smooth camera drift
// inside the scene. Frames are rendered lazily and deterministically.
struct SessionConfig {
  int n_volumes = 288;
  double tr = 2.5;
  int frames_per_tr = 8;
  SceneConfig scene;
  uint64_t seed = 0;

  double frame_rate() const { return frames_per_tr / tr; }
  int total_frames() const { return n_volumes * frames_per_tr; }
  double duration_seconds() const { return n_volumes * tr; }
};

SessionConfig session_config_from_ini(const IniFile& ini);

struct MovieSession {
  SessionConfig config;

  SyntheticScene scene_for(int volume) const;
  Tensor frame(int volume, int phase) const;  // phase in [0, frames_per_tr)
};

// ---- feature extraction over a session ---------------------------------------

// Which activations become encoding features: backbone blocks pooled to 2x2
// per channel, plus the head (saliency map cells, or GRU hidden + logits).
// mid_late_only keeps blocks 3-4 and the head.
struct ExtractSpec {
  Stream* stream = nullptr;
  std::string name;
  bool mid_late_only = false;
};

struct ExtractResult {
  std::vector<FeatureTimeseries> features;       // parallel to the specs
  std::vector<std::vector<Vec2>> fixations;      // per volume
};

// Runs the fixation loop over every scene of the session (state resets at
// scene boundaries), recording per-frame features for every listed stream.
// `driver` provides the saliency maps for learned fixations and may also
// appear in the specs; it must be a saliency-objective stream. In Random mode
// driver may be null. Single-threaded and deterministic in `seed`.
ExtractResult extract_session_features(const MovieSession& session,
                                       Stream* driver,
                                       const std::vector<ExtractSpec>& specs,
                                       FixationMode mode, double ior_sigma,
                                       uint64_t seed, int batch_volumes = 32);

// ---- teacher voxels -----------------------------------------------------------

struct TeacherVoxelConfig {
  int rois_per_class = 4;   // dorsal ROIs and ventral ROIs each
  int voxels_per_roi = 25;
  int noise_voxels = 40;    // label "noise", no signal
  int mix_features = 12;    // sparse support per ROI
  double snr = 2.5;         // signal sd / noise sd
  uint64_t seed = 0;
};

TeacherVoxelConfig teacher_voxel_config_from_ini(const IniFile& ini);

struct TeacherVoxelSet {
  int n_volumes = 0;
  int n_vox = 0;
  std::vector<float> values;        // row-major [n_volumes x n_vox]
  std::vector<std::string> labels;  // dorsal | ventral | noise
  std::vector<int> roi_ids;         // -1 for noise voxels
  double snr = 0.0;
  uint64_t seed = 0;
};

// Each signal voxel is a positive sparse mixture of one teacher's features
// (ROI-shared support with per-voxel jitter), HRF-convolved, TR-averaged,
// z-scored, plus white noise scaled by 1/snr. Throws on snr <= 0.
TeacherVoxelSet make_teacher_voxels(const FeatureTimeseries& dorsal_teacher,
                                    const FeatureTimeseries& ventral_teacher,
                                    const TeacherVoxelConfig& config, double tr);

// Stimuli plus voxel matrix for the encoding stage: extracts the teacher
// streams' features over the session (teacher_where drives the fixations) and
// synthesizes the voxel set.
struct TeacherSession {
  SessionConfig session;
  TeacherVoxelSet voxels;
};

TeacherSession simulate_session(Stream& teacher_where, Stream& teacher_what,
                                const SessionConfig& session_config,
                                const TeacherVoxelConfig& voxel_config,
                                double ior_sigma);

}  // namespace duostream
