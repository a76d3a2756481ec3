#include "duostream/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "duostream/config.hpp"
#include "duostream/csv.hpp"
#include "duostream/errors.hpp"
#include "duostream/rng.hpp"
#include "duostream/tnsr.hpp"
#include "json.hpp"

namespace duostream {

namespace {
constexpr uint64_t kAnalysisExtractSalt = 0x616e616c79ull;
constexpr uint64_t kRandomExtractSalt = 0x72616e64ull;
}  // namespace

void save_features_tnsr(const std::string& path, const FeatureTimeseries& f) {
  TnsrFile file;
  TnsrEntry meta;
  meta.shape = {3};
  meta.data = {static_cast<float>(f.frame_rate), static_cast<float>(f.time_steps),
               static_cast<float>(f.layers.size())};
  file["meta"] = std::move(meta);
  char key[64];
  for (size_t i = 0; i < f.layers.size(); ++i) {
    std::snprintf(key, sizeof(key), "layer_%03zu_%s", i, f.layers[i].id.c_str());
    TnsrEntry e;
    e.shape = {f.time_steps, f.layers[i].units};
    e.data = f.layers[i].data;
    file[key] = std::move(e);
  }
  tnsr_write(path, file);
}

FeatureTimeseries load_features_tnsr(const std::string& path) {
  TnsrFile file = tnsr_read(path);
  auto meta = file.find("meta");
  if (meta == file.end())
    throw MissingInputError("features file lacks meta entry: " + path);
  FeatureTimeseries f;
  f.frame_rate = meta->second.data.at(0);
  f.time_steps = static_cast<int>(meta->second.data.at(1));
  for (const auto& [name, entry] : file) {
    if (name.rfind("layer_", 0) != 0) continue;
    LayerFeatures layer;
    layer.id = name.substr(10);  // strip "layer_NNN_"
    layer.units = entry.shape.at(1);
    layer.data = entry.data;
    f.layers.push_back(std::move(layer));
  }
  f.validate();
  return f;
}

void save_voxels_tnsr(const std::string& path, const TeacherVoxelSet& v) {
  TnsrFile file;
  TnsrEntry values;
  values.shape = {v.n_volumes, v.n_vox};
  values.data = v.values;
  file["voxels"] = std::move(values);
  TnsrEntry labels;
  labels.shape = {v.n_vox};
  for (const auto& l : v.labels)
    labels.data.push_back(l == "dorsal" ? 0.0f : l == "ventral" ? 1.0f : 2.0f);
  file["labels"] = std::move(labels);
  TnsrEntry rois;
  rois.shape = {v.n_vox};
  for (int r : v.roi_ids) rois.data.push_back(static_cast<float>(r));
  file["roi_ids"] = std::move(rois);
  TnsrEntry meta;
  meta.shape = {3};
  meta.data = {static_cast<float>(v.snr),
               static_cast<float>(static_cast<uint32_t>(v.seed)),
               static_cast<float>(static_cast<uint32_t>(v.seed >> 32))};
  file["meta"] = std::move(meta);
  tnsr_write(path, file);
}

TeacherVoxelSet load_voxels_tnsr(const std::string& path) {
  TnsrFile file = tnsr_read(path);
  TeacherVoxelSet v;
  const TnsrEntry& values = file.at("voxels");
  v.n_volumes = values.shape.at(0);
  v.n_vox = values.shape.at(1);
  v.values = values.data;
  for (float code : file.at("labels").data)
    v.labels.push_back(code == 0.0f ? "dorsal" : code == 1.0f ? "ventral" : "noise");
  for (float r : file.at("roi_ids").data) v.roi_ids.push_back(static_cast<int>(r));
  const auto& meta = file.at("meta").data;
  v.snr = meta.at(0);
  v.seed = static_cast<uint64_t>(static_cast<uint32_t>(meta.at(1))) |
           (static_cast<uint64_t>(static_cast<uint32_t>(meta.at(2))) << 32);
  return v;
}

void write_voxel_labels_csv(const std::string& path, const TeacherVoxelSet& v) {
  CsvWriter csv(path, {"voxel_id", "label", "roi"});
  for (int i = 0; i < v.n_vox; ++i) {
    csv.field(static_cast<int64_t>(i))
        .field(v.labels[static_cast<size_t>(i)])
        .field(static_cast<int64_t>(v.roi_ids[static_cast<size_t>(i)]));
    csv.end_row();
  }
}

PipelineConfig pipeline_config_from_ini(const IniFile& ini, uint64_t seed,
                                        int threads) {
  PipelineConfig cfg;
  cfg.session = session_config_from_ini(ini);
  cfg.session.seed = mix_seed(seed, 0x73657373696full);
  cfg.voxels = teacher_voxel_config_from_ini(ini);
  cfg.voxels.seed = mix_seed(seed, 0x766f78ull);
  cfg.encoding = encoding_config_from_ini(ini);
  cfg.encoding.seed = mix_seed(seed, 0x656e63ull);
  cfg.encoding.threads = threads;
  cfg.scan.tr = cfg.session.tr;
  cfg.scan.train_fraction = ini.get_double_or("encoding", "train_fraction", 0.81);
  cfg.scan.test_fraction = 1.0 - cfg.scan.train_fraction;
  cfg.ior_sigma = ini.get_double_or("model", "ior_sigma", 0.1);
  return cfg;
}

std::vector<RoiSummary> summarize_rois(const EncodingResult& enc,
                                       const TeacherVoxelSet& voxels) {
  std::map<int, RoiSummary> rois;
  std::map<int, std::vector<double>> pwheres;
  for (int v = 0; v < voxels.n_vox; ++v) {
    const int roi = voxels.roi_ids[static_cast<size_t>(v)];
    if (roi < 0) continue;
    RoiSummary& s = rois[roi];
    s.roi_id = roi;
    s.label = voxels.labels[static_cast<size_t>(v)];
    s.n_voxels += 1;
    s.mean_r_where += enc.voxels[static_cast<size_t>(v)].r_where;
    s.mean_r_what += enc.voxels[static_cast<size_t>(v)].r_what;
    if (enc.voxels[static_cast<size_t>(v)].pwhere.defined)
      pwheres[roi].push_back(enc.voxels[static_cast<size_t>(v)].pwhere.value);
  }
  std::vector<RoiSummary> out;
  for (auto& [roi, s] : rois) {
    s.mean_r_where /= s.n_voxels;
    s.mean_r_what /= s.n_voxels;
    auto& pw = pwheres[roi];
    if (!pw.empty()) {
      std::sort(pw.begin(), pw.end());
      s.median_p_where = pw[pw.size() / 2];
    }
    out.push_back(s);
  }
  return out;
}

double roi_separability(const std::vector<RoiSummary>& rois) {
  std::vector<std::pair<double, double>> points;
  for (const auto& r : rois) points.push_back({r.mean_r_what, r.mean_r_where});
  return separability(points);
}

double median_pwhere_for_label(const EncodingResult& enc,
                               const TeacherVoxelSet& voxels,
                               const std::string& label) {
  std::vector<double> values;
  for (int v = 0; v < voxels.n_vox; ++v) {
    if (voxels.labels[static_cast<size_t>(v)] != label) continue;
    if (!enc.voxels[static_cast<size_t>(v)].pwhere.defined) continue;
    values.push_back(enc.voxels[static_cast<size_t>(v)].pwhere.value);
  }
  if (values.empty()) throw DimensionError("median p_where: no defined voxels");
  std::sort(values.begin(), values.end());
  return values[values.size() / 2];
}

void write_report_csv(const std::string& path,
                      const std::vector<RoiSummary>& rois) {
  CsvWriter csv(path, {"roi", "label", "n_voxels", "mean_r_where", "mean_r_what",
                       "median_p_where"});
  for (const auto& r : rois) {
    csv.field(static_cast<int64_t>(r.roi_id)).field(r.label);
    csv.field(static_cast<int64_t>(r.n_voxels));
    csv.field(r.mean_r_where).field(r.mean_r_what).field(r.median_p_where);
    csv.end_row();
  }
}

EncodePipelineResult run_encode_pipeline(Stream& where, Stream& what,
                                         Stream& teacher_where,
                                         Stream& teacher_what,
                                         const PipelineConfig& config,
                                         FixationMode mode) {
  TeacherSession teacher =
      simulate_session(teacher_where, teacher_what, config.session,
                       config.voxels, config.ior_sigma);

  MovieSession movie{config.session};
  std::vector<ExtractSpec> specs = {{&where, "where", false},
                                    {&what, "what", false}};
  ExtractResult extracted = extract_session_features(
      movie, mode == FixationMode::Learned ? &where : nullptr, specs, mode,
      config.ior_sigma,
      mix_seed(config.session.seed,
               mode == FixationMode::Learned ? kAnalysisExtractSalt
                                             : kRandomExtractSalt));

  EncodePipelineResult out;
  out.voxels = teacher.voxels;
  out.encoding = run_encoding(extracted.features[0], extracted.features[1],
                              out.voxels.values, out.voxels.n_volumes,
                              out.voxels.n_vox, config.scan, config.encoding);
  out.rois = summarize_rois(out.encoding, out.voxels);
  return out;
}

AblationResult run_ablation(Stream& where, Stream& what, Stream& control_a,
                            Stream& control_b, Stream& teacher_where,
                            Stream& teacher_what, const PipelineConfig& config) {
  TeacherSession teacher =
      simulate_session(teacher_where, teacher_what, config.session,
                       config.voxels, config.ior_sigma);
  AblationResult out;
  out.voxels = teacher.voxels;
  const int n_vol = out.voxels.n_volumes;
  const int n_vox = out.voxels.n_vox;

  MovieSession movie{config.session};
  std::vector<ExtractSpec> learned_specs = {{&where, "where", false},
                                            {&what, "what", false},
                                            {&control_a, "control_a", false},
                                            {&control_b, "control_b", false}};
  ExtractResult learned = extract_session_features(
      movie, &where, learned_specs, FixationMode::Learned, config.ior_sigma,
      mix_seed(config.session.seed, kAnalysisExtractSalt));

  std::vector<ExtractSpec> random_specs = {{&where, "where", false},
                                           {&what, "what", false}};
  ExtractResult random = extract_session_features(
      movie, nullptr, random_specs, FixationMode::Random, config.ior_sigma,
      mix_seed(config.session.seed, kRandomExtractSalt));

  // regressors per stream, shared across pairings
  std::vector<PreparedRegressors> prep(4);
  for (int s = 0; s < 4; ++s)
    prep[static_cast<size_t>(s)] = prepare_regressors(
        learned.features[static_cast<size_t>(s)], config.encoding, n_vol,
        config.scan.tr);
  const PreparedRegressors prep_where_rand = prepare_regressors(
      random.features[0], config.encoding, n_vol, config.scan.tr);
  const PreparedRegressors prep_what_rand = prepare_regressors(
      random.features[1], config.encoding, n_vol, config.scan.tr);

  struct Pairing {
    int where_idx;
    int what_idx;
    const char* where_name;
    const char* what_name;
  };
  // 1 and 2 differ only in input view inside the pair, 3 and 4 only in
  // objective, 5 in both (the proposed pairing).
  const Pairing pairings[5] = {
      {0, 2, "where", "control_a"},
      {3, 1, "control_b", "what"},
      {0, 3, "where", "control_b"},
      {2, 1, "control_a", "what"},
      {0, 1, "where", "what"},
  };

  for (int c = 0; c < 5; ++c) {
    ComboResult combo;
    combo.id = c + 1;
    combo.where_member = pairings[c].where_name;
    combo.what_member = pairings[c].what_name;
    combo.encoding = run_encoding_prepared(
        prep[static_cast<size_t>(pairings[c].where_idx)],
        prep[static_cast<size_t>(pairings[c].what_idx)], out.voxels.values,
        n_vol, n_vox, config.scan, config.encoding);
    const std::vector<RoiSummary> rois = summarize_rois(combo.encoding, out.voxels);
    combo.separability = roi_separability(rois);
    combo.median_pwhere_dorsal =
        median_pwhere_for_label(combo.encoding, out.voxels, "dorsal");
    combo.median_pwhere_ventral =
        median_pwhere_for_label(combo.encoding, out.voxels, "ventral");
    out.combos.push_back(std::move(combo));
  }

  const EncodingResult random_enc =
      run_encoding_prepared(prep_where_rand, prep_what_rand, out.voxels.values,
                            n_vol, n_vox, config.scan, config.encoding);
  const EncodingResult& learned_enc = out.combos[4].encoding;
  out.delta_r_where.resize(static_cast<size_t>(n_vox));
  out.delta_r_what.resize(static_cast<size_t>(n_vox));
  for (int v = 0; v < n_vox; ++v) {
    out.delta_r_where[static_cast<size_t>(v)] =
        learned_enc.voxels[static_cast<size_t>(v)].r_where -
        random_enc.voxels[static_cast<size_t>(v)].r_where;
    out.delta_r_what[static_cast<size_t>(v)] =
        learned_enc.voxels[static_cast<size_t>(v)].r_what -
        random_enc.voxels[static_cast<size_t>(v)].r_what;
  }
  return out;
}

void write_combos_csv(const std::string& path, const AblationResult& ablation) {
  CsvWriter csv(path, {"combination", "where_member", "what_member",
                       "separability", "median_p_where_dorsal",
                       "median_p_where_ventral"});
  for (const auto& combo : ablation.combos) {
    csv.field(static_cast<int64_t>(combo.id))
        .field(combo.where_member)
        .field(combo.what_member);
    csv.field(combo.separability)
        .field(combo.median_pwhere_dorsal)
        .field(combo.median_pwhere_ventral);
    csv.end_row();
  }
}

void write_delta_r_csv(const std::string& path, const AblationResult& ablation) {
  CsvWriter csv(path, {"voxel_id", "label", "delta_r_where", "delta_r_what"});
  for (size_t v = 0; v < ablation.delta_r_where.size(); ++v) {
    csv.field(static_cast<int64_t>(v)).field(ablation.voxels.labels[v]);
    csv.field(ablation.delta_r_where[v]).field(ablation.delta_r_what[v]);
    csv.end_row();
  }
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const IniFile& ini, uint64_t seed, int threads,
                    const std::vector<std::string>& inputs) {
  nlohmann::json j;
  j["command"] = command;
  j["version"] = "0.1.0";
  j["seed"] = seed;
  j["threads"] = threads;
  j["inputs"] = inputs;
  j["config"] = ini.flatten();
  std::ofstream out(out_dir + "/manifest.json");
  if (!out) throw MissingInputError("cannot write manifest in " + out_dir);
  out << j.dump(2) << "\n";
}

}  // namespace duostream
