// Command-line entry point: train / simulate / encode / ablate / report.
// Exit codes: 0 ok, 2 config error, 3 numeric failure, 4 missing input.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "duostream/analysis.hpp"
#include "duostream/config.hpp"
#include "duostream/csv.hpp"
#include "duostream/errors.hpp"
#include "duostream/fixation.hpp"
#include "duostream/image_io.hpp"
#include "duostream/rng.hpp"
#include "duostream/scenes.hpp"
#include "duostream/streams.hpp"
#include "duostream/synthbrain.hpp"
#include "duostream/tnsr.hpp"
#include "duostream/training.hpp"

namespace fs = std::filesystem;
using namespace duostream;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<uint64_t> seed_flag;
  int threads = 1;
};

uint64_t resolve_seed(const IniFile& ini, const CommonArgs& args) {
  uint64_t seed = static_cast<uint64_t>(ini.get_int_or("run", "seed", 42));
  if (const char* env = std::getenv("DUOSTREAM_SEED"))
    seed = static_cast<uint64_t>(std::stoull(env));
  if (args.seed_flag) seed = *args.seed_flag;
  return seed;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw MissingInputError("cannot create output directory " + dir);
}

Stream load_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw MissingInputError("missing checkpoint " + path);
  return Stream::load(path);
}

// prefer the fine-tuned checkpoint, fall back to the pretraining stage
Stream load_stream_role(const std::string& dir, bool where_role) {
  const std::string s3 = dir + "/" + (where_role ? kWhereStage3 : kWhatStage3);
  const std::string s12 = dir + "/" + (where_role ? kWhereStage1 : kWhatStage2);
  if (fs::exists(s3)) return Stream::load(s3);
  if (fs::exists(s12)) return Stream::load(s12);
  throw MissingInputError("missing checkpoint " + s3 + " (or " + s12 + ")");
}

SceneDataset dataset_from_ini(const IniFile& ini, uint64_t seed, bool train) {
  SceneDataset d;
  d.config = scene_config_from_ini(ini);
  d.base_seed = mix_seed(seed, train ? 0x747261696eull : 0x76616cull);
  d.count = static_cast<int>(ini.get_int_or(
      "data", train ? "train_scenes" : "val_scenes", train ? 2000 : 300));
  return d;
}

bool wide_where_view(const IniFile& ini) {
  const std::string v = ini.get_or("model", "where_view", "wide");
  if (v != "wide" && v != "narrow")
    throw ConfigError("config: model.where_view must be wide or narrow");
  return v == "wide";
}

bool wide_what_view(const IniFile& ini) {
  const std::string v = ini.get_or("model", "what_view", "narrow");
  if (v != "wide" && v != "narrow")
    throw ConfigError("config: model.what_view must be wide or narrow");
  return v == "wide";
}

int cmd_train(const CommonArgs& args, int stage, bool cache_scenes) {
  const IniFile ini = IniFile::parse_file(args.config_path);
  const uint64_t seed = resolve_seed(ini, args);
  ensure_dir(args.out_dir);

  const TrainSchedule schedule = schedule_from_ini(ini, stage);
  const SceneDataset train_data = dataset_from_ini(ini, seed, true);
  const SceneDataset val_data = dataset_from_ini(ini, seed, false);
  if (cache_scenes) save_scene_cache(args.out_dir + "/scenes", train_data);

  const std::string metrics_path =
      args.out_dir + "/metrics_s" + std::to_string(stage) + ".csv";
  CsvWriter metrics(metrics_path,
                    {"stage", "epoch", "train_loss", "val_kl", "val_f1"});

  if (stage == 1) {
    StreamConfig cfg =
        stream_config_from_ini(ini, Objective::Saliency, wide_where_view(ini));
    Stream where(cfg, mix_seed(seed, 0x7768657265ull));
    stage1_train(where, train_data, val_data, schedule, seed, &metrics);
    where.save(args.out_dir + "/" + kWhereStage1);
  } else if (stage == 2) {
    const std::string fix_ckpt =
        ini.get_or("train", "fixation_ckpt", args.out_dir + "/" + kWhereStage1);
    Stream where = load_checkpoint(fix_ckpt);
    StreamConfig cfg =
        stream_config_from_ini(ini, Objective::Recognition, wide_what_view(ini));
    Stream what(cfg, mix_seed(seed, 0x77686174ull));
    stage2_train(what, where, train_data, val_data, schedule, seed, &metrics);
    what.save(args.out_dir + "/" + kWhatStage2);
  } else {
    Stream where = load_checkpoint(args.out_dir + "/" + kWhereStage1);
    Stream what = load_checkpoint(args.out_dir + "/" + kWhatStage2);
    stage3_train(where, what, train_data, val_data, schedule, seed, &metrics);
    where.save(args.out_dir + "/" + kWhereStage3);
    what.save(args.out_dir + "/" + kWhatStage3);
  }

  write_manifest(args.out_dir, "train --stage " + std::to_string(stage), ini,
                 seed, args.threads, {args.config_path});
  return 0;
}

void write_map_pgm(const std::string& path, const std::vector<float>& map,
                   int grid) {
  // scaled so the peak is white
  float peak = 0.0f;
  for (float v : map) peak = std::max(peak, v);
  std::vector<float> scaled(map.size());
  for (size_t i = 0; i < map.size(); ++i)
    scaled[i] = peak > 0.0f ? map[i] / peak : 0.0f;
  write_pgm(path, scaled, grid, grid);
}

int cmd_simulate(const CommonArgs& args, const std::string& ckpt,
                 const std::string& what_ckpt, int n_images,
                 const std::string& mode_name, bool warp_dump) {
  const IniFile ini = IniFile::parse_file(args.config_path);
  const uint64_t seed = resolve_seed(ini, args);
  ensure_dir(args.out_dir);

  Stream where = load_checkpoint(ckpt);
  std::optional<Stream> what;
  if (!what_ckpt.empty()) what = load_checkpoint(what_ckpt);

  const FixationMode mode =
      mode_name == "random" ? FixationMode::Random : FixationMode::Learned;
  const SceneConfig scene_cfg = scene_config_from_ini(ini);
  const double ior_sigma = ini.get_double_or("model", "ior_sigma", 0.1);
  const int grid = where.config().saliency_grid;

  for (int i = 0; i < n_images; ++i) {
    const SyntheticScene scene = gen_synthetic_scene(
        mix_seed(seed, 0x73696dull + static_cast<uint64_t>(i)), scene_cfg);
    LoopOptions opts;
    opts.num_fixations = where.config().num_fixations;
    opts.mode = mode;
    opts.ior_sigma = ior_sigma;
    opts.seed = mix_seed(seed, static_cast<uint64_t>(i));
    LoopResult loop =
        run_fixation_loop(scene.image, &where, what ? &*what : nullptr, opts);
    const FixationTrace& trace = loop.traces[0];

    char stem[64];
    std::snprintf(stem, sizeof(stem), "img_%03d", i);
    const std::string base = args.out_dir + "/" + stem;
    write_map_pgm(base + "_saliency.pgm", trace.saliency_maps.back(), grid);
    write_map_pgm(base + "_iormap.pgm",
                  apply_ior(trace.saliency_maps.back(), trace.ior_maps.back()),
                  grid);
    Tensor overlay = scene.image.detach();
    std::vector<PixelPoint> pts;
    for (const Vec2& f : trace.fixations)
      pts.push_back({static_cast<int>(f.x * (scene_cfg.image_size - 1)),
                     static_cast<int>(f.y * (scene_cfg.image_size - 1))});
    draw_fixation_overlay(overlay, pts);
    write_ppm(base + "_overlay.ppm", overlay);
    write_trace_csv(base + "_trace.csv", trace);
  }

  if (warp_dump) {
    for (double a : {kWideViewA, kNarrowViewA}) {
      RetinalParams params;
      params.a = a;
      params.fixation = {0.5, 0.5};
      const SamplingGrid g = build_sampling_grid(params, scene_cfg.image_size,
                                                 scene_cfg.image_size);
      char name[64];
      std::snprintf(name, sizeof(name), "/warp_a%.1f.csv", a);
      write_warp_dump(args.out_dir + name, g);
    }
  }

  write_manifest(args.out_dir, "simulate", ini, seed, args.threads,
                 {args.config_path, ckpt});
  return 0;
}

int cmd_encode(const CommonArgs& args, const std::string& model_dir,
               const std::string& teacher_dir, const std::string& features_where,
               const std::string& features_what, const std::string& voxels_path,
               const std::string& mode_name, bool emit_session) {
  const IniFile ini = IniFile::parse_file(args.config_path);
  const uint64_t seed = resolve_seed(ini, args);
  ensure_dir(args.out_dir);
  PipelineConfig cfg = pipeline_config_from_ini(ini, seed, args.threads);

  EncodingResult enc;
  TeacherVoxelSet voxels;
  std::vector<std::string> inputs = {args.config_path};

  const bool file_mode = !voxels_path.empty();
  if (file_mode) {
    if (features_where.empty() || features_what.empty())
      throw ConfigError(
          "encode: file mode needs --features-where and --features-what");
    const FeatureTimeseries fw = load_features_tnsr(features_where);
    const FeatureTimeseries fh = load_features_tnsr(features_what);
    voxels = load_voxels_tnsr(voxels_path);
    enc = run_encoding(fw, fh, voxels.values, voxels.n_volumes, voxels.n_vox,
                       cfg.scan, cfg.encoding);
    inputs.insert(inputs.end(), {features_where, features_what, voxels_path});
  } else {
    if (model_dir.empty() || teacher_dir.empty())
      throw ConfigError(
          "encode: need --model-dir and --teacher-dir (or file inputs)");
    Stream where = load_stream_role(model_dir, true);
    Stream what = load_stream_role(model_dir, false);
    Stream teacher_where = load_stream_role(teacher_dir, true);
    Stream teacher_what = load_stream_role(teacher_dir, false);
    const FixationMode mode =
        mode_name == "random" ? FixationMode::Random : FixationMode::Learned;

    if (emit_session) {
      MovieSession movie{cfg.session};
      std::vector<ExtractSpec> specs = {{&where, "where", false},
                                        {&what, "what", false}};
      ExtractResult ex = extract_session_features(
          movie, mode == FixationMode::Learned ? &where : nullptr, specs, mode,
          cfg.ior_sigma, mix_seed(cfg.session.seed, 0x616e616c79ull));
      TeacherSession ts = simulate_session(teacher_where, teacher_what,
                                           cfg.session, cfg.voxels, cfg.ior_sigma);
      save_features_tnsr(args.out_dir + "/features_where.tnsr", ex.features[0]);
      save_features_tnsr(args.out_dir + "/features_what.tnsr", ex.features[1]);
      save_voxels_tnsr(args.out_dir + "/voxels.tnsr", ts.voxels);
      voxels = ts.voxels;
      enc = run_encoding(ex.features[0], ex.features[1], voxels.values,
                         voxels.n_volumes, voxels.n_vox, cfg.scan, cfg.encoding);
    } else {
      EncodePipelineResult res =
          run_encode_pipeline(where, what, teacher_where, teacher_what, cfg, mode);
      enc = std::move(res.encoding);
      voxels = std::move(res.voxels);
    }
    inputs.insert(inputs.end(), {model_dir, teacher_dir});
  }

  write_encoding_csv(args.out_dir + "/encoding_results.csv", enc);
  write_voxel_labels_csv(args.out_dir + "/voxel_labels.csv", voxels);
  write_report_csv(args.out_dir + "/report.csv", summarize_rois(enc, voxels));
  write_manifest(args.out_dir, "encode", ini, seed, args.threads, inputs);
  return 0;
}

int cmd_ablate(const CommonArgs& args, const std::string& model_dir,
               const std::string& control_dir, const std::string& teacher_dir) {
  const IniFile ini = IniFile::parse_file(args.config_path);
  const uint64_t seed = resolve_seed(ini, args);
  ensure_dir(args.out_dir);
  PipelineConfig cfg = pipeline_config_from_ini(ini, seed, args.threads);

  Stream where = load_stream_role(model_dir, true);
  Stream what = load_stream_role(model_dir, false);
  Stream control_a = load_checkpoint(control_dir + "/" + kWhereStage1);
  Stream control_b = load_checkpoint(control_dir + "/" + kWhatStage2);
  Stream teacher_where = load_stream_role(teacher_dir, true);
  Stream teacher_what = load_stream_role(teacher_dir, false);

  AblationResult ablation = run_ablation(where, what, control_a, control_b,
                                         teacher_where, teacher_what, cfg);

  write_combos_csv(args.out_dir + "/combinations.csv", ablation);
  write_delta_r_csv(args.out_dir + "/delta_r.csv", ablation);
  write_voxel_labels_csv(args.out_dir + "/voxel_labels.csv", ablation.voxels);
  for (const ComboResult& combo : ablation.combos) {
    write_encoding_csv(args.out_dir + "/encoding_results_combo" +
                           std::to_string(combo.id) + ".csv",
                       combo.encoding);
  }
  // the proposed pairing doubles as the headline encoding result
  write_encoding_csv(args.out_dir + "/encoding_results.csv",
                     ablation.combos[4].encoding);
  write_report_csv(args.out_dir + "/report.csv",
                   summarize_rois(ablation.combos[4].encoding, ablation.voxels));
  write_manifest(args.out_dir, "ablate", ini, seed, args.threads,
                 {args.config_path, model_dir, control_dir, teacher_dir});
  return 0;
}

int cmd_report(const std::string& in_dir, const std::string& out_dir) {
  ensure_dir(out_dir);
  const auto enc_rows = csv_read(in_dir + "/encoding_results.csv");
  const auto label_rows = csv_read(in_dir + "/voxel_labels.csv");
  if (enc_rows.size() < 2)
    throw MissingInputError("report: empty encoding_results.csv in " + in_dir);
  if (label_rows.size() != enc_rows.size())
    throw MissingInputError("report: voxel_labels.csv does not match results");

  {
    CsvWriter scatter(out_dir + "/scatter.csv",
                      {"voxel_id", "r_what", "r_where", "label", "roi"});
    for (size_t i = 1; i < enc_rows.size(); ++i) {
      scatter.field(enc_rows[i][0]);
      scatter.field(enc_rows[i][2]).field(enc_rows[i][1]);
      scatter.field(label_rows[i][1]).field(label_rows[i][2]);
      scatter.end_row();
    }
  }

  struct Group {
    std::string label;
    int n = 0;
    double sum_rw = 0.0, sum_rh = 0.0;
    std::vector<double> pwhere;
    int fdr_where = 0, fdr_what = 0;
  };
  std::map<std::string, Group> groups;
  std::map<std::string, Group> rois;  // key "label:roi"
  for (size_t i = 1; i < enc_rows.size(); ++i) {
    const std::string& label = label_rows[i][1];
    auto feed = [&](Group& g) {
      g.label = label;
      g.n += 1;
      g.sum_rw += std::stod(enc_rows[i][1]);
      g.sum_rh += std::stod(enc_rows[i][2]);
      if (enc_rows[i][3] != "nan") g.pwhere.push_back(std::stod(enc_rows[i][3]));
      g.fdr_where += enc_rows[i][6] == "1";
      g.fdr_what += enc_rows[i][7] == "1";
    };
    feed(groups[label]);
    feed(rois[label + ":" + label_rows[i][2]]);
  }

  {
    CsvWriter roi_csv(
        out_dir + "/roi_scatter.csv",
        {"roi", "label", "n_voxels", "mean_r_what", "mean_r_where"});
    for (auto& [key, g] : rois) {
      if (g.label == "noise") continue;
      roi_csv.field(key.substr(key.find(':') + 1)).field(g.label);
      roi_csv.field(static_cast<int64_t>(g.n));
      roi_csv.field(g.sum_rh / g.n).field(g.sum_rw / g.n);
      roi_csv.end_row();
    }
  }

  std::ofstream md(out_dir + "/summary.md");
  md << "# Encoding summary\n\n";
  md << "| group | voxels | mean r_where | mean r_what | median p_where |"
        " FDR hits (where/what) |\n";
  md << "|---|---|---|---|---|---|\n";
  for (auto& [label, g] : groups) {
    double med = 0.0;
    if (!g.pwhere.empty()) {
      std::sort(g.pwhere.begin(), g.pwhere.end());
      med = g.pwhere[g.pwhere.size() / 2];
    }
    char line[256];
    std::snprintf(line, sizeof(line), "| %s | %d | %s | %s | %s | %d/%d |\n",
                  label.c_str(), g.n, format_double(g.sum_rw / g.n).c_str(),
                  format_double(g.sum_rh / g.n).c_str(),
                  format_double(med).c_str(), g.fdr_where, g.fdr_what);
    md << line;
  }
  if (fs::exists(in_dir + "/combinations.csv")) {
    md << "\n## Stream pairings\n\n";
    md << "| combination | where member | what member | separability |\n";
    md << "|---|---|---|---|\n";
    const auto combos = csv_read(in_dir + "/combinations.csv");
    for (size_t i = 1; i < combos.size(); ++i) {
      md << "| " << combos[i][0] << " | " << combos[i][1] << " | "
         << combos[i][2] << " | " << combos[i][3] << " |\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-stream active-vision model and voxel encoding pipeline"};
  app.require_subcommand(1);

  CommonArgs args;
  int stage = 1;
  bool cache_scenes = false;
  std::string ckpt, what_ckpt, mode_name = "learned";
  int n_images = 4;
  bool warp_dump = false, emit_session = false;
  std::string model_dir, control_dir, teacher_dir;
  std::string features_where, features_what, voxels_path;
  std::string report_in;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", args.config_path, "INI config")->required();
    cmd->add_option("--out", args.out_dir, "output directory")->required();
    cmd->add_option("--seed", args.seed_flag, "seed override");
    cmd->add_option("--threads", args.threads, "worker threads")
        ->check(CLI::PositiveNumber);
  };

  CLI::App* train = app.add_subcommand("train", "run one training stage");
  add_common(train);
  train->add_option("--stage", stage, "curriculum stage")
      ->required()
      ->check(CLI::Range(1, 3));
  train->add_flag("--cache-scenes", cache_scenes, "write the scene cache");

  CLI::App* simulate =
      app.add_subcommand("simulate", "fixation traces and overlay images");
  add_common(simulate);
  simulate->add_option("--ckpt", ckpt, "saliency stream checkpoint")->required();
  simulate->add_option("--what-ckpt", what_ckpt, "recognition stream checkpoint");
  simulate->add_option("--images", n_images, "number of scenes")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--mode", mode_name, "learned|random")
      ->check(CLI::IsMember({"learned", "random"}));
  simulate->add_flag("--warp-dump", warp_dump, "write retinal warp CSVs");

  CLI::App* encode = app.add_subcommand("encode", "voxelwise encoding analysis");
  add_common(encode);
  encode->add_option("--model-dir", model_dir, "trained model directory");
  encode->add_option("--teacher-dir", teacher_dir, "teacher model directory");
  encode->add_option("--features-where", features_where, "features TNSR");
  encode->add_option("--features-what", features_what, "features TNSR");
  encode->add_option("--voxels", voxels_path, "voxel responses TNSR");
  encode->add_option("--mode", mode_name, "learned|random fixations")
      ->check(CLI::IsMember({"learned", "random"}));
  encode->add_flag("--emit-session", emit_session,
                   "persist features and voxels as TNSR");

  CLI::App* ablate =
      app.add_subcommand("ablate", "all five stream pairings plus delta-r");
  add_common(ablate);
  ablate->add_option("--model-dir", model_dir, "canonical run directory")
      ->required();
  ablate->add_option("--control-dir", control_dir, "control run directory")
      ->required();
  ablate->add_option("--teacher-dir", teacher_dir, "teacher run directory")
      ->required();

  CLI::App* report =
      app.add_subcommand("report", "summaries from persisted CSVs");
  report->add_option("--in", report_in, "directory with encoding CSVs")
      ->required();
  report->add_option("--out", args.out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(args, stage, cache_scenes);
    if (simulate->parsed())
      return cmd_simulate(args, ckpt, what_ckpt, n_images, mode_name, warp_dump);
    if (encode->parsed())
      return cmd_encode(args, model_dir, teacher_dir, features_where,
                        features_what, voxels_path, mode_name, emit_session);
    if (ablate->parsed())
      return cmd_ablate(args, model_dir, control_dir, teacher_dir);
    if (report->parsed()) return cmd_report(report_in, args.out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const MissingInputError& e) {
    std::cerr << "missing input: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
