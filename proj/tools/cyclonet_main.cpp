// Command-line front end: synthetic data generation, event-disjoint splits,
// ensemble and expert training, prediction, evaluation, and heatmap export.
//
// Exit codes: 0 success, 2 configuration error, 3 data/file error,
// 4 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cyclonet/checkpoint.hpp"
#include "cyclonet/dataset.hpp"
#include "cyclonet/eval.hpp"
#include "cyclonet/explain.hpp"
#include "cyclonet/imgops.hpp"
#include "cyclonet/models.hpp"
#include "cyclonet/pnm.hpp"
#include "cyclonet/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace cyclonet;

namespace {

struct RunConfig {
  std::uint64_t seed = 1234;
  int jobs = 1;
  double val_fraction = 0.2;
  std::string out_dir;

  // dataset: either on-disk files or synthetic parameters
  std::string images_dir;
  std::string labels_csv;
  bool use_synth = false;
  SynthConfig synth;

  NetworkConfig network;
  TrainHyper training;
  SamplerConfig sampler;
  int ensemble_members = 10;
  std::string overlap = "third";
};

json sampler_to_json(const SamplerConfig& s) {
  return json{{"rotation_fraction", s.rotation_fraction},
              {"rotation_policy",
               s.rotation_policy == RotationPolicy::QuarterTurns ? "quarter" : "arbitrary"}};
}

json run_config_to_json(const RunConfig& c) {
  json dataset;
  if (c.use_synth) {
    dataset["synth"] = json{{"n", c.synth.n},
                            {"size", c.synth.size},
                            {"seed", c.synth.seed},
                            {"speed_min", c.synth.speed_min},
                            {"speed_max", c.synth.speed_max},
                            {"noise", c.synth.noise_sigma}};
  } else {
    dataset["images"] = c.images_dir;
    dataset["labels"] = c.labels_csv;
  }
  return json{
      {"seed", c.seed},
      {"jobs", c.jobs},
      {"val_fraction", c.val_fraction},
      {"out_dir", c.out_dir},
      {"dataset", dataset},
      {"network", json{{"input_size", c.network.input_size},
                       {"conv_channels", c.network.conv_channels},
                       {"fc_widths", c.network.fc_widths},
                       {"dropout_rate", c.network.dropout_rate},
                       {"l2_coeff", c.network.l2_coeff}}},
      {"training", json{{"learning_rate", c.training.learning_rate},
                        {"beta1", c.training.beta1},
                        {"beta2", c.training.beta2},
                        {"epsilon", c.training.epsilon},
                        {"epochs", c.training.epochs},
                        {"steps_per_epoch", c.training.steps_per_epoch},
                        {"early_stop_patience", c.training.early_stop_patience}}},
      {"sampler", sampler_to_json(c.sampler)},
      {"ensemble", json{{"members", c.ensemble_members}}},
      {"experts", json{{"overlap", c.overlap}}}};
}

void merge_config_json(RunConfig& c, const json& j) {
  c.seed = j.value("seed", c.seed);
  c.jobs = j.value("jobs", c.jobs);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.out_dir = j.value("out_dir", c.out_dir);
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    if (d.contains("synth")) {
      c.use_synth = true;
      const json& s = d.at("synth");
      c.synth.n = s.value("n", c.synth.n);
      c.synth.size = s.value("size", c.synth.size);
      c.synth.seed = s.value("seed", c.synth.seed);
      c.synth.speed_min = s.value("speed_min", c.synth.speed_min);
      c.synth.speed_max = s.value("speed_max", c.synth.speed_max);
      c.synth.noise_sigma = s.value("noise", c.synth.noise_sigma);
    }
    if (d.contains("images")) c.images_dir = d.at("images").get<std::string>();
    if (d.contains("labels")) c.labels_csv = d.at("labels").get<std::string>();
  }
  if (j.contains("network")) {
    const json& n = j.at("network");
    c.network.input_size = n.value("input_size", c.network.input_size);
    if (n.contains("conv_channels")) {
      const auto cc = n.at("conv_channels").get<std::vector<int>>();
      if (cc.size() != 5) throw ConfigError("config: conv_channels must list 5 widths");
      std::copy(cc.begin(), cc.end(), c.network.conv_channels.begin());
    }
    if (n.contains("fc_widths")) {
      const auto fw = n.at("fc_widths").get<std::vector<int>>();
      if (fw.size() != 2) throw ConfigError("config: fc_widths must list 2 widths");
      std::copy(fw.begin(), fw.end(), c.network.fc_widths.begin());
    }
    c.network.dropout_rate = n.value("dropout_rate", c.network.dropout_rate);
    c.network.l2_coeff = n.value("l2_coeff", c.network.l2_coeff);
  }
  if (j.contains("training")) {
    const json& t = j.at("training");
    c.training.learning_rate = t.value("learning_rate", c.training.learning_rate);
    c.training.beta1 = t.value("beta1", c.training.beta1);
    c.training.beta2 = t.value("beta2", c.training.beta2);
    c.training.epsilon = t.value("epsilon", c.training.epsilon);
    c.training.epochs = t.value("epochs", c.training.epochs);
    c.training.steps_per_epoch = t.value("steps_per_epoch", c.training.steps_per_epoch);
    c.training.early_stop_patience = t.value("early_stop_patience",
                                             c.training.early_stop_patience);
  }
  if (j.contains("sampler")) {
    const json& s = j.at("sampler");
    c.sampler.rotation_fraction = s.value("rotation_fraction", c.sampler.rotation_fraction);
    const std::string policy = s.value("rotation_policy", std::string("quarter"));
    if (policy == "quarter") {
      c.sampler.rotation_policy = RotationPolicy::QuarterTurns;
    } else if (policy == "arbitrary") {
      c.sampler.rotation_policy = RotationPolicy::ArbitraryAngle;
    } else {
      throw ConfigError("config: rotation_policy must be quarter or arbitrary");
    }
  }
  if (j.contains("ensemble")) c.ensemble_members = j.at("ensemble").value("members", 10);
  if (j.contains("experts")) c.overlap = j.at("experts").value("overlap", std::string("third"));
}

RunConfig load_run_config(const std::string& path) {
  RunConfig c;
  if (path.empty()) return c;
  std::ifstream in(path);
  if (!in) throw ConfigError("config file '" + path + "' cannot be opened");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  merge_config_json(c, j);
  return c;
}

void write_provenance(const RunConfig& c, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(out_dir / "run_config.json");
  out << run_config_to_json(c).dump(2) << '\n';
}

DatasetIndex load_configured_dataset(const RunConfig& c) {
  if (c.use_synth) return synth_generate(c.synth).index;
  if (c.images_dir.empty() || c.labels_csv.empty()) {
    throw ConfigError("config: dataset needs images+labels paths or synth parameters");
  }
  const LoadResult result = load_dataset(c.images_dir, c.labels_csv);
  for (const RowError& e : result.row_errors) {
    std::cerr << "  row " << e.row << ": " << e.message << '\n';
  }
  if (!result.row_errors.empty()) {
    std::cerr << result.row_errors.size() << " row(s) rejected, "
              << result.index.size() << " loaded\n";
  }
  if (result.index.samples.empty()) throw DataError("dataset: no loadable samples");
  return result.index;
}

OverlapPolicy overlap_from_string(const std::string& s) {
  if (s == "third") return OverlapPolicy::OneThirdAdjacent;
  if (s == "none") return OverlapPolicy::None;
  throw ConfigError("--overlap must be 'none' or 'third'");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << text;
}

int cmd_synth(const RunConfig& cfg) {
  const SynthDataset data = synth_generate(cfg.synth);
  const fs::path out = cfg.out_dir;
  write_provenance(cfg, out);
  save_dataset(data.index, out);
  {
    std::ofstream eyes(out / "eye_centers.csv");
    eyes << "image_id,eye_row,eye_col,wind_speed\n";
    char line[160];
    for (std::size_t i = 0; i < data.index.samples.size(); ++i) {
      std::snprintf(line, sizeof(line), "%s,%.4f,%.4f,%g\n",
                    data.index.samples[i].image_id.c_str(), data.truth[i].eye_row,
                    data.truth[i].eye_col, data.index.samples[i].wind_speed);
      eyes << line;
    }
  }
  std::cout << "wrote " << data.index.size() << " images, "
            << data.index.by_storm.size() << " storms, speeds "
            << data.index.by_speed.begin()->first << "-" << data.index.max_speed() << " to "
            << out.string() << '\n';
  return 0;
}

int cmd_split(const RunConfig& cfg) {
  const DatasetIndex index = load_configured_dataset(cfg);
  const auto [train_set, val_set] = event_disjoint_split(index, cfg.val_fraction, cfg.seed);
  const fs::path out = cfg.out_dir;
  write_provenance(cfg, out);
  write_labels_csv(train_set, out / "train_labels.csv");
  write_labels_csv(val_set, out / "val_labels.csv");
  std::cout << "train: " << train_set.size() << " images / " << train_set.by_storm.size()
            << " storms; val: " << val_set.size() << " images / " << val_set.by_storm.size()
            << " storms\n";
  return 0;
}

int cmd_train_global(const RunConfig& cfg) {
  const DatasetIndex index = load_configured_dataset(cfg);
  const auto [train_set, val_set] = event_disjoint_split(index, cfg.val_fraction, cfg.seed);
  const fs::path out = cfg.out_dir;
  write_provenance(cfg, out);

  std::cout << "training " << cfg.ensemble_members << " member(s) on " << train_set.size()
            << " images (" << train_set.by_speed.size() << " distinct speeds), "
            << cfg.training.epochs << " epochs, jobs=" << cfg.jobs << '\n';
  const EnsembleTrainResult result = bootstrap_train_ensemble(
      train_set, &val_set, cfg.ensemble_members, cfg.network, cfg.sampler, cfg.training,
      cfg.seed, cfg.jobs);
  save_ensemble(result.ensemble, out / "ensemble");
  char name[64];
  for (std::size_t i = 0; i < result.histories.size(); ++i) {
    std::snprintf(name, sizeof(name), "history_member_%03zu.csv", i);
    write_history_csv(result.histories[i], out / name);
    std::snprintf(name, sizeof(name), "member %03zu final val RMSE %.6f", i,
                  result.histories[i].epochs.back().val_rmse);
    std::cout << name << '\n';
  }
  const EvalReport report = evaluate(val_set, [&](std::span<const CycloneSample> batch) {
    std::vector<Image> images;
    images.reserve(batch.size());
    for (const CycloneSample& s : batch) images.push_back(s.image);
    return ensemble_predict(result.ensemble, images);
  });
  write_text(out / "val_report.json", report_to_json(report));
  write_text(out / "val_report.txt", report_to_table(report));
  std::cout << report_to_table(report);
  return 0;
}

int cmd_train_experts(const RunConfig& cfg, const std::string& gate_dir) {
  const DatasetIndex index = load_configured_dataset(cfg);
  const auto [train_set, val_set] = event_disjoint_split(index, cfg.val_fraction, cfg.seed);
  const fs::path out = cfg.out_dir;
  write_provenance(cfg, out);

  DistributedModel dm;
  dm.gate = load_ensemble(gate_dir);
  dm.overlap_policy = overlap_from_string(cfg.overlap);
  dm.dataset_max_speed = index.max_speed();
  dm.ranges = expert_ranges(dm.dataset_max_speed, dm.overlap_policy);

  std::cout << "training experts (overlap=" << cfg.overlap << ", dataset max speed "
            << dm.dataset_max_speed << ")\n";
  ExpertTrainResult result = train_experts(train_set, &val_set, dm.ranges, cfg.network,
                                           cfg.sampler, cfg.training, cfg.seed, cfg.jobs);
  for (const std::string& warning : result.warnings) std::cout << "warning: " << warning << '\n';
  char name[64];
  for (const auto& [category, history] : result.histories) {
    std::snprintf(name, sizeof(name), "history_expert_%s.csv", info(category).code);
    write_history_csv(history, out / name);
  }
  dm.experts = std::move(result.experts);
  save_distributed(dm, out / "distributed");
  std::cout << "saved distributed checkpoint with " << dm.experts.size() << " expert(s)\n";

  const EvalReport report = evaluate(val_set, [&](std::span<const CycloneSample> batch) {
    std::vector<Image> images;
    images.reserve(batch.size());
    for (const CycloneSample& s : batch) images.push_back(s.image);
    const std::vector<MoeDiagnostics> diags = moe_predict_batch(dm, images);
    std::vector<double> speeds;
    speeds.reserve(diags.size());
    for (const MoeDiagnostics& d : diags) speeds.push_back(d.final_speed);
    return speeds;
  });
  write_text(out / "val_report.json", report_to_json(report));
  write_text(out / "val_report.txt", report_to_table(report));
  std::cout << report_to_table(report);
  return 0;
}

struct LoadedPredictor {
  CheckpointKind kind;
  Model model;
  GlobalEnsemble ensemble;
  DistributedModel distributed;
};

LoadedPredictor load_predictor(const std::string& dir) {
  LoadedPredictor p;
  p.kind = detect_checkpoint(dir);
  switch (p.kind) {
    case CheckpointKind::Model: p.model = load_checkpoint(dir); break;
    case CheckpointKind::Ensemble: p.ensemble = load_ensemble(dir); break;
    case CheckpointKind::Distributed: p.distributed = load_distributed(dir); break;
  }
  return p;
}

std::vector<double> predictor_speeds(const LoadedPredictor& p, const std::vector<Image>& images,
                                     std::vector<MoeDiagnostics>* diagnostics) {
  switch (p.kind) {
    case CheckpointKind::Model:
      return predict_images(p.model, images);
    case CheckpointKind::Ensemble:
      return ensemble_predict(p.ensemble, images);
    case CheckpointKind::Distributed: {
      const std::vector<MoeDiagnostics> diags = moe_predict_batch(p.distributed, images);
      std::vector<double> speeds;
      speeds.reserve(diags.size());
      for (const MoeDiagnostics& d : diags) speeds.push_back(d.final_speed);
      if (diagnostics) *diagnostics = diags;
      return speeds;
    }
  }
  throw Error("unreachable checkpoint kind");
}

void write_routing_csv(const fs::path& path, const DatasetIndex& index,
                       const std::vector<MoeDiagnostics>& diags) {
  std::ofstream out(path);
  out << "image_id,gate_speed,category,expert_speed,final_speed,fallback\n";
  char line[256];
  for (std::size_t i = 0; i < diags.size(); ++i) {
    const MoeDiagnostics& d = diags[i];
    if (d.expert_used) {
      std::snprintf(line, sizeof(line), "%s,%.6f,%s,%.6f,%.6f,0\n",
                    index.samples[i].image_id.c_str(), d.gate_speed, info(d.category).code,
                    d.expert_speed, d.final_speed);
    } else {
      std::snprintf(line, sizeof(line), "%s,%.6f,%s,,%.6f,1\n",
                    index.samples[i].image_id.c_str(), d.gate_speed, info(d.category).code,
                    d.final_speed);
    }
    out << line;
  }
}

int cmd_evaluate(const RunConfig& cfg, const std::string& model_dir, bool identity_oracle) {
  const DatasetIndex index = load_configured_dataset(cfg);
  const fs::path out = cfg.out_dir;
  write_provenance(cfg, out);

  std::vector<MoeDiagnostics> diagnostics;
  EvalReport report;
  if (identity_oracle) {
    // debug stub: predictions read the true labels
    report = evaluate(index, [](std::span<const CycloneSample> batch) {
      std::vector<double> speeds;
      speeds.reserve(batch.size());
      for (const CycloneSample& s : batch) speeds.push_back(s.wind_speed);
      return speeds;
    });
  } else {
    const LoadedPredictor p = load_predictor(model_dir);
    report = evaluate(index, [&](std::span<const CycloneSample> batch) {
      std::vector<Image> images;
      images.reserve(batch.size());
      for (const CycloneSample& s : batch) images.push_back(s.image);
      return predictor_speeds(p, images, &diagnostics);
    });
    if (p.kind == CheckpointKind::Ensemble) {
      std::cout << "ensemble of " << p.ensemble.members.size() << " member(s)\n";
    }
    if (p.kind == CheckpointKind::Distributed) {
      write_routing_csv(out / "routing.csv", index, diagnostics);
      std::cout << "distributed model: gate of " << p.distributed.gate.members.size()
                << ", " << p.distributed.experts.size() << " expert(s); routing.csv written\n";
    }
  }
  write_text(out / "report.json", report_to_json(report));
  write_text(out / "report.txt", report_to_table(report));
  std::cout << report_to_table(report);
  return 0;
}

int cmd_predict(const RunConfig& cfg, const std::string& model_dir,
                const std::vector<std::string>& image_files) {
  const LoadedPredictor p = load_predictor(model_dir);
  std::vector<Image> images;
  std::vector<std::string> names;
  if (!image_files.empty()) {
    for (const std::string& f : image_files) {
      images.push_back(read_pgm(f));
      names.push_back(fs::path(f).stem().string());
    }
  } else {
    const DatasetIndex index = load_configured_dataset(cfg);
    for (const CycloneSample& s : index.samples) {
      images.push_back(s.image);
      names.push_back(s.image_id);
    }
  }
  std::vector<MoeDiagnostics> diagnostics;
  const std::vector<double> speeds = predictor_speeds(p, images, &diagnostics);
  char line[256];
  std::cout << "image_id,predicted_speed\n";
  for (std::size_t i = 0; i < speeds.size(); ++i) {
    std::snprintf(line, sizeof(line), "%s,%.4f", names[i].c_str(), speeds[i]);
    std::cout << line;
    if (p.kind == CheckpointKind::Distributed) {
      const MoeDiagnostics& d = diagnostics[i];
      std::snprintf(line, sizeof(line), "  (gate %.2f -> %s%s)", d.gate_speed,
                    info(d.category).code, d.expert_used ? "" : ", gate-only fallback");
      std::cout << line;
    }
    std::cout << '\n';
  }
  return 0;
}

int cmd_explain(const RunConfig& cfg, const std::string& model_dir,
                const std::string& image_file, int layer) {
  const LoadedPredictor p = load_predictor(model_dir);
  const Image original = read_pgm(image_file);
  const fs::path out = cfg.out_dir;
  write_provenance(cfg, out);

  GlobalEnsemble members;
  switch (p.kind) {
    case CheckpointKind::Model:
      members.members.push_back(p.model);
      break;
    case CheckpointKind::Ensemble:
      members = p.ensemble;
      break;
    case CheckpointKind::Distributed:
      members = p.distributed.gate;
      break;
  }
  const EnsembleHeatmaps result = ensemble_heatmap(members, original, layer);
  const Image resized = bilinear_resize(original, members.members[0].config.input_size,
                                        members.members[0].config.input_size);
  write_pgm16(resized, out / "input.pgm");
  char name[48];
  for (std::size_t i = 0; i < result.members.size(); ++i) {
    std::snprintf(name, sizeof(name), "member_%03zu_heatmap.pgm", i);
    write_pgm16(result.members[i].values, out / name);
  }
  overlay_export(resized, result.median, out / "median");
  std::cout << "wrote input.pgm, " << result.members.size()
            << " member heatmap(s), median_heatmap.pgm, median_overlay.ppm, median_heatmap.csv"
            << " (layer " << layer << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tropical-cyclone intensity estimation: ensemble and gated-expert training"};
  app.require_subcommand(1);

  std::string config_path, model_dir, gate_dir, image_file;
  std::vector<std::string> image_files;
  bool identity_oracle = false;
  int layer = 5;

  // flag overrides applied on top of the config file
  std::map<std::string, std::string> overrides;
  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration");
    cmd->add_option("--out", overrides["out"], "output directory");
    cmd->add_option("--seed", overrides["seed"], "master seed");
    cmd->add_option("--jobs", overrides["jobs"], "parallel trainings");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth);
  synth->add_option("--n", overrides["n"], "sample count");
  synth->add_option("--size", overrides["size"], "image size (multiple of 32)");
  synth->add_option("--speed-min", overrides["speed_min"], "lowest label (knots)");
  synth->add_option("--speed-max", overrides["speed_max"], "highest label (knots)");
  synth->add_option("--noise", overrides["noise"], "pixel noise sigma");

  CLI::App* split = app.add_subcommand("split", "event-disjoint train/val label split");
  add_common(split);
  split->add_option("--images", overrides["images"], "image directory");
  split->add_option("--labels", overrides["labels"], "labels CSV");
  split->add_option("--val-fraction", overrides["val_fraction"], "storm fraction for validation");

  CLI::App* train_global = app.add_subcommand("train-global", "train the bagged ensemble");
  add_common(train_global);
  train_global->add_option("--images", overrides["images"], "image directory");
  train_global->add_option("--labels", overrides["labels"], "labels CSV");
  train_global->add_option("--members", overrides["members"], "ensemble size");
  train_global->add_option("--epochs", overrides["epochs"], "training epochs");

  CLI::App* train_experts_cmd =
      app.add_subcommand("train-experts", "train per-category experts over a gate ensemble");
  add_common(train_experts_cmd);
  train_experts_cmd->add_option("--images", overrides["images"], "image directory");
  train_experts_cmd->add_option("--labels", overrides["labels"], "labels CSV");
  train_experts_cmd->add_option("--gate", gate_dir, "gate ensemble checkpoint")->required();
  train_experts_cmd->add_option("--overlap", overrides["overlap"],
                                "training-range overlap policy: none|third");
  train_experts_cmd->add_option("--epochs", overrides["epochs"], "training epochs");

  CLI::App* predict_cmd = app.add_subcommand("predict", "predict wind speeds");
  add_common(predict_cmd);
  predict_cmd->add_option("--model", model_dir, "checkpoint directory")->required();
  predict_cmd->add_option("--image", image_files, "one or more PGM images");
  predict_cmd->add_option("--images", overrides["images"], "image directory");
  predict_cmd->add_option("--labels", overrides["labels"], "labels CSV");

  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "full metric report over a dataset");
  add_common(evaluate_cmd);
  evaluate_cmd->add_option("--model", model_dir, "checkpoint directory");
  evaluate_cmd->add_option("--images", overrides["images"], "image directory");
  evaluate_cmd->add_option("--labels", overrides["labels"], "labels CSV");
  evaluate_cmd->add_flag("--identity-oracle", identity_oracle,
                         "debug: predict the true labels");

  CLI::App* explain_cmd = app.add_subcommand("explain", "heatmaps and overlay for one image");
  add_common(explain_cmd);
  explain_cmd->add_option("--model", model_dir, "checkpoint directory")->required();
  explain_cmd->add_option("--image", image_file, "input PGM image")->required();
  explain_cmd->add_option("--layer", layer, "conv stage for the activation map (1-5)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = load_run_config(config_path);
    const auto has = [&](const char* k) {
      return overrides.count(k) && !overrides[k].empty();
    };
    if (has("out")) cfg.out_dir = overrides["out"];
    if (has("seed")) cfg.seed = std::stoull(overrides["seed"]);
    if (has("jobs")) cfg.jobs = std::stoi(overrides["jobs"]);
    if (has("n")) cfg.synth.n = std::stoi(overrides["n"]);
    if (has("size")) cfg.synth.size = std::stoi(overrides["size"]);
    if (has("speed_min")) cfg.synth.speed_min = std::stod(overrides["speed_min"]);
    if (has("speed_max")) cfg.synth.speed_max = std::stod(overrides["speed_max"]);
    if (has("noise")) cfg.synth.noise_sigma = std::stod(overrides["noise"]);
    if (has("images")) {
      cfg.images_dir = overrides["images"];
      cfg.use_synth = false;
    }
    if (has("labels")) cfg.labels_csv = overrides["labels"];
    if (has("val_fraction")) cfg.val_fraction = std::stod(overrides["val_fraction"]);
    if (has("members")) cfg.ensemble_members = std::stoi(overrides["members"]);
    if (has("epochs")) cfg.training.epochs = std::stoi(overrides["epochs"]);
    if (has("overlap")) cfg.overlap = overrides["overlap"];
    if (app.got_subcommand(synth)) {
      cfg.use_synth = true;
      cfg.synth.seed = cfg.seed;
    }

    const bool needs_out = app.got_subcommand(synth) || app.got_subcommand(split) ||
                           app.got_subcommand(train_global) ||
                           app.got_subcommand(train_experts_cmd) ||
                           app.got_subcommand(evaluate_cmd) || app.got_subcommand(explain_cmd);
    if (needs_out && cfg.out_dir.empty()) {
      throw ConfigError("--out (or out_dir in the config file) is required");
    }

    if (app.got_subcommand(synth)) return cmd_synth(cfg);
    if (app.got_subcommand(split)) return cmd_split(cfg);
    if (app.got_subcommand(train_global)) return cmd_train_global(cfg);
    if (app.got_subcommand(train_experts_cmd)) return cmd_train_experts(cfg, gate_dir);
    if (app.got_subcommand(predict_cmd)) return cmd_predict(cfg, model_dir, image_files);
    if (app.got_subcommand(evaluate_cmd)) {
      if (!identity_oracle && model_dir.empty()) {
        throw ConfigError("evaluate: --model is required unless --identity-oracle is set");
      }
      return cmd_evaluate(cfg, model_dir, identity_oracle);
    }
    if (app.got_subcommand(explain_cmd)) return cmd_explain(cfg, model_dir, image_file, layer);
    throw ConfigError("no subcommand selected");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const IoError& e) {
    std::cerr << "file error: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
