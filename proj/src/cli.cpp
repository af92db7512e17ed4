#include "tpwng/cli.hpp"

#include "tpwng/config.hpp"
#include "tpwng/errors.hpp"
#include "tpwng/model.hpp"
#include "tpwng/synthetic.hpp"
#include "tpwng/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace tpwng::cli {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config_path;
  std::string preset;
  std::string out_dir = ".";
  std::string data_path;
  std::string params_path;
  std::string split;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::string nvp, normality_guidance, temporal, polarity;
  std::string rank_normal, rank_abnormal, dil;
};

const std::vector<std::string> kOnOff{"on", "off"};

void add_config_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--preset", o.preset, "Start from a named preset (overrides the file's preset)")
      ->check(CLI::IsMember({"ucf-like", "xd-like", "synthetic"}));
  cmd->add_option("--out", o.out_dir, "Output directory");
  cmd->add_option("--seed", o.seed, "Master seed override");
}

void add_run_flags(CLI::App* cmd, Options& o) {
  add_config_flags(cmd, o);
  cmd->add_option("--data", o.data_path, "Dataset manifest")->required()->check(CLI::ExistingFile);
  cmd->add_option("--epochs", o.epochs, "Epoch override")->check(CLI::PositiveNumber);
  cmd->add_option("--nvp", o.nvp, "Normality visual prompt")
      ->check(CLI::IsMember({"off", "frame-average", "similarity-aggregate"}));
  cmd->add_option("--normality-guidance", o.normality_guidance, "Fuse normal-text similarity into pseudo-labels")->check(CLI::IsMember(kOnOff));
  cmd->add_option("--temporal", o.temporal, "Temporal encoder")->check(CLI::IsMember({"tcsal", "plain-encoder"}));
  cmd->add_option("--label-polarity", o.polarity, "Pseudo-label threshold orientation")->check(CLI::IsMember({"anomaly", "literal"}));
  cmd->add_option("--loss-rank-normal", o.rank_normal, "Normal-video ranking loss")->check(CLI::IsMember(kOnOff));
  cmd->add_option("--loss-rank-abnormal", o.rank_abnormal, "Abnormal-video ranking loss")->check(CLI::IsMember(kOnOff));
  cmd->add_option("--loss-dil", o.dil, "Distribution-inconsistency loss")->check(CLI::IsMember(kOnOff));
}

RunConfig resolve_config(const Options& o) {
  RunConfig cfg = o.config_path.empty() ? preset_config("ucf-like") : load_run_config(o.config_path);
  nlohmann::json j = nlohmann::json::object();
  if (!o.preset.empty()) {
    // Re-apply the file on top of the requested preset.
    j["preset"] = o.preset;
    if (!o.config_path.empty()) {
      std::ifstream in(o.config_path);
      nlohmann::json file = nlohmann::json::parse(in, nullptr, false);
      if (file.is_object()) {
        file.erase("preset");
        j.update(file);
      }
    }
    cfg = preset_config(o.preset);
  }
  if (o.seed) j["seed"] = *o.seed;
  if (o.epochs) j["epochs"] = *o.epochs;
  if (!o.nvp.empty()) j["nvp"] = o.nvp;
  if (!o.normality_guidance.empty()) j["normality_guidance"] = o.normality_guidance;
  if (!o.temporal.empty()) j["temporal"] = o.temporal;
  if (!o.polarity.empty()) j["label_polarity"] = o.polarity;
  if (!o.rank_normal.empty()) j["loss_rank_normal"] = o.rank_normal;
  if (!o.rank_abnormal.empty()) j["loss_rank_abnormal"] = o.rank_abnormal;
  if (!o.dil.empty()) j["loss_dil"] = o.dil;
  apply_json(cfg, j);
  validate(cfg.train);
  data::validate(cfg.synthetic);
  return cfg;
}

fs::path params_file(const Options& o, const std::string& hash) {
  return o.params_path.empty() ? fs::path(o.out_dir) / ("params-" + hash + ".bin") : fs::path(o.params_path);
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

int cmd_gen_data(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  const auto ds = data::generate_synthetic(cfg.synthetic, o.out_dir);
  std::cout << "wrote " << ds.manifest.videos.size() << " videos to " << o.out_dir << "\n";
  return kExitOk;
}

int cmd_train(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  const std::string hash = config_hash(cfg.train);
  const auto manifest = data::load_manifest(o.data_path);
  const auto videos = data::load_split(manifest, "train");
  Model model = make_model(manifest, cfg.train);

  auto log = open_out(fs::path(o.out_dir) / ("train_log-" + hash + ".csv"));
  log << "epoch,step,rank_n,rank_a,dil,cl,sp,sm,total\n";
  int last_epoch = 0;
  double epoch_total = 0.0;
  int epoch_steps = 0;
  auto flush_epoch = [&] {
    if (epoch_steps > 0) std::cout << "epoch " << last_epoch << " loss " << fmt(epoch_total / epoch_steps) << "\n";
  };
  train(model, cfg.train, videos, [&](const StepLog& s) {
    const auto& l = s.losses;
    log << s.epoch << ',' << s.step << ',' << fmt(l.rank_normal) << ',' << fmt(l.rank_abnormal) << ','
        << fmt(l.dil) << ',' << fmt(l.cl) << ',' << fmt(l.sp) << ',' << fmt(l.sm) << ',' << fmt(l.total) << '\n';
    if (s.epoch != last_epoch) {
      flush_epoch();
      last_epoch = s.epoch;
      epoch_total = 0.0;
      epoch_steps = 0;
    }
    epoch_total += l.total;
    ++epoch_steps;
  });
  flush_epoch();

  fs::create_directories(o.out_dir);
  model.save(params_file(o, hash));
  auto cfg_out = open_out(fs::path(o.out_dir) / ("config-" + hash + ".json"));
  nlohmann::json j = to_json(cfg.train);
  j["config_hash"] = hash;
  cfg_out << j.dump(2) << '\n';
  std::cout << "config " << hash << " checksum " << std::hex << model.checksum() << std::dec << "\n";
  return kExitOk;
}

Model load_trained(const Options& o, const RunConfig& cfg, const data::DatasetManifest& manifest,
                   const std::string& hash) {
  Model model = make_model(manifest, cfg.train);
  model.load(params_file(o, hash));
  return model;
}

int cmd_eval(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  const std::string hash = config_hash(cfg.train);
  const auto manifest = data::load_manifest(o.data_path);
  Model model = load_trained(o, cfg, manifest, hash);
  const auto result = evaluate(model, data::load_split(manifest, o.split.empty() ? "test" : o.split));

  nlohmann::json j;
  j["auc"] = result.auc ? nlohmann::json(*result.auc) : nlohmann::json(nullptr);
  j["ap"] = result.ap ? nlohmann::json(*result.ap) : nlohmann::json(nullptr);
  j["num_frames"] = result.num_frames;
  j["config_hash"] = hash;
  auto out = open_out(fs::path(o.out_dir) / ("metrics-" + hash + ".json"));
  out << j.dump(2) << '\n';
  std::cout << j.dump() << "\n";
  if (!result.auc) {
    std::cerr << "error: frame truth has a single class, AUC undefined\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_pseudo_labels(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  const std::string hash = config_hash(cfg.train);
  const auto manifest = data::load_manifest(o.data_path);
  Model model = load_trained(o, cfg, manifest, hash);
  const auto labels = infer_pseudo_labels(model, cfg.train, data::load_split(manifest, o.split.empty() ? "train" : o.split));

  auto out = open_out(fs::path(o.out_dir) / ("pseudo_labels-" + hash + ".csv"));
  out << "video_id,frame,psi,gamma\n";
  for (const auto& pl : labels) {
    for (std::size_t t = 0; t < pl.gamma.size(); ++t) {
      out << pl.video_id << ',' << t << ',';
      if (pl.psi_norm) out << fmt((*pl.psi_norm)[static_cast<Eigen::Index>(t)]);
      out << ',' << int(pl.gamma[t]) << '\n';
    }
  }
  return kExitOk;
}

int cmd_export_scores(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  const std::string hash = config_hash(cfg.train);
  const auto manifest = data::load_manifest(o.data_path);
  Model model = load_trained(o, cfg, manifest, hash);
  const auto videos = data::load_split(manifest, o.split.empty() ? "test" : o.split);
  const auto scores = score_videos(model, videos);

  const fs::path dir = fs::path(o.out_dir) / ("scores-" + hash);
  for (std::size_t i = 0; i < videos.size(); ++i) {
    auto out = open_out(dir / (videos[i].video_id + ".csv"));
    out << "frame,score,truth\n";
    for (Eigen::Index t = 0; t < scores[i].size(); ++t) {
      out << t << ',' << fmt(scores[i][t]) << ',';
      if (videos[i].frame_truth) out << int((*videos[i].frame_truth)[static_cast<std::size_t>(t)]);
      out << '\n';
    }
  }
  std::cout << "wrote " << videos.size() << " score curves to " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Weakly supervised video anomaly detection on frame-embedding sequences"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic benchmark");
  add_config_flags(gen, o);

  auto* tr = app.add_subcommand("train", "Train and save parameters");
  add_run_flags(tr, o);
  auto* ev = app.add_subcommand("eval", "Frame-level AUC and AP on a split (default test)");
  add_run_flags(ev, o);
  auto* pl = app.add_subcommand("pseudo-labels", "Export pseudo-labels for a split (default train)");
  add_run_flags(pl, o);
  auto* ex = app.add_subcommand("export-scores", "Export per-video score curves (default test split)");
  add_run_flags(ex, o);
  for (auto* cmd : {ev, pl, ex}) {
    cmd->add_option("--params", o.params_path, "Parameter file (default: the one train wrote)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--split", o.split, "Split name");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o);
    if (tr->parsed()) return cmd_train(o);
    if (ev->parsed()) return cmd_eval(o);
    if (pl->parsed()) return cmd_pseudo_labels(o);
    return cmd_export_scores(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace tpwng::cli
