// agpis command-line tool: dataset generation, training, evaluation,
// ablation, end-to-end pipeline runs, and a gradient-check harness.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "agpis/data/ruleworld.hpp"
#include "agpis/gradsuite.hpp"
#include "agpis/io/checkpoint.hpp"
#include "agpis/io/manifest.hpp"
#include "agpis/io/report.hpp"
#include "agpis/model/muisc.hpp"
#include "agpis/pipeline.hpp"
#include "agpis/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace agpis;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitInternal = 2;

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  return out;
}

// base config overlaid with key=value lines from a file; keys follow the
// checkpoint config block
MuiscConfig load_muisc_config(const MuiscConfig& base, const std::string& path) {
  std::map<std::string, std::string> m = muisc_config_map(base);
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot read config file: " + path);
    std::string line;
    long line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("config " + path + " line " + std::to_string(line_no) +
                                    ": expected key=value, got '" + line + "'");
      std::string key = line.substr(0, eq);
      if (!m.count(key) && key != "kind")
        throw std::invalid_argument("config " + path + " line " + std::to_string(line_no) +
                                    ": unknown key '" + key + "'");
      m[key] = line.substr(eq + 1);
    }
  }
  return muisc_config_from_map(m, path.empty() ? "<defaults>" : path);
}

int cmd_gen_data(int n, const std::string& mixture, std::uint64_t seed,
                 const std::string& out_dir) {
  GenConfig cfg;
  cfg.count = n;
  cfg.seed = seed;
  if (!mixture.empty()) {
    std::stringstream ss(mixture);
    std::string item;
    std::vector<double> weights;
    while (std::getline(ss, item, ',')) weights.push_back(std::stod(item));
    if (weights.size() != 4)
      throw std::invalid_argument("--mixture wants 4 comma-separated weights, got " +
                                  std::to_string(weights.size()));
    std::copy(weights.begin(), weights.end(), cfg.mixture.begin());
  }
  cfg.validate();
  Dataset ds = generate_dataset(cfg);
  write_dataset(ds, out_dir);
  std::cout << "wrote " << ds.records.size() << " records to " << out_dir << "\n";
  return kExitOk;
}

int cmd_paper_scale_forward() {
  MuiscConfig cfg = MuiscConfig::paper();
  Rng rng(0);
  auto t0 = std::chrono::steady_clock::now();
  MuiscWeights w = MuiscWeights::create(cfg, rng);
  std::vector<Image> images;
  for (int k = 0; k < cfg.seq_len; ++k) {
    Image im(cfg.img_h, cfg.img_w);
    for (double& p : im.pix) p = 0.5 + 0.1 * rng.normal();
    images.push_back(im);
  }
  std::vector<int> title{7, 11, 13};
  Prediction pred = predict(images, title, /*sep_token=*/1, w);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
  nlohmann::ordered_json j;
  j["config"] = "paper";
  j["p_t"] = pred.p_t;
  j["classes"] = pred.p_mcc.size();
  j["elapsed_ms"] = ms;
  std::cout << j.dump() << "\n";
  return kExitOk;
}

int cmd_train(const std::string& manifest, const std::string& stage, const std::string& out_ckpt,
              const std::string& config_path, std::uint64_t seed, int epochs, int batch,
              double lr, const std::string& curve_path) {
  Dataset ds = read_manifest(manifest);
  AdamWConfig opt_cfg;
  if (lr > 0.0) opt_cfg.lr = lr;
  if (stage == "stage1") {
    BinaryClassifierConfig cfg;
    Stage1Models models = train_stage1(ds, cfg, epochs, batch, seed, opt_cfg);
    save_stage1_checkpoint(models, out_ckpt);
  } else {
    MuiscConfig cfg = load_muisc_config(MuiscConfig::desk(), config_path);
    Rng rng(seed);
    MuiscWeights w = MuiscWeights::create(cfg, rng);
    TrainOptions opts;
    opts.epochs = epochs;
    opts.batch_size = batch;
    opts.seed = seed;
    opts.opt = opt_cfg;
    std::vector<EpochLoss> curve = train_muisc(w, split_of(ds, "train"), split_of(ds, "val"), opts);
    save_muisc_checkpoint(w, out_ckpt);
    if (!curve_path.empty()) write_loss_csv(curve, curve_path);
    if (!curve.empty())
      std::cerr << "final train loss " << curve.back().train_loss << ", val loss "
                << curve.back().val_loss << "\n";
  }
  std::cout << "wrote checkpoint " << out_ckpt << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& manifest, const std::string& split,
             int jobs) {
  MuiscWeights w = load_muisc_checkpoint(ckpt);
  Dataset ds = read_manifest(manifest);
  std::vector<const ReviewRecord*> subset =
      split == "all" ? [&] {
        std::vector<const ReviewRecord*> v;
        for (const auto& r : ds.records) v.push_back(&r);
        return v;
      }()
                     : split_of(ds, split);
  if (subset.empty()) throw std::invalid_argument("no records in split '" + split + "'");
  EvalReport rep = evaluate(w, subset, jobs);
  std::cout << eval_report_json(rep).dump() << "\n";
  return kExitOk;
}

int cmd_ablate(const std::string& manifest, std::uint64_t seed, int epochs, int batch) {
  Dataset ds = read_manifest(manifest);
  TrainOptions opts;
  opts.epochs = epochs;
  opts.batch_size = batch;
  opts.seed = seed;
  std::vector<AblationRow> rows = ablation_suite(ds, MuiscConfig::desk(), opts);
  std::printf("%-20s %8s %12s\n", "variant", "auc", "paper-auc*");
  for (const AblationRow& r : rows)
    std::printf("%-20s %8.4f %12.3f\n", r.name.c_str(), r.report.auc, r.paper_auc);
  std::printf("* published reference values, not binding on synthetic data\n");
  return kExitOk;
}

int cmd_pipeline(const std::string& stage1_ckpt, const std::string& muisc_ckpt,
                 const std::string& image_dir, const std::string& title_csv, double threshold,
                 std::uint64_t seed) {
  Stage1Models s1 = load_stage1_checkpoint(stage1_ckpt);
  MuiscWeights muisc = load_muisc_checkpoint(muisc_ckpt);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(image_dir))
    if (e.path().extension() == ".ppm") files.push_back(e.path());
  if (files.empty()) throw std::invalid_argument("no .ppm images in " + image_dir);
  std::sort(files.begin(), files.end());  // candidate ids follow name order
  std::vector<Image> candidates;
  for (const auto& f : files) candidates.push_back(read_ppm(f.string()));
  Stage1Config s1cfg;
  PipelineResult res = run_pipeline(candidates, parse_int_list(title_csv), s1.primary.scorer(),
                                    s1.nc.scorer(), muisc, s1cfg, threshold, seed);
  std::cout << pipeline_result_json(res).dump() << "\n";
  return kExitOk;
}

int cmd_grad_check() {
  std::vector<GradCheckEntry> entries = run_grad_suite();
  double worst = 0.0;
  for (const GradCheckEntry& e : entries) {
    std::printf("%-32s %.3e\n", e.name.c_str(), e.err);
    worst = std::max(worst, e.err);
  }
  std::printf("worst relative error: %.3e (tolerance 1e-4)\n", worst);
  return worst < 1e-4 ? kExitOk : kExitInternal;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"agpis: two-stage product image sequence review pipeline"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset with oracle labels");
  int gen_n = 1000;
  std::string gen_mixture, gen_out = "data";
  std::uint64_t gen_seed = 0;
  gen->add_option("--n", gen_n, "number of records");
  gen->add_option("--mixture", gen_mixture,
                  "category weights qualified,single,pair,multi (default 0.71,0.12,0.07,0.10)");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output directory");

  // train
  auto* train = app.add_subcommand("train", "train the stage-1 classifiers or the stage-2 model");
  std::string tr_manifest, tr_stage = "muisc", tr_out = "model.ckpt", tr_config, tr_curve;
  std::uint64_t tr_seed = 0;
  int tr_epochs = 10, tr_batch = 16;
  double tr_lr = 0.0;
  bool tr_paper_scale = false;
  train->add_option("--manifest", tr_manifest, "manifest.jsonl of the training data");
  train->add_option("--stage", tr_stage, "stage1 | muisc")
      ->check(CLI::IsMember({"stage1", "muisc"}));
  train->add_option("--out", tr_out, "checkpoint output path");
  train->add_option("--config", tr_config, "key=value model-config overrides");
  train->add_option("--seed", tr_seed, "training seed");
  train->add_option("--epochs", tr_epochs, "training epochs");
  train->add_option("--batch", tr_batch, "mini-batch size");
  train->add_option("--lr", tr_lr, "learning rate (default 1.5e-4)");
  train->add_option("--curve", tr_curve, "write per-epoch losses as CSV");
  train->add_flag("--paper-scale", tr_paper_scale,
                  "construct the full-size config and run one forward pass, no training");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint; prints a JSON report");
  std::string ev_ckpt, ev_manifest, ev_split = "test";
  int ev_jobs = 1;
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--manifest", ev_manifest, "manifest.jsonl")->required();
  ev->add_option("--split", ev_split, "train | val | test | all");
  ev->add_option("--jobs", ev_jobs, "worker threads (id-ordered merge)");

  // ablate
  auto* ab = app.add_subcommand("ablate", "train and compare the component-flag ladder");
  std::string ab_manifest;
  std::uint64_t ab_seed = 0;
  int ab_epochs = 10, ab_batch = 16;
  ab->add_option("--manifest", ab_manifest, "manifest.jsonl")->required();
  ab->add_option("--seed", ab_seed, "training seed");
  ab->add_option("--epochs", ab_epochs, "training epochs per row");
  ab->add_option("--batch", ab_batch, "mini-batch size");

  // pipeline
  auto* pl = app.add_subcommand("pipeline", "run one product end to end; prints JSON");
  std::string pl_stage1, pl_muisc, pl_images, pl_title;
  double pl_threshold = 0.3;
  std::uint64_t pl_seed = 0;
  pl->add_option("--stage1", pl_stage1, "stage-1 checkpoint")->required();
  pl->add_option("--muisc", pl_muisc, "stage-2 checkpoint")->required();
  pl->add_option("--images", pl_images, "directory of candidate .ppm images")->required();
  pl->add_option("--title", pl_title, "comma-separated title token ids");
  pl->add_option("--threshold", pl_threshold, "submission threshold on p_t");
  pl->add_option("--seed", pl_seed, "sequence-assembly seed");

  // grad-check
  app.add_subcommand("grad-check", "verify gradients of every block against central differences");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_name() == "CallForHelp" ? kExitOk : kExitInput;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_n, gen_mixture, gen_seed, gen_out);
    if (train->parsed()) {
      if (tr_paper_scale) return cmd_paper_scale_forward();
      if (tr_manifest.empty())
        throw std::invalid_argument("train: --manifest is required unless --paper-scale");
      return cmd_train(tr_manifest, tr_stage, tr_out, tr_config, tr_seed, tr_epochs, tr_batch,
                       tr_lr, tr_curve);
    }
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_manifest, ev_split, ev_jobs);
    if (ab->parsed()) return cmd_ablate(ab_manifest, ab_seed, ab_epochs, ab_batch);
    if (pl->parsed())
      return cmd_pipeline(pl_stage1, pl_muisc, pl_images, pl_title, pl_threshold, pl_seed);
    return cmd_grad_check();
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
