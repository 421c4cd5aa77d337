// Operator entry point: gen / train / eval / ablate / plot.
//
// Exit codes: 0 success, 1 runtime failure (corrupt data, failed cells),
// 2 usage or configuration error (bad flags, missing input files).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "omniseg/omniseg.hpp"

namespace fs = std::filesystem;
using namespace omniseg;

namespace {

struct GenFlags {
  int n_train = 2000, n_val = 200, n_test = 200;
  double fraction = 0.05;
  std::uint64_t seed = 7;
  std::string out;
};

struct TrainFlags {
  std::string data;
  std::string mode = "fully";
  std::string refine_strategy = "aplr";
  int steps = 3000;
  std::uint64_t seed = 0;
  double lambda = 1.0, alpha = 0.9996, lr = 1e-4;
  int batch_size = 64;
  int burn_in = -1;
  int eval_every = 250;
  double noise_sigma = 0.05, flip_prob = 0.5;
  double bin_start = 0.7, bin_end = 0.2, tau_start = 0.5, tau_end = 0.2;
  double distance_delta = 0.05, conf_threshold = 0.5;
  std::string out_ckpt = "ckpt.json";
  std::string out_metrics = "metrics.csv";
  std::string resume;
  std::string save_state;
};

struct EvalFlags {
  std::string ckpt;
  std::string data;
  std::string split = "val";
  std::string out;
};

struct AblateFlags {
  std::string out;
  std::vector<std::string> modes{"fully", "omni_none", "omni_point", "omni_box"};
  std::vector<double> fractions{0.05};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int n_train = 2000, n_val = 200, n_test = 200;
  std::uint64_t data_seed = 7;
  std::string refine_strategy = "aplr";
  int steps = 3000;
  int batch_size = 64;
  int burn_in = -1;
  int eval_every = 0;
  double lambda = 1.0, alpha = 0.9996, lr = 1e-4;
  double noise_sigma = 0.05;
  double bin_start = 0.7, bin_end = 0.2, tau_start = 0.5, tau_end = 0.2;
  int parallel = 1;
};

struct PlotFlags {
  std::string ablation_csv;
  std::string out;
  std::string metrics_csv;
  std::string out_training;
};

TrainConfig make_train_config(const TrainFlags& f) {
  TrainConfig cfg;
  cfg.lr = f.lr;
  cfg.batch_size = f.batch_size;
  cfg.max_steps = f.steps;
  cfg.lambda = f.lambda;
  cfg.alpha = f.alpha;
  cfg.binarize_threshold_start = f.bin_start;
  cfg.binarize_threshold_end = f.bin_end;
  cfg.tau_start = f.tau_start;
  cfg.tau_end = f.tau_end;
  cfg.refine_strategy = refine_strategy_from_name(f.refine_strategy);
  cfg.mode = supervision_mode_from_name(f.mode);
  cfg.burn_in_steps = f.burn_in;
  cfg.seed = f.seed;
  cfg.eval_every = f.eval_every;
  cfg.augment.noise_sigma = f.noise_sigma;
  cfg.augment.flip_prob = f.flip_prob;
  cfg.distance_delta = f.distance_delta;
  cfg.conf_threshold = f.conf_threshold;
  return cfg;
}

int run_gen(const GenFlags& f) {
  SplitConfig cfg;
  cfg.n_train = f.n_train;
  cfg.n_val = f.n_val;
  cfg.n_test = f.n_test;
  cfg.labeled_fraction = f.fraction;
  cfg.seed = f.seed;
  const Manifest m = build_dataset(cfg, f.out);
  for (const auto& [file, digest] : m.digests) {
    std::printf("%s %s\n", file.c_str(), digest.c_str());
  }
  log_info("dataset written to " + f.out + " (" + std::to_string(m.n_fully) + " fully / " +
           std::to_string(m.n_omni) + " omni)");
  return 0;
}

int run_train(const TrainFlags& f) {
  const Manifest mani = read_manifest((fs::path(f.data) / "manifest.json").string());
  const int vocab = int(mani.vocab.size());
  const TrainDatasets data = load_train_datasets(f.data);
  const TrainConfig cfg = make_train_config(f);
  cfg.validate();

  TrainState state =
      f.resume.empty() ? make_train_state(cfg, vocab) : load_train_state(f.resume, vocab);
  if (state.step >= cfg.max_steps) {
    throw ConfigError("resumed state is already at or past --steps");
  }
  const std::vector<StepLog> log = run_training(state, data, cfg);
  write_metrics_csv(log, f.out_metrics);
  save_params(state.student, f.out_ckpt);
  if (!f.save_state.empty()) save_train_state(state, f.save_state);

  const StepLog& last = log.back();
  std::string summary = "step " + std::to_string(last.step) +
                        " l_sup " + format_double(last.l_sup) + " l_omni " +
                        format_double(last.l_omni);
  if (last.val_miou >= 0.0) summary += " val_miou " + format_double(last.val_miou);
  log_info("training done: " + summary);
  log_info("checkpoint " + f.out_ckpt + ", metrics " + f.out_metrics);
  return 0;
}

int run_eval(const EvalFlags& f) {
  const Manifest mani = read_manifest((fs::path(f.data) / "manifest.json").string());
  const ModelParams params = load_params(f.ckpt, int(mani.vocab.size()));
  std::string file;
  if (f.split == "val") {
    file = "val.jsonl";
  } else if (f.split == "test") {
    file = "test.jsonl";
  } else if (f.split == "train") {
    file = "train.jsonl";
  } else {
    throw ConfigError("--split must be val, test, or train");
  }
  const std::vector<DatasetRecord> records = read_jsonl((fs::path(f.data) / file).string());
  const EvalReport rep = evaluate(params, records);
  const std::string row = eval_csv_row(f.split, rep);
  std::printf("%s\n%s\n", eval_csv_header().c_str(), row.c_str());
  if (!f.out.empty()) {
    const bool fresh = !fs::exists(f.out);
    std::ofstream out(f.out, std::ios::app);
    if (!out) throw IoError("cannot open eval CSV for writing: " + f.out);
    if (fresh) out << eval_csv_header() << "\n";
    out << row << "\n";
  }
  return 0;
}

int run_ablate(const AblateFlags& f) {
  AblationSpec spec;
  spec.modes.clear();
  for (const std::string& m : f.modes) spec.modes.push_back(supervision_mode_from_name(m));
  spec.fractions = f.fractions;
  spec.seeds = f.seeds;
  spec.parallel = f.parallel;
  spec.data.n_train = f.n_train;
  spec.data.n_val = f.n_val;
  spec.data.n_test = f.n_test;
  spec.data.seed = f.data_seed;
  spec.base.max_steps = f.steps;
  spec.base.batch_size = f.batch_size;
  spec.base.burn_in_steps = f.burn_in;
  spec.base.eval_every = f.eval_every;
  spec.base.lambda = f.lambda;
  spec.base.alpha = f.alpha;
  spec.base.lr = f.lr;
  spec.base.augment.noise_sigma = f.noise_sigma;
  spec.base.binarize_threshold_start = f.bin_start;
  spec.base.binarize_threshold_end = f.bin_end;
  spec.base.tau_start = f.tau_start;
  spec.base.tau_end = f.tau_end;
  spec.base.refine_strategy = refine_strategy_from_name(f.refine_strategy);

  const AblationResult res = run_ablation(spec, f.out);
  std::printf("table %s\n", (fs::path(f.out) / "table.csv").string().c_str());
  for (const OrderingCheck& oc : res.orderings) {
    std::printf("ordering @ fraction %s: %s %s\n", format_double(oc.fraction).c_str(),
                oc.chain.c_str(), oc.ok ? "OK" : "VIOLATED");
  }
  if (res.failed_cells > 0) {
    std::fprintf(stderr, "[omniseg] %d of %zu cells failed\n", res.failed_cells,
                 res.cells.size());
    return 1;
  }
  return 0;
}

int run_plot(const PlotFlags& f) {
  if (f.ablation_csv.empty() && f.metrics_csv.empty()) {
    throw ConfigError("plot needs --ablation-csv and/or --metrics-csv");
  }
  if (!f.ablation_csv.empty()) {
    if (f.out.empty()) throw ConfigError("--ablation-csv requires --out");
    write_text_file(f.out, ablation_curve_svg(read_text_file(f.ablation_csv)));
    log_info("wrote " + f.out);
  }
  if (!f.metrics_csv.empty()) {
    if (f.out_training.empty()) throw ConfigError("--metrics-csv requires --out-training");
    write_text_file(f.out_training, training_curve_svg(read_text_file(f.metrics_csv)));
    log_info("wrote " + f.out_training);
  }
  return 0;
}

void add_shared_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--mode", f.mode, "fully | omni_none | omni_point | omni_box");
  cmd->add_option("--refine-strategy", f.refine_strategy,
                  "aplr | no_filtering | point_distance | box_suppress | avg_confidence");
  cmd->add_option("--steps", f.steps, "training steps K");
  cmd->add_option("--seed", f.seed, "training seed");
  cmd->add_option("--lambda", f.lambda, "omni-loss weight");
  cmd->add_option("--alpha", f.alpha, "EMA keeping rate");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--batch-size", f.batch_size, "records per batch");
  cmd->add_option("--burn-in", f.burn_in, "supervised-only steps (-1: 10% of K)");
  cmd->add_option("--eval-every", f.eval_every, "val eval cadence (0: final step only)");
  cmd->add_option("--noise-sigma", f.noise_sigma, "strong-augment noise sigma");
  cmd->add_option("--flip-prob", f.flip_prob, "flip probability, both views");
  cmd->add_option("--bin-start", f.bin_start, "binarize threshold at burn-in");
  cmd->add_option("--bin-end", f.bin_end, "binarize threshold at K");
  cmd->add_option("--tau-start", f.tau_start, "box coverage threshold at burn-in");
  cmd->add_option("--tau-end", f.tau_end, "box coverage threshold at K");
  cmd->add_option("--distance-delta", f.distance_delta, "point_distance radius (diagonals)");
  cmd->add_option("--conf-threshold", f.conf_threshold, "avg_confidence threshold");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"omni-supervised referring-expression segmentation workbench"};
  app.require_subcommand(1);

  GenFlags gen_flags;
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic benchmark");
  gen->add_option("--n-train", gen_flags.n_train, "training records");
  gen->add_option("--n-val", gen_flags.n_val, "validation records");
  gen->add_option("--n-test", gen_flags.n_test, "test records");
  gen->add_option("--fraction", gen_flags.fraction, "fully-labeled fraction of train");
  gen->add_option("--seed", gen_flags.seed, "generation seed");
  gen->add_option("--out", gen_flags.out, "output directory")->required();

  TrainFlags train_flags;
  CLI::App* train = app.add_subcommand("train", "train a student model");
  train->add_option("--data", train_flags.data, "dataset directory (from gen)")->required();
  add_shared_train_flags(train, train_flags);
  train->add_option("--out-ckpt", train_flags.out_ckpt, "student checkpoint path");
  train->add_option("--out-metrics", train_flags.out_metrics, "metrics CSV path");
  train->add_option("--resume", train_flags.resume, "train state to resume from");
  train->add_option("--save-state", train_flags.save_state, "write train state here at the end");

  EvalFlags eval_flags;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  eval->add_option("--ckpt", eval_flags.ckpt, "checkpoint path")->required();
  eval->add_option("--data", eval_flags.data, "dataset directory")->required();
  eval->add_option("--split", eval_flags.split, "val | test | train");
  eval->add_option("--out", eval_flags.out, "append the CSV row here");

  AblateFlags ablate_flags;
  CLI::App* ablate = app.add_subcommand("ablate", "run the mode x fraction x seed matrix");
  ablate->add_option("--out", ablate_flags.out, "working directory")->required();
  ablate->add_option("--modes", ablate_flags.modes, "comma-separated modes")->delimiter(',');
  ablate->add_option("--fractions", ablate_flags.fractions, "comma-separated fractions")
      ->delimiter(',');
  ablate->add_option("--seeds", ablate_flags.seeds, "comma-separated seeds")->delimiter(',');
  ablate->add_option("--n-train", ablate_flags.n_train, "training records per dataset");
  ablate->add_option("--n-val", ablate_flags.n_val, "validation records");
  ablate->add_option("--n-test", ablate_flags.n_test, "test records");
  ablate->add_option("--data-seed", ablate_flags.data_seed, "dataset generation seed");
  ablate->add_option("--refine-strategy", ablate_flags.refine_strategy, "refinement strategy");
  ablate->add_option("--steps", ablate_flags.steps, "training steps per cell");
  ablate->add_option("--batch-size", ablate_flags.batch_size, "records per batch");
  ablate->add_option("--burn-in", ablate_flags.burn_in, "supervised-only steps (-1: 10% of K)");
  ablate->add_option("--eval-every", ablate_flags.eval_every, "val eval cadence per cell");
  ablate->add_option("--lambda", ablate_flags.lambda, "omni-loss weight");
  ablate->add_option("--alpha", ablate_flags.alpha, "EMA keeping rate");
  ablate->add_option("--lr", ablate_flags.lr, "Adam learning rate");
  ablate->add_option("--noise-sigma", ablate_flags.noise_sigma, "strong-augment noise sigma");
  ablate->add_option("--bin-start", ablate_flags.bin_start, "binarize threshold at burn-in");
  ablate->add_option("--bin-end", ablate_flags.bin_end, "binarize threshold at K");
  ablate->add_option("--tau-start", ablate_flags.tau_start, "box coverage threshold at burn-in");
  ablate->add_option("--tau-end", ablate_flags.tau_end, "box coverage threshold at K");
  ablate->add_option("--parallel", ablate_flags.parallel, "worker threads over cells");

  PlotFlags plot_flags;
  CLI::App* plot = app.add_subcommand("plot", "render SVG charts from CSV outputs");
  plot->add_option("--ablation-csv", plot_flags.ablation_csv, "ablation table to chart");
  plot->add_option("--out", plot_flags.out, "fraction-curve SVG path");
  plot->add_option("--metrics-csv", plot_flags.metrics_csv, "metrics log to chart");
  plot->add_option("--out-training", plot_flags.out_training, "training-curve SVG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return run_gen(gen_flags);
    if (*train) return run_train(train_flags);
    if (*eval) return run_eval(eval_flags);
    if (*ablate) return run_ablate(ablate_flags);
    if (*plot) return run_plot(plot_flags);
    std::fprintf(stderr, "[omniseg] no subcommand\n");
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "[omniseg] config error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "[omniseg] io error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "[omniseg] invalid argument: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "[omniseg] error: %s\n", e.what());
    return 1;
  }
}
