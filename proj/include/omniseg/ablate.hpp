#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "omniseg/metrics.hpp"
#include "omniseg/synthgen.hpp"
#include "omniseg/trainer.hpp"
#include "omniseg/util.hpp"

namespace omniseg {

// ---------------------------------------------------------------------------
// The ablation matrix: every (mode, fraction, seed) cell trains a model on a
// shared per-fraction dataset and scores the test split. Emits a CSV with
// one row per cell plus mean/std aggregate rows, and ordering flags for the
// expected fully < omni_none < omni_point < omni_box trend.
// ---------------------------------------------------------------------------

struct AblationSpec {
  std::vector<SupervisionMode> modes{SupervisionMode::fully, SupervisionMode::omni_none,
                                     SupervisionMode::omni_point, SupervisionMode::omni_box};
  std::vector<double> fractions{0.05};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  TrainConfig base;     // mode/seed overridden per cell
  SplitConfig data;     // labeled_fraction overridden per fraction
  int parallel = 1;

  void validate() const {
    if (modes.empty() || fractions.empty() || seeds.empty()) {
      throw ConfigError("ablation needs at least one mode, fraction, and seed");
    }
    if (parallel < 1) throw ConfigError("parallel must be >= 1");
    for (const double f : fractions) {
      if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fractions must lie in (0,1]");
    }
  }
};

struct CellResult {
  SupervisionMode mode = SupervisionMode::fully;
  double fraction = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  EvalReport test;
};

struct CellAggregate {
  SupervisionMode mode = SupervisionMode::fully;
  double fraction = 0.0;
  int n = 0;
  double miou_mean = 0.0, miou_std = 0.0;
  double oiou_mean = 0.0, oiou_std = 0.0;
  double pr50_mean = 0.0, pr70_mean = 0.0, pr90_mean = 0.0;
};

struct OrderingCheck {
  double fraction = 0.0;
  std::string chain;  // e.g. "fully<omni_none<omni_point<omni_box"
  bool ok = false;
};

struct AblationResult {
  std::vector<CellResult> cells;
  std::vector<CellAggregate> aggregates;
  std::vector<OrderingCheck> orderings;
  int failed_cells = 0;
};

namespace detail {

inline void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  for (const double x : xs) mean += x;
  mean /= double(xs.size());
  sd = 0.0;
  if (xs.size() > 1) {
    for (const double x : xs) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / double(xs.size() - 1));
  }
}

}  // namespace detail

inline std::vector<CellAggregate> aggregate_cells(const AblationSpec& spec,
                                                  const std::vector<CellResult>& cells) {
  std::vector<CellAggregate> out;
  for (const double f : spec.fractions) {
    for (const SupervisionMode m : spec.modes) {
      std::vector<double> miou, oiou, pr50, pr70, pr90;
      for (const CellResult& c : cells) {
        if (c.failed || c.mode != m || c.fraction != f) continue;
        miou.push_back(c.test.miou);
        oiou.push_back(c.test.oiou);
        pr50.push_back(c.test.pr_at.at(0.5));
        pr70.push_back(c.test.pr_at.at(0.7));
        pr90.push_back(c.test.pr_at.at(0.9));
      }
      if (miou.empty()) continue;
      CellAggregate a;
      a.mode = m;
      a.fraction = f;
      a.n = int(miou.size());
      detail::mean_std(miou, a.miou_mean, a.miou_std);
      detail::mean_std(oiou, a.oiou_mean, a.oiou_std);
      double unused;
      detail::mean_std(pr50, a.pr50_mean, unused);
      detail::mean_std(pr70, a.pr70_mean, unused);
      detail::mean_std(pr90, a.pr90_mean, unused);
      out.push_back(a);
    }
  }
  return out;
}

/// Per fraction: is mean test mIoU strictly increasing along the canonical
/// mode order (restricted to the modes actually present)?
inline std::vector<OrderingCheck> check_orderings(const AblationSpec& spec,
                                                  const std::vector<CellAggregate>& aggs) {
  const SupervisionMode canon[] = {SupervisionMode::fully, SupervisionMode::omni_none,
                                   SupervisionMode::omni_point, SupervisionMode::omni_box};
  std::vector<OrderingCheck> out;
  for (const double f : spec.fractions) {
    std::vector<std::pair<SupervisionMode, double>> present;
    for (const SupervisionMode m : canon) {
      for (const CellAggregate& a : aggs) {
        if (a.mode == m && a.fraction == f) present.emplace_back(m, a.miou_mean);
      }
    }
    if (present.size() < 2) continue;
    OrderingCheck oc;
    oc.fraction = f;
    oc.ok = true;
    for (std::size_t i = 0; i < present.size(); ++i) {
      if (i) {
        oc.chain += "<";
        oc.ok = oc.ok && present[i - 1].second < present[i].second;
      }
      oc.chain += supervision_mode_name(present[i].first);
    }
    out.push_back(oc);
  }
  return out;
}

inline std::string ablation_csv_header() {
  return "mode,fraction,seed,miou,oiou,pr_0.5,pr_0.7,pr_0.9,miou_std,oiou_std";
}

/// One row per successful cell, then one "agg" row per (mode, fraction).
inline std::string ablation_table_csv(const AblationSpec& spec,
                                      const std::vector<CellResult>& cells,
                                      const std::vector<CellAggregate>& aggs) {
  std::string out = ablation_csv_header() + "\n";
  for (const CellResult& c : cells) {
    if (c.failed) continue;
    out += supervision_mode_name(c.mode);
    out += "," + format_double(c.fraction);
    out += "," + std::to_string(c.seed);
    out += "," + format_double(c.test.miou);
    out += "," + format_double(c.test.oiou);
    for (const double x : {0.5, 0.7, 0.9}) out += "," + format_double(c.test.pr_at.at(x));
    out += ",,\n";  // std columns apply to aggregate rows only
  }
  for (const CellAggregate& a : aggs) {
    out += supervision_mode_name(a.mode);
    out += "," + format_double(a.fraction);
    out += ",agg";
    out += "," + format_double(a.miou_mean);
    out += "," + format_double(a.oiou_mean);
    out += "," + format_double(a.pr50_mean);
    out += "," + format_double(a.pr70_mean);
    out += "," + format_double(a.pr90_mean);
    out += "," + format_double(a.miou_std);
    out += "," + format_double(a.oiou_std);
    out += "\n";
  }
  (void)spec;
  return out;
}

/// File-friendly cell tag, e.g. "omni_box_f0.05_s2".
inline std::string cell_tag(SupervisionMode m, double fraction, std::uint64_t seed) {
  return supervision_mode_name(m) + "_f" + format_double(fraction) + "_s" +
         std::to_string(seed);
}

/// Generates one dataset per fraction under work_dir, trains every cell
/// (optionally across threads — cells are independent and deterministic),
/// writes table.csv plus per-cell metrics logs, and returns everything.
/// Failed cells are reported, not fatal: the table still covers the rest.
inline AblationResult run_ablation(const AblationSpec& spec, const std::string& work_dir) {
  spec.validate();
  spec.base.validate();
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(work_dir) / "cells");

  // Shared per-fraction datasets so every mode/seed sees the same data.
  struct FractionData {
    double fraction;
    TrainDatasets train;
    std::vector<DatasetRecord> test;
    int vocab_size;
  };
  std::vector<FractionData> datasets;
  for (const double f : spec.fractions) {
    SplitConfig dcfg = spec.data;
    dcfg.labeled_fraction = f;
    const std::string dir = (fs::path(work_dir) / ("data_f" + format_double(f))).string();
    const Manifest m = build_dataset(dcfg, dir);
    FractionData fd;
    fd.fraction = f;
    fd.train = load_train_datasets(dir);
    fd.test = read_jsonl((fs::path(dir) / "test.jsonl").string());
    fd.vocab_size = int(m.vocab.size());
    log_info("ablation dataset ready: fraction " + format_double(f) + " (" +
             std::to_string(fd.train.fully.size()) + " fully / " +
             std::to_string(fd.train.omni.size()) + " omni)");
    datasets.push_back(std::move(fd));
  }

  AblationResult result;
  for (std::size_t fi = 0; fi < datasets.size(); ++fi) {
    for (const SupervisionMode m : spec.modes) {
      for (const std::uint64_t s : spec.seeds) {
        CellResult c;
        c.mode = m;
        c.fraction = datasets[fi].fraction;
        c.seed = s;
        result.cells.push_back(c);
      }
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex io_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= result.cells.size()) return;
      CellResult& c = result.cells[i];
      const FractionData* fd = nullptr;
      for (const FractionData& d : datasets) {
        if (d.fraction == c.fraction) fd = &d;
      }
      try {
        TrainConfig cfg = spec.base;
        cfg.mode = c.mode;
        cfg.seed = c.seed;
        cfg.validate();
        const TrainResult tr = train_loop(fd->train, cfg, fd->vocab_size);
        c.test = evaluate(tr.student, fd->test);
        write_metrics_csv(tr.log, (fs::path(work_dir) / "cells" /
                                   (cell_tag(c.mode, c.fraction, c.seed) + ".metrics.csv"))
                                      .string());
        const std::lock_guard<std::mutex> lock(io_mutex);
        log_info("cell " + cell_tag(c.mode, c.fraction, c.seed) +
                 ": test miou " + format_double(c.test.miou));
      } catch (const std::exception& e) {
        c.failed = true;
        c.error = e.what();
        const std::lock_guard<std::mutex> lock(io_mutex);
        log_info("cell " + cell_tag(c.mode, c.fraction, c.seed) + " FAILED: " + c.error);
      }
    }
  };
  if (spec.parallel <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < spec.parallel; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  for (const CellResult& c : result.cells) result.failed_cells += c.failed ? 1 : 0;
  result.aggregates = aggregate_cells(spec, result.cells);
  result.orderings = check_orderings(spec, result.aggregates);

  const std::string table = ablation_table_csv(spec, result.cells, result.aggregates);
  const std::string table_path = (fs::path(work_dir) / "table.csv").string();
  std::ofstream out(table_path);
  if (!out) throw IoError("cannot open ablation table for writing: " + table_path);
  out << table;
  if (!out) throw IoError("failed writing ablation table: " + table_path);
  return result;
}

}  // namespace omniseg
