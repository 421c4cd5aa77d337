#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "omniseg/aplr.hpp"
#include "omniseg/augment.hpp"
#include "omniseg/dataset.hpp"
#include "omniseg/metrics.hpp"
#include "omniseg/model.hpp"
#include "omniseg/rng.hpp"
#include "omniseg/util.hpp"

namespace omniseg {

// ---------------------------------------------------------------------------
// Teacher-student training: per step, a supervised BCE batch plus (after
// burn-in, in omni modes) a pseudo-label batch where the EMA teacher's
// prediction is refined against the weak labels before it supervises the
// student. Total loss is l_sup + lambda * l_omni.
// ---------------------------------------------------------------------------

enum class SupervisionMode { fully, omni_none, omni_point, omni_box };

inline std::string supervision_mode_name(SupervisionMode m) {
  switch (m) {
    case SupervisionMode::fully: return "fully";
    case SupervisionMode::omni_none: return "omni_none";
    case SupervisionMode::omni_point: return "omni_point";
    case SupervisionMode::omni_box: return "omni_box";
  }
  throw std::invalid_argument("unknown supervision mode");
}

inline SupervisionMode supervision_mode_from_name(const std::string& s) {
  if (s == "fully") return SupervisionMode::fully;
  if (s == "omni_none") return SupervisionMode::omni_none;
  if (s == "omni_point") return SupervisionMode::omni_point;
  if (s == "omni_box") return SupervisionMode::omni_box;
  throw ConfigError("unknown supervision mode: " + s);
}

inline LabelKind label_kind_for(SupervisionMode m) {
  switch (m) {
    case SupervisionMode::fully:
    case SupervisionMode::omni_none: return LabelKind::none;
    case SupervisionMode::omni_point: return LabelKind::point;
    case SupervisionMode::omni_box: return LabelKind::box;
  }
  throw std::invalid_argument("unknown supervision mode");
}

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 64;
  int max_steps = 3000;  // K
  double lambda = 1.0;   // omni-loss weight
  double alpha = 0.9996; // EMA keeping rate
  double binarize_threshold_start = 0.7;
  double binarize_threshold_end = 0.2;
  double tau_start = 0.5;
  double tau_end = 0.2;
  RefineStrategy refine_strategy = RefineStrategy::aplr;
  SupervisionMode mode = SupervisionMode::fully;
  int burn_in_steps = -1;  // -1: 10% of max_steps
  std::uint64_t seed = 0;
  int eval_every = 250;  // 0: evaluate only after the final step
  AugmentConfig augment;
  double distance_delta = 0.05;  // point_distance baseline
  double conf_threshold = 0.5;   // avg_confidence baseline
  Connectivity connectivity = Connectivity::eight;

  int effective_burn_in() const {
    return burn_in_steps >= 0 ? burn_in_steps : max_steps / 10;
  }

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0,1]");
    auto unit = [](double v, const char* name) {
      if (!(v > 0.0 && v < 1.0)) throw ConfigError(std::string(name) + " must lie in (0,1)");
    };
    unit(binarize_threshold_start, "binarize_threshold_start");
    unit(binarize_threshold_end, "binarize_threshold_end");
    unit(tau_start, "tau_start");
    unit(tau_end, "tau_end");
    if (binarize_threshold_start < binarize_threshold_end) {
      throw ConfigError("binarize threshold schedule must not increase");
    }
    if (tau_start < tau_end) throw ConfigError("tau schedule must not increase");
    const int burn = effective_burn_in();
    if (burn < 0 || burn >= max_steps) {
      throw ConfigError("burn_in_steps must lie in [0, max_steps)");
    }
    if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
    augment.validate();
    if (mode == SupervisionMode::omni_point) {
      if (refine_strategy == RefineStrategy::box_suppress ||
          refine_strategy == RefineStrategy::avg_confidence) {
        throw ConfigError("point labels cannot drive a box refinement strategy");
      }
    }
    if (mode == SupervisionMode::omni_box) {
      if (refine_strategy == RefineStrategy::no_filtering ||
          refine_strategy == RefineStrategy::point_distance) {
        throw ConfigError("box labels cannot drive a point refinement strategy");
      }
    }
  }
};

/// Scheduled (binarize_threshold, tau) at a 0-based step: constant at the
/// start values through burn-in, then linear decay to the end values at K.
inline std::pair<double, double> threshold_schedule(int step, const TrainConfig& cfg) {
  if (step < 0 || step > cfg.max_steps) {
    throw std::invalid_argument("threshold_schedule: step outside [0, max_steps]");
  }
  const int burn = cfg.effective_burn_in();
  if (step <= burn) return {cfg.binarize_threshold_start, cfg.tau_start};
  const double f = double(step - burn) / double(cfg.max_steps - burn);
  return {cfg.binarize_threshold_start +
              (cfg.binarize_threshold_end - cfg.binarize_threshold_start) * f,
          cfg.tau_start + (cfg.tau_end - cfg.tau_start) * f};
}

struct TrainState {
  ModelParams student;
  ModelParams teacher;
  AdamState adam;
  int step = 0;  // completed steps
  Rng rng;
  long long omni_seen = 0;
  long long omni_skipped = 0;
};

/// Fresh state: student from a seed-derived init stream, teacher an exact
/// copy, optimizer zeroed. The training rng gets its own stream.
inline TrainState make_train_state(const TrainConfig& cfg, int vocab_size) {
  TrainState s;
  s.student = init_params(derive_seed(cfg.seed, 0), vocab_size);
  s.teacher = s.student;
  s.adam = make_adam_state(s.student);
  s.rng = Rng(derive_seed(cfg.seed, 1));
  return s;
}

struct BatchResult {
  double loss = 0.0;
  ParamGrads grads;
  int skip_count = 0;
};

/// One supervised batch: student forward on the strong view, BCE against the
/// geometrically matched ground-truth mask, gradients averaged over records.
/// Consumes rng draws per record in order: strong augment only.
inline BatchResult supervised_step(const std::vector<const DatasetRecord*>& batch,
                                   TrainState& state, const TrainConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("supervised_step: empty batch");
  BatchResult out;
  out.grads = zero_grads_like(state.student);
  ForwardCache cache;
  for (const DatasetRecord* r : batch) {
    if (r->mask.height != r->image.height || r->mask.width != r->image.width) {
      throw std::invalid_argument("supervised_step: record lacks a full mask");
    }
    const StrongView sv = strong_augment(to_float(r->image), state.rng, cfg.augment);
    const BitMask target = transfer_mask(r->mask, GeoTransform{}, sv.geo);
    const ProbMask probs = forward(sv.image, r->tokens, state.student, &cache);
    out.loss += bce_loss(probs, target);
    accumulate_grads(out.grads, backward(cache, target, state.student));
  }
  out.loss /= double(batch.size());
  scale_grads(out.grads, 1.0 / double(batch.size()));
  return out;
}

/// Test hook: supplies teacher probabilities (in the weak-view frame) in
/// place of the real teacher forward pass.
using TeacherOverride = std::function<ProbMask(const DatasetRecord&, const WeakView&)>;

/// One omni batch: teacher predicts on the weak view, the weak label —
/// mapped into that view — drives refinement, and surviving pseudo-masks are
/// transferred to the student's strong view for BCE. Skipped records
/// contribute nothing; the loss/gradient mean runs over contributors only.
/// Consumes rng draws per record in order: weak augment, strong augment.
inline BatchResult omni_step(const std::vector<const DatasetRecord*>& batch, TrainState& state,
                             const TrainConfig& cfg,
                             const TeacherOverride& teacher_override = {}) {
  if (batch.empty()) throw std::invalid_argument("omni_step: empty batch");
  if (cfg.mode == SupervisionMode::fully) {
    throw ConfigError("omni_step requires an omni supervision mode");
  }
  const auto [binarize_threshold, tau] = threshold_schedule(state.step, cfg);
  RefinerConfig rcfg;
  rcfg.tau = tau;
  rcfg.binarize_threshold = binarize_threshold;
  rcfg.strategy = cfg.refine_strategy;
  rcfg.distance_delta = cfg.distance_delta;
  rcfg.conf_threshold = cfg.conf_threshold;
  rcfg.connectivity = cfg.connectivity;
  const LabelKind kind = label_kind_for(cfg.mode);

  BatchResult out;
  out.grads = zero_grads_like(state.student);
  ForwardCache cache;
  int contributing = 0;
  for (const DatasetRecord* r : batch) {
    const FloatImage img = to_float(r->image);
    const WeakView wv = weak_augment(img, state.rng, cfg.augment);
    const StrongView sv = strong_augment(img, state.rng, cfg.augment);
    const ProbMask teacher_probs = teacher_override
                                       ? teacher_override(*r, wv)
                                       : forward(wv.image, r->tokens, state.teacher);
    OmniLabel label = omni_label_for(*r, kind);
    if (label.kind == LabelKind::point) {
      label.point = transform_point(label.point, wv.geo, img.width);
    } else if (label.kind == LabelKind::box) {
      label.box = transform_box(label.box, wv.geo, img.width);
    }
    const RefinementOutcome outcome = refine_with_strategy(teacher_probs, label, rcfg);
    if (!outcome.refined) {
      ++out.skip_count;
      continue;
    }
    const BitMask pseudo = transfer_mask(outcome.mask, wv.geo, sv.geo);
    const ProbMask probs = forward(sv.image, r->tokens, state.student, &cache);
    out.loss += bce_loss(probs, pseudo);
    accumulate_grads(out.grads, backward(cache, pseudo, state.student));
    ++contributing;
  }
  if (contributing > 0) {
    out.loss /= double(contributing);
    scale_grads(out.grads, 1.0 / double(contributing));
  }
  return out;
}

// ---------------------------------------------------------------------------
// The full loop.
// ---------------------------------------------------------------------------

struct TrainDatasets {
  std::vector<DatasetRecord> fully;
  std::vector<DatasetRecord> omni;
  std::vector<DatasetRecord> val;
};

/// Reads train.jsonl (split into fully/omni by tag) and val.jsonl.
inline TrainDatasets load_train_datasets(const std::string& data_dir) {
  namespace fs = std::filesystem;
  TrainDatasets d;
  for (DatasetRecord& r : read_jsonl((fs::path(data_dir) / "train.jsonl").string())) {
    (r.split == Split::fully ? d.fully : d.omni).push_back(std::move(r));
  }
  d.val = read_jsonl((fs::path(data_dir) / "val.jsonl").string());
  return d;
}

struct StepLog {
  int step = 0;  // 1-based completed step
  double l_sup = 0.0;
  double l_omni = 0.0;
  double skip_rate = 0.0;    // skipped fraction of the omni batch (0 when inactive)
  double val_miou = -1.0;    // negative: no eval at this step
  double val_oiou = -1.0;
  double wall_ms = 0.0;      // cumulative, excluded from determinism checks
};

using StepCallback = std::function<void(const TrainState&, const StepLog&)>;

/// Advances `state` to cfg.max_steps and returns one log row per executed
/// step. Per step, the rng protocol is: batch_size index draws for the fully
/// batch, its augment draws, then — only when the omni phase is active —
/// batch_size omni index draws and their augment draws.
inline std::vector<StepLog> run_training(TrainState& state, const TrainDatasets& data,
                                         const TrainConfig& cfg,
                                         const StepCallback& callback = {},
                                         const TeacherOverride& teacher_override = {}) {
  cfg.validate();
  if (data.fully.empty()) throw ConfigError("training requires a non-empty fully split");
  if (cfg.mode != SupervisionMode::fully && data.omni.empty()) {
    throw ConfigError("omni modes require a non-empty omni split");
  }
  const int burn = cfg.effective_burn_in();
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<StepLog> log;
  log.reserve(std::size_t(std::max(0, cfg.max_steps - state.step)));

  std::vector<const DatasetRecord*> batch(std::size_t(cfg.batch_size));
  auto sample = [&](const std::vector<DatasetRecord>& from) {
    for (auto& slot : batch) {
      slot = &from[std::size_t(state.rng.uniform_int(0, int(from.size()) - 1))];
    }
  };

  while (state.step < cfg.max_steps) {
    sample(data.fully);
    const BatchResult sup = supervised_step(batch, state, cfg);
    ParamGrads total = sup.grads;

    StepLog row;
    const bool omni_active = cfg.mode != SupervisionMode::fully && state.step >= burn;
    if (omni_active) {
      sample(data.omni);
      const BatchResult om = omni_step(batch, state, cfg, teacher_override);
      row.l_omni = om.loss;
      row.skip_rate = double(om.skip_count) / double(cfg.batch_size);
      state.omni_seen += cfg.batch_size;
      state.omni_skipped += om.skip_count;
      if (om.skip_count < cfg.batch_size) accumulate_grads(total, om.grads, cfg.lambda);
    }

    adam_step(state.student, total, state.adam, AdamConfig{.lr = cfg.lr});
    state.step += 1;
    if (state.step == burn) {
      state.teacher = state.student;  // burn-in hand-off
    } else if (state.step > burn) {
      ema_update(state.teacher, state.student, cfg.alpha);
    }

    row.step = state.step;
    row.l_sup = sup.loss;
    const bool last = state.step == cfg.max_steps;
    const bool eval_now = !data.val.empty() &&
                          (last || (cfg.eval_every > 0 && state.step % cfg.eval_every == 0));
    if (eval_now) {
      const EvalReport rep = evaluate(state.student, data.val);
      row.val_miou = rep.miou;
      row.val_oiou = rep.oiou;
    }
    row.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    if (callback) callback(state, row);
    log.push_back(row);
  }
  return log;
}

struct TrainResult {
  ModelParams student;
  ModelParams teacher;
  std::vector<StepLog> log;
};

/// Fresh state + full run; the shape most callers want.
inline TrainResult train_loop(const TrainDatasets& data, const TrainConfig& cfg,
                              int vocab_size, const StepCallback& callback = {}) {
  TrainState state = make_train_state(cfg, vocab_size);
  TrainResult out;
  out.log = run_training(state, data, cfg, callback);
  out.student = std::move(state.student);
  out.teacher = std::move(state.teacher);
  return out;
}

// ---------------------------------------------------------------------------
// Metrics CSV.
// ---------------------------------------------------------------------------

inline std::string metrics_csv_header() {
  return "step,l_sup,l_omni,skip_rate,val_miou,val_oiou,wall_ms";
}

inline std::string metrics_csv_row(const StepLog& r) {
  std::string row = std::to_string(r.step);
  row += "," + format_double(r.l_sup);
  row += "," + format_double(r.l_omni);
  row += "," + format_double(r.skip_rate);
  row += ",";
  if (r.val_miou >= 0.0) row += format_double(r.val_miou);
  row += ",";
  if (r.val_oiou >= 0.0) row += format_double(r.val_oiou);
  row += "," + format_double(r.wall_ms);
  return row;
}

inline std::string metrics_csv(const std::vector<StepLog>& log) {
  std::string out = metrics_csv_header() + "\n";
  for (const StepLog& row : log) out += metrics_csv_row(row) + "\n";
  return out;
}

inline void write_metrics_csv(const std::vector<StepLog>& log, const std::string& path,
                              bool append = false) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw IoError("cannot open metrics CSV for writing: " + path);
  if (append) {
    for (const StepLog& row : log) out << metrics_csv_row(row) << "\n";
  } else {
    out << metrics_csv(log);
  }
  if (!out) throw IoError("failed writing metrics CSV: " + path);
}

// ---------------------------------------------------------------------------
// Training-state checkpoints (resume support).
// ---------------------------------------------------------------------------

inline constexpr int kTrainStateVersion = 1;

namespace detail {

inline nlohmann::ordered_json grads_to_json(const ParamGrads& g) {
  nlohmann::ordered_json j;
  j["token_embeddings"] = g.token_embeddings;
  j["W1"] = g.W1;
  j["U1"] = g.U1;
  j["b1"] = g.b1;
  j["w2"] = g.w2;
  j["b2"] = g.b2;
  return j;
}

inline ParamGrads grads_from_json(const nlohmann::json& j, const ModelParams& like) {
  ParamGrads g = zero_grads_like(like);
  try {
    auto read = [&](const char* key, std::vector<double>& into) {
      const auto v = j.at(key).get<std::vector<double>>();
      if (v.size() != into.size()) {
        throw DimensionError(std::string("train state tensor ") + key + " has wrong length");
      }
      into = v;
    };
    read("token_embeddings", g.token_embeddings);
    read("W1", g.W1);
    read("U1", g.U1);
    read("b1", g.b1);
    read("w2", g.w2);
    g.b2 = j.at("b2").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed train state: ") + e.what());
  }
  return g;
}

}  // namespace detail

inline void save_train_state(const TrainState& s, const std::string& path) {
  nlohmann::ordered_json j;
  j["format_version"] = kTrainStateVersion;
  j["step"] = s.step;
  j["rng_state"] = s.rng.save_state();
  j["omni_seen"] = s.omni_seen;
  j["omni_skipped"] = s.omni_skipped;
  j["student"] = params_to_json(s.student);
  j["teacher"] = params_to_json(s.teacher);
  j["adam"] = {{"step", s.adam.step},
               {"m", detail::grads_to_json(s.adam.m)},
               {"v", detail::grads_to_json(s.adam.v)}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot open train state for writing: " + path);
  out << j << "\n";
  if (!out) throw IoError("failed writing train state: " + path);
}

inline TrainState load_train_state(const std::string& path, int expected_vocab = -1) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open train state: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("corrupt train state " + path + ": " + e.what());
  }
  if (!j.contains("format_version") || !j["format_version"].is_number_integer() ||
      j["format_version"].get<int>() != kTrainStateVersion) {
    throw FormatError("unsupported train state format_version");
  }
  TrainState s;
  try {
    s.step = j.at("step").get<int>();
    s.omni_seen = j.at("omni_seen").get<long long>();
    s.omni_skipped = j.at("omni_skipped").get<long long>();
    s.student = params_from_json(j.at("student"), expected_vocab);
    s.teacher = params_from_json(j.at("teacher"), expected_vocab);
    s.adam.step = j.at("adam").at("step").get<long long>();
    s.adam.m = detail::grads_from_json(j.at("adam").at("m"), s.student);
    s.adam.v = detail::grads_from_json(j.at("adam").at("v"), s.student);
    s.rng.load_state(j.at("rng_state").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed train state: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("malformed train state: ") + e.what());
  }
  if (s.teacher.vocab_size != s.student.vocab_size || s.teacher.d_t != s.student.d_t ||
      s.teacher.h != s.student.h) {
    throw DimensionError("train state teacher/student shapes differ");
  }
  if (s.step < 0) throw FormatError("train state step is negative");
  return s;
}

}  // namespace omniseg
