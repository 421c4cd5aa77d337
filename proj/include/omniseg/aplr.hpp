#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "omniseg/mask.hpp"

namespace omniseg {

// ---------------------------------------------------------------------------
// Active pseudo-label refinement: score a teacher pseudo-mask against a weak
// label (point or box), keep the components the label vouches for, or skip
// the example outright. Baseline strategies used by the ablation table live
// here too.
// ---------------------------------------------------------------------------

enum class LabelKind { none, point, box };

/// Weak supervision attached to an example: nothing, a referring point, or a
/// grounding box. Exactly one of point/box is meaningful per kind.
struct OmniLabel {
  LabelKind kind = LabelKind::none;
  PixelPoint point{};
  PixelBox box{};

  static OmniLabel none() { return {}; }
  static OmniLabel of_point(PixelPoint p) { return {LabelKind::point, p, {}}; }
  static OmniLabel of_box(PixelBox b) { return {LabelKind::box, {}, b}; }
};

enum class RefineStrategy { aplr, no_filtering, point_distance, box_suppress, avg_confidence };

inline std::string refine_strategy_name(RefineStrategy s) {
  switch (s) {
    case RefineStrategy::aplr: return "aplr";
    case RefineStrategy::no_filtering: return "no_filtering";
    case RefineStrategy::point_distance: return "point_distance";
    case RefineStrategy::box_suppress: return "box_suppress";
    case RefineStrategy::avg_confidence: return "avg_confidence";
  }
  throw std::invalid_argument("unknown refine strategy");
}

inline RefineStrategy refine_strategy_from_name(const std::string& s) {
  if (s == "aplr") return RefineStrategy::aplr;
  if (s == "no_filtering") return RefineStrategy::no_filtering;
  if (s == "point_distance") return RefineStrategy::point_distance;
  if (s == "box_suppress") return RefineStrategy::box_suppress;
  if (s == "avg_confidence") return RefineStrategy::avg_confidence;
  throw ConfigError("unknown refine strategy: " + s);
}

struct RefinerConfig {
  double tau = 0.5;                 // box coverage threshold
  double binarize_threshold = 0.7;  // teacher probability threshold
  RefineStrategy strategy = RefineStrategy::aplr;
  double distance_delta = 0.05;  // point-distance baseline, units of image diagonal
  double conf_threshold = 0.5;   // avg-confidence baseline
  Connectivity connectivity = Connectivity::eight;

  void validate() const {
    auto unit = [](double v, const char* name) {
      if (!(v > 0.0 && v < 1.0)) {
        throw ConfigError(std::string(name) + " must lie in (0,1)");
      }
    };
    unit(tau, "tau");
    unit(binarize_threshold, "binarize_threshold");
    unit(conf_threshold, "conf_threshold");
    if (distance_delta < 0.0) throw ConfigError("distance_delta must be >= 0");
  }
};

enum class SkipReason {
  no_component_hits_point,
  coverage_below_tau,
  empty_mask,
  distance_exceeded,
  confidence_below_threshold,
};

inline std::string skip_reason_name(SkipReason r) {
  switch (r) {
    case SkipReason::no_component_hits_point: return "no_component_hits_point";
    case SkipReason::coverage_below_tau: return "coverage_below_tau";
    case SkipReason::empty_mask: return "empty_mask";
    case SkipReason::distance_exceeded: return "distance_exceeded";
    case SkipReason::confidence_below_threshold: return "confidence_below_threshold";
  }
  throw std::invalid_argument("unknown skip reason");
}

/// Either a refined pseudo-mask to train on, or a decision to skip the
/// example this step.
struct RefinementOutcome {
  bool refined = false;
  BitMask mask;                                 // meaningful iff refined
  SkipReason reason = SkipReason::empty_mask;   // meaningful iff !refined

  static RefinementOutcome keep(BitMask m) {
    RefinementOutcome o;
    o.refined = true;
    o.mask = std::move(m);
    return o;
  }
  static RefinementOutcome skip(SkipReason r) {
    RefinementOutcome o;
    o.refined = false;
    o.reason = r;
    return o;
  }
};

// ---------------------------------------------------------------------------
// Selection metrics.
// ---------------------------------------------------------------------------

/// Point selection score s_p: the pseudo-mask is plausible iff the referring
/// point lands on a segmented pixel.
inline bool select_point(const BitMask& m, PixelPoint p) { return contains_point(m, p); }

/// Box selection score s_b: plausible iff the mask covers strictly more than
/// tau of the box area. An empty mask is always rejected.
inline bool select_box(const BitMask& m, const PixelBox& b, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0,1)");
  if (m.empty()) return false;
  return box_coverage_ratio(m, b) > tau;
}

// ---------------------------------------------------------------------------
// Refinement strategies. Each takes the teacher's ProbMask; binarization
// happens inside so the scheduled threshold stays in one place.
// ---------------------------------------------------------------------------

namespace detail {

inline void check_label_bounds(const ProbMask& p, const OmniLabel& label) {
  switch (label.kind) {
    case LabelKind::none: return;
    case LabelKind::point: check_point_in_bounds(label.point, p.height, p.width); return;
    case LabelKind::box: check_box_in_bounds(label.box, p.height, p.width); return;
  }
}

}  // namespace detail

/// The full two-step scheme: select via s_p / s_b, then keep only the
/// components the weak label vouches for. NoneLabel has nothing to refine
/// against and passes the binarized mask through.
inline RefinementOutcome refine(const ProbMask& p, const OmniLabel& label,
                                const RefinerConfig& cfg) {
  detail::check_label_bounds(p, label);
  BitMask m = binarize(p, cfg.binarize_threshold);
  switch (label.kind) {
    case LabelKind::none:
      return RefinementOutcome::keep(std::move(m));
    case LabelKind::point: {
      const ComponentLabeling cl = connected_components(m, cfg.connectivity);
      const int id = cl.label_at(label.point.row, label.point.col);
      if (id == 0) return RefinementOutcome::skip(SkipReason::no_component_hits_point);
      return RefinementOutcome::keep(extract_component(cl, id));
    }
    case LabelKind::box: {
      if (m.empty()) return RefinementOutcome::skip(SkipReason::empty_mask);
      if (!select_box(m, label.box, cfg.tau)) {
        return RefinementOutcome::skip(SkipReason::coverage_below_tau);
      }
      // Keep whole components that reach into the box; drop the rest.
      const ComponentLabeling cl = connected_components(m, cfg.connectivity);
      std::vector<std::uint8_t> touches(std::size_t(cl.component_count) + 1, 0);
      for (int r = label.box.row0; r < label.box.row1; ++r) {
        for (int c = label.box.col0; c < label.box.col1; ++c) {
          touches[cl.label_at(r, c)] = 1;
        }
      }
      BitMask kept(m.height, m.width);
      for (std::size_t i = 0; i < kept.bits.size(); ++i) {
        const int id = cl.labels[i];
        kept.bits[i] = (id != 0 && touches[id]) ? 1 : 0;
      }
      return RefinementOutcome::keep(std::move(kept));
    }
  }
  throw std::invalid_argument("unknown label kind");
}

/// Ablation: component selection without the skip path. A point miss returns
/// the raw binarized mask instead of skipping.
inline RefinementOutcome refine_no_filtering(const ProbMask& p, const OmniLabel& label,
                                             const RefinerConfig& cfg) {
  if (label.kind == LabelKind::none) return refine(p, label, cfg);
  if (label.kind != LabelKind::point) {
    throw ConfigError("no_filtering strategy requires point labels");
  }
  RefinementOutcome out = refine(p, label, cfg);
  if (out.refined) return out;
  return RefinementOutcome::keep(binarize(p, cfg.binarize_threshold));
}

/// Ablation: gate on the normalized distance from the point to the nearest
/// segmented pixel; never removes components.
inline RefinementOutcome refine_point_distance(const ProbMask& p, const OmniLabel& label,
                                               const RefinerConfig& cfg) {
  if (label.kind == LabelKind::none) return refine(p, label, cfg);
  if (label.kind != LabelKind::point) {
    throw ConfigError("point_distance strategy requires point labels");
  }
  detail::check_label_bounds(p, label);
  BitMask m = binarize(p, cfg.binarize_threshold);
  long long best_sq = -1;
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      if (!m.test(r, c)) continue;
      const long long dr = r - label.point.row, dc = c - label.point.col;
      const long long d = dr * dr + dc * dc;
      if (best_sq < 0 || d < best_sq) best_sq = d;
    }
  }
  if (best_sq < 0) return RefinementOutcome::skip(SkipReason::distance_exceeded);
  const double diag = std::sqrt(double(m.height) * m.height + double(m.width) * m.width);
  if (std::sqrt(double(best_sq)) / diag > cfg.distance_delta) {
    return RefinementOutcome::skip(SkipReason::distance_exceeded);
  }
  return RefinementOutcome::keep(std::move(m));
}

/// Ablation: clip the mask to the box region; keeps every example.
inline RefinementOutcome refine_box_suppress(const ProbMask& p, const OmniLabel& label,
                                             const RefinerConfig& cfg) {
  if (label.kind == LabelKind::none) return refine(p, label, cfg);
  if (label.kind != LabelKind::box) {
    throw ConfigError("box_suppress strategy requires box labels");
  }
  detail::check_label_bounds(p, label);
  const BitMask m = binarize(p, cfg.binarize_threshold);
  return RefinementOutcome::keep(mask_and(m, box_mask(label.box, m.height, m.width)));
}

/// Ablation: gate on the mean teacher confidence of the positive pixels
/// inside the box. A box with no positive pixel counts as empty and skips.
inline RefinementOutcome refine_avg_confidence(const ProbMask& p, const OmniLabel& label,
                                               const RefinerConfig& cfg) {
  if (label.kind == LabelKind::none) return refine(p, label, cfg);
  if (label.kind != LabelKind::box) {
    throw ConfigError("avg_confidence strategy requires box labels");
  }
  detail::check_label_bounds(p, label);
  BitMask m = binarize(p, cfg.binarize_threshold);
  double sum = 0.0;
  long long n = 0;
  for (int r = label.box.row0; r < label.box.row1; ++r) {
    for (int c = label.box.col0; c < label.box.col1; ++c) {
      if (!m.test(r, c)) continue;
      sum += p.at(r, c);
      ++n;
    }
  }
  if (n == 0) return RefinementOutcome::skip(SkipReason::empty_mask);
  if (sum / double(n) < cfg.conf_threshold) {
    return RefinementOutcome::skip(SkipReason::confidence_below_threshold);
  }
  return RefinementOutcome::keep(std::move(m));
}

/// Strategy dispatch used by the training loop.
inline RefinementOutcome refine_with_strategy(const ProbMask& p, const OmniLabel& label,
                                              const RefinerConfig& cfg) {
  switch (cfg.strategy) {
    case RefineStrategy::aplr: return refine(p, label, cfg);
    case RefineStrategy::no_filtering: return refine_no_filtering(p, label, cfg);
    case RefineStrategy::point_distance: return refine_point_distance(p, label, cfg);
    case RefineStrategy::box_suppress: return refine_box_suppress(p, label, cfg);
    case RefineStrategy::avg_confidence: return refine_avg_confidence(p, label, cfg);
  }
  throw std::invalid_argument("unknown refine strategy");
}

}  // namespace omniseg
