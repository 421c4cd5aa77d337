#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "omniseg/dataset.hpp"
#include "omniseg/mask.hpp"
#include "omniseg/model.hpp"
#include "omniseg/util.hpp"

namespace omniseg {

// ---------------------------------------------------------------------------
// Evaluation protocol: oIoU (one ratio of summed intersections to summed
// unions), mIoU (mean of per-pair ratios), and Pr@X (fraction of pairs with
// IoU strictly above X).
// ---------------------------------------------------------------------------

struct MaskPair {
  BitMask pred;
  BitMask gt;
};

namespace detail {

inline void pair_counts(const MaskPair& p, long long& inter, long long& uni) {
  if (p.pred.height != p.gt.height || p.pred.width != p.gt.width) {
    throw std::invalid_argument("metric pair dimensions differ");
  }
  inter = 0;
  uni = 0;
  for (std::size_t i = 0; i < p.pred.bits.size(); ++i) {
    const bool a = p.pred.bits[i] != 0, b = p.gt.bits[i] != 0;
    inter += (a && b) ? 1 : 0;
    uni += (a || b) ? 1 : 0;
  }
}

}  // namespace detail

inline double oiou(const std::vector<MaskPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("oiou: empty pair list");
  long long inter_sum = 0, uni_sum = 0;
  for (const MaskPair& p : pairs) {
    long long inter, uni;
    detail::pair_counts(p, inter, uni);
    inter_sum += inter;
    uni_sum += uni;
  }
  if (uni_sum == 0) return 1.0;  // nothing predicted, nothing to predict
  return double(inter_sum) / double(uni_sum);
}

inline double miou(const std::vector<MaskPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("miou: empty pair list");
  double sum = 0.0;
  for (const MaskPair& p : pairs) sum += iou(p.pred, p.gt);
  return sum / double(pairs.size());
}

/// Fraction of pairs with IoU strictly greater than x.
inline double precision_at(const std::vector<MaskPair>& pairs, double x) {
  if (pairs.empty()) throw std::invalid_argument("precision_at: empty pair list");
  long long hits = 0;
  for (const MaskPair& p : pairs) hits += iou(p.pred, p.gt) > x ? 1 : 0;
  return double(hits) / double(pairs.size());
}

struct EvalReport {
  double oiou = 0.0;
  double miou = 0.0;
  std::map<double, double> pr_at;  // keys 0.5, 0.7, 0.9
  int n_examples = 0;
  double binarize_threshold_used = 0.5;
};

inline constexpr double kEvalThreshold = 0.5;  // fixed; never the train schedule

/// Runs the model on un-augmented images and scores against the full masks.
inline EvalReport evaluate(const ModelParams& params,
                           const std::vector<DatasetRecord>& records,
                           double binarize_threshold = kEvalThreshold) {
  if (records.empty()) throw std::invalid_argument("evaluate: empty split");
  std::vector<MaskPair> pairs;
  pairs.reserve(records.size());
  for (const DatasetRecord& r : records) {
    const ProbMask probs = forward(to_float(r.image), r.tokens, params);
    pairs.push_back(MaskPair{binarize(probs, binarize_threshold), r.mask});
  }
  EvalReport rep;
  rep.oiou = oiou(pairs);
  rep.miou = miou(pairs);
  for (const double x : {0.5, 0.7, 0.9}) rep.pr_at[x] = precision_at(pairs, x);
  rep.n_examples = int(records.size());
  rep.binarize_threshold_used = binarize_threshold;
  return rep;
}

// ---------------------------------------------------------------------------
// CSV plumbing for the eval subcommand and the ablation table.
// ---------------------------------------------------------------------------

inline std::string eval_csv_header() {
  return "split,n_examples,binarize_threshold,oiou,miou,pr_0.5,pr_0.7,pr_0.9";
}

inline std::string eval_csv_row(const std::string& split, const EvalReport& r) {
  std::string row = split;
  row += "," + std::to_string(r.n_examples);
  row += "," + format_double(r.binarize_threshold_used);
  row += "," + format_double(r.oiou);
  row += "," + format_double(r.miou);
  for (const double x : {0.5, 0.7, 0.9}) row += "," + format_double(r.pr_at.at(x));
  return row;
}

}  // namespace omniseg
