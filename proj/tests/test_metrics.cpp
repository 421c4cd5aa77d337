#include <cmath>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "omniseg/metrics.hpp"
#include "omniseg/rng.hpp"
#include "omniseg/synthgen.hpp"

using namespace omniseg;

namespace {

// Builds a pred/gt pair with exactly the requested intersection and union
// counts (inter <= uni), laid out on a single row.
MaskPair pair_with(long long inter, long long uni, int width) {
  MaskPair p;
  p.pred = BitMask(1, width);
  p.gt = BitMask(1, width);
  for (int c = 0; c < inter; ++c) {
    p.pred.set(0, c);
    p.gt.set(0, c);
  }
  for (int c = int(inter); c < uni; ++c) p.gt.set(0, c);  // gt-only pixels
  return p;
}

}  // namespace

TEST_CASE("miou and oiou disagree on the separating fixture", "[metrics]") {
  // Pair 1: inter 1, union 2 (IoU 0.5). Pair 2: inter 0, union 100 (IoU 0).
  const std::vector<MaskPair> pairs{pair_with(1, 2, 128), pair_with(0, 100, 128)};
  REQUIRE(miou(pairs) == 0.25);            // mean(0.5, 0)
  REQUIRE(oiou(pairs) == 1.0 / 102.0);     // (1+0) / (2+100)
  REQUIRE(miou(pairs) > oiou(pairs));      // the fixture separates the two
}

TEST_CASE("single-pair metrics reduce to plain IoU", "[metrics]") {
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    MaskPair p;
    p.pred = BitMask(9, 9);
    p.gt = BitMask(9, 9);
    for (auto& b : p.pred.bits) b = rng.bernoulli(0.4) ? 1 : 0;
    for (auto& b : p.gt.bits) b = rng.bernoulli(0.4) ? 1 : 0;
    const std::vector<MaskPair> one{p};
    const double direct = iou(p.pred, p.gt);
    REQUIRE(miou(one) == direct);
    REQUIRE(oiou(one) == direct);
  }
}

TEST_CASE("all-empty pairs score a perfect oiou", "[metrics]") {
  const std::vector<MaskPair> pairs{pair_with(0, 0, 4), pair_with(0, 0, 4)};
  REQUIRE(oiou(pairs) == 1.0);
  REQUIRE(miou(pairs) == 1.0);  // both-empty IoU is defined as 1
  REQUIRE(precision_at(pairs, 0.9) == 1.0);
}

TEST_CASE("precision thresholds are strict", "[metrics]") {
  // One pair at exactly IoU 0.5: counts for Pr@0.49 but not Pr@0.5.
  const std::vector<MaskPair> pairs{pair_with(1, 2, 8)};
  REQUIRE(precision_at(pairs, 0.49) == 1.0);
  REQUIRE(precision_at(pairs, 0.5) == 0.0);
}

TEST_CASE("precision is monotonically non-increasing in the threshold", "[metrics]") {
  Rng rng(66);
  std::vector<MaskPair> pairs;
  for (int i = 0; i < 60; ++i) {
    MaskPair p;
    p.pred = BitMask(8, 8);
    p.gt = BitMask(8, 8);
    for (auto& b : p.pred.bits) b = rng.bernoulli(0.5) ? 1 : 0;
    for (auto& b : p.gt.bits) b = rng.bernoulli(0.5) ? 1 : 0;
    pairs.push_back(std::move(p));
  }
  double prev = 1.0;
  for (double x = 0.05; x < 1.0; x += 0.05) {
    const double pr = precision_at(pairs, x);
    REQUIRE(pr <= prev);
    REQUIRE(pr >= 0.0);
    prev = pr;
  }
  REQUIRE(precision_at(pairs, 0.5) >= precision_at(pairs, 0.7));
  REQUIRE(precision_at(pairs, 0.7) >= precision_at(pairs, 0.9));
}

TEST_CASE("metrics reject empty or mismatched inputs", "[metrics]") {
  const std::vector<MaskPair> none;
  REQUIRE_THROWS_AS(miou(none), std::invalid_argument);
  REQUIRE_THROWS_AS(oiou(none), std::invalid_argument);
  REQUIRE_THROWS_AS(precision_at(none, 0.5), std::invalid_argument);
  MaskPair bad;
  bad.pred = BitMask(2, 2);
  bad.gt = BitMask(3, 3);
  REQUIRE_THROWS_AS(oiou({bad}), std::invalid_argument);
}

TEST_CASE("evaluate scores a constant-half model sensibly", "[metrics]") {
  // Zero parameters predict 0.5 everywhere; eval binarizes at 0.5 inclusive,
  // so the prediction is the full frame and IoU = |mask| / (H*W) per record.
  ModelParams p;
  p.vocab_size = 14;
  p.d_t = 2;
  p.h = 2;
  p.token_embeddings.assign(28, 0.0);
  p.W1.assign(std::size_t(2) * kFeatureDim, 0.0);
  p.U1.assign(4, 0.0);
  p.b1.assign(2, 0.0);
  p.w2.assign(2, 0.0);

  const Vocabulary vocab = Vocabulary::standard();
  std::vector<DatasetRecord> records;
  for (int id = 0; id < 5; ++id) records.push_back(generate_record(id, 31337, vocab));

  const EvalReport rep = evaluate(p, records);
  REQUIRE(rep.n_examples == 5);
  REQUIRE(rep.binarize_threshold_used == 0.5);
  double expect = 0.0;
  for (const DatasetRecord& r : records) {
    expect += double(r.mask.popcount()) / double(64 * 64);
  }
  expect /= 5.0;
  REQUIRE(std::abs(rep.miou - expect) < 1e-12);
  // Full-frame predictions of small objects never clear IoU 0.5.
  REQUIRE(rep.pr_at.at(0.5) == 0.0);
  REQUIRE_THROWS_AS(evaluate(p, {}), std::invalid_argument);
}

TEST_CASE("eval csv rows carry the full report", "[metrics]") {
  EvalReport rep;
  rep.oiou = 0.5;
  rep.miou = 0.25;
  rep.pr_at[0.5] = 1.0;
  rep.pr_at[0.7] = 0.5;
  rep.pr_at[0.9] = 0.0;
  rep.n_examples = 7;
  rep.binarize_threshold_used = 0.5;
  REQUIRE(eval_csv_header() == "split,n_examples,binarize_threshold,oiou,miou,pr_0.5,pr_0.7,pr_0.9");
  REQUIRE(eval_csv_row("val", rep) == "val,7,0.5,0.5,0.25,1,0.5,0");
}
