// Acceptance gate: ten pinned checks, one PASS/FAIL line each, nonzero exit
// if any fail. Slow training matrices run last; oracle checks run first.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "omniseg/omniseg.hpp"

using namespace omniseg;
namespace fs = std::filesystem;

namespace {

bool g_all_ok = true;
std::array<std::string, 10> g_lines;

void record(int criterion, bool ok, const std::string& detail) {
  g_all_ok = g_all_ok && ok;
  g_lines[std::size_t(criterion - 1)] =
      std::string(ok ? "PASS" : "FAIL") + " criterion " + std::to_string(criterion) + ": " +
      detail;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

std::vector<std::pair<double*, std::size_t>> param_spans(ModelParams& p) {
  return {{p.token_embeddings.data(), p.token_embeddings.size()},
          {p.W1.data(), p.W1.size()},
          {p.U1.data(), p.U1.size()},
          {p.b1.data(), p.b1.size()},
          {p.w2.data(), p.w2.size()},
          {&p.b2, 1}};
}

std::vector<double> flat_grads(const ParamGrads& g) {
  std::vector<double> out;
  for (const std::vector<double>* t : {&g.token_embeddings, &g.W1, &g.U1, &g.b1, &g.w2}) {
    out.insert(out.end(), t->begin(), t->end());
  }
  out.push_back(g.b2);
  return out;
}

void fill_params(ModelParams& p, double value) {
  for (auto [ptr, n] : param_spans(p)) {
    for (std::size_t i = 0; i < n; ++i) ptr[i] = value;
  }
}

BitMask random_mask(Rng& rng, int max_side, double density) {
  BitMask m(rng.uniform_int(1, max_side), rng.uniform_int(1, max_side));
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = rng.bernoulli(density);
  return m;
}

// --------------------------------------------------------------------------
// Criterion 4: analytic gradients vs central finite differences.
// --------------------------------------------------------------------------
void check_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20240915);
  double worst = 0.0;
  for (int cfg = 0; cfg < 20; ++cfg) {
    const int vocab = rng.uniform_int(3, 6);
    const int d_t = rng.uniform_int(2, 4);
    const int h = rng.uniform_int(2, 6);
    const int H = rng.uniform_int(2, 5);
    const int W = rng.uniform_int(2, 5);
    ModelParams params = init_params(derive_seed(777, std::uint64_t(cfg)), vocab, d_t, h);
    for (double& b : params.b1) b += rng.bernoulli(0.5) ? 0.3 : -0.3;
    params.b2 += rng.bernoulli(0.5) ? 0.3 : -0.3;

    FloatImage img(H, W);
    for (double& v : img.rgb) v = rng.u01();
    std::vector<int> tokens;
    const int n_tok = rng.uniform_int(1, 3);
    for (int t = 0; t < n_tok; ++t) tokens.push_back(rng.uniform_int(0, vocab - 1));
    BitMask target(H, W);
    for (std::size_t i = 0; i < target.bits.size(); ++i) target.bits[i] = rng.bernoulli(0.5);

    ForwardCache cache;
    forward(img, tokens, params, &cache);
    const std::vector<double> analytic = flat_grads(backward(cache, target, params));

    const double step = 1e-5;
    std::size_t k = 0;
    for (auto [ptr, n] : param_spans(params)) {
      for (std::size_t i = 0; i < n; ++i, ++k) {
        const double saved = ptr[i];
        ptr[i] = saved + step;
        const double up = bce_loss(forward(img, tokens, params), target);
        ptr[i] = saved - step;
        const double dn = bce_loss(forward(img, tokens, params), target);
        ptr[i] = saved;
        const double fd = (up - dn) / (2.0 * step);
        const double rel =
            std::abs(analytic[k] - fd) / std::max(std::abs(analytic[k]) + std::abs(fd), 1e-6);
        worst = std::max(worst, rel);
      }
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  record(4, worst < 1e-4 && secs < 30.0,
         "gradient check over 20 configs: worst rel err " + fmt(worst) + " (budget 1e-4), " +
             fmt(secs) + "s (budget 30s)");
}

// --------------------------------------------------------------------------
// Criterion 5: connected components vs an independent BFS flood fill.
// --------------------------------------------------------------------------
struct FloodResult {
  std::vector<int> labels;
  int count = 0;
  std::vector<int> sizes;
};

FloodResult flood_fill(const BitMask& m, Connectivity conn) {
  FloodResult out;
  out.labels.assign(m.bits.size(), 0);
  out.sizes.assign(1, 0);
  const int dr8[] = {-1, -1, -1, 0, 0, 1, 1, 1};
  const int dc8[] = {-1, 0, 1, -1, 1, -1, 0, 1};
  const int dr4[] = {-1, 0, 0, 1};
  const int dc4[] = {0, -1, 1, 0};
  const int n_dir = conn == Connectivity::four ? 4 : 8;
  const int* dr = conn == Connectivity::four ? dr4 : dr8;
  const int* dc = conn == Connectivity::four ? dc4 : dc8;
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      const std::size_t at = std::size_t(r) * m.width + c;
      if (!m.bits[at] || out.labels[at] != 0) continue;
      const int id = ++out.count;
      out.sizes.push_back(0);
      std::deque<std::pair<int, int>> queue{{r, c}};
      out.labels[at] = id;
      while (!queue.empty()) {
        const auto [qr, qc] = queue.front();
        queue.pop_front();
        out.sizes[std::size_t(id)] += 1;
        for (int d = 0; d < n_dir; ++d) {
          const int nr = qr + dr[d], nc = qc + dc[d];
          if (nr < 0 || nr >= m.height || nc < 0 || nc >= m.width) continue;
          const std::size_t ni = std::size_t(nr) * m.width + nc;
          if (m.bits[ni] && out.labels[ni] == 0) {
            out.labels[ni] = id;
            queue.emplace_back(nr, nc);
          }
        }
      }
    }
  }
  return out;
}

void check_components() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(881);
  int checked = 0;
  bool ok = true;
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    const BitMask m = random_mask(rng, 32, 0.15 + 0.7 * rng.u01());
    for (const Connectivity conn : {Connectivity::four, Connectivity::eight}) {
      const ComponentLabeling got = connected_components(m, conn);
      const FloodResult want = flood_fill(m, conn);
      ok = ok && got.component_count == want.count && got.labels == want.labels &&
           got.component_sizes == want.sizes;
    }
    ++checked;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  record(5, ok && checked == 1000 && secs < 10.0,
         "component labels match BFS flood fill on " + std::to_string(checked) +
             " random masks, both connectivities, " + fmt(secs) + "s (budget 10s)");
}

// --------------------------------------------------------------------------
// Criterion 6: pseudo-label refinement vs a brute-force reimplementation.
// --------------------------------------------------------------------------
std::vector<BitMask> enumerate_components(const BitMask& m, Connectivity conn) {
  std::vector<BitMask> out;
  BitMask remaining = m;
  auto touches = [&](const BitMask& comp, int r, int c) {
    const int reach = conn == Connectivity::four ? 1 : 2;
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        if (std::abs(dr) + std::abs(dc) > reach) continue;
        const int nr = r + dr, nc = c + dc;
        if (nr < 0 || nr >= m.height || nc < 0 || nc >= m.width) continue;
        if (comp.bits[std::size_t(nr) * m.width + nc]) return true;
      }
    }
    return false;
  };
  for (std::size_t seedling = 0; seedling < remaining.bits.size(); ++seedling) {
    if (!remaining.bits[seedling]) continue;
    BitMask comp(m.height, m.width);
    comp.bits[seedling] = true;
    for (bool grew = true; grew;) {
      grew = false;
      for (int r = 0; r < m.height; ++r) {
        for (int c = 0; c < m.width; ++c) {
          const std::size_t at = std::size_t(r) * m.width + c;
          if (!remaining.bits[at] || comp.bits[at]) continue;
          if (touches(comp, r, c)) {
            comp.bits[at] = true;
            grew = true;
          }
        }
      }
    }
    for (std::size_t i = 0; i < comp.bits.size(); ++i) {
      if (comp.bits[i]) remaining.bits[i] = false;
    }
    out.push_back(comp);
  }
  return out;
}

struct OracleOutcome {
  bool kept = false;
  BitMask mask;
};

OracleOutcome oracle_refine(const ProbMask& probs, const OmniLabel& label,
                            const RefinerConfig& cfg) {
  OracleOutcome out;
  BitMask binary(probs.height, probs.width);
  for (std::size_t i = 0; i < probs.values.size(); ++i) {
    binary.bits[i] = probs.values[i] >= cfg.binarize_threshold;
  }
  if (label.kind == LabelKind::none) {
    out.kept = true;
    out.mask = binary;
    return out;
  }
  const std::vector<BitMask> comps = enumerate_components(binary, cfg.connectivity);
  if (label.kind == LabelKind::point) {
    const std::size_t at = std::size_t(label.point.row) * probs.width + label.point.col;
    for (const BitMask& comp : comps) {
      if (comp.bits[at]) {
        out.kept = true;
        out.mask = comp;
        return out;
      }
    }
    return out;
  }
  // Box: the mask must fill strictly more than tau of the box area; then
  // keep whole components that reach into the box.
  std::size_t total = 0, inside = 0;
  for (int r = 0; r < probs.height; ++r) {
    for (int c = 0; c < probs.width; ++c) {
      if (!binary.bits[std::size_t(r) * probs.width + c]) continue;
      ++total;
      if (label.box.contains({r, c})) ++inside;
    }
  }
  if (total == 0 || double(inside) / double(label.box.area()) <= cfg.tau) return out;
  out.kept = true;
  out.mask = BitMask(probs.height, probs.width);
  for (const BitMask& comp : comps) {
    bool hits = false;
    for (int r = label.box.row0; r < label.box.row1 && !hits; ++r) {
      for (int c = label.box.col0; c < label.box.col1 && !hits; ++c) {
        hits = comp.bits[std::size_t(r) * probs.width + c];
      }
    }
    if (!hits) continue;
    for (std::size_t i = 0; i < comp.bits.size(); ++i) {
      out.mask.bits[i] = out.mask.bits[i] || comp.bits[i];
    }
  }
  return out;
}

void check_refinement() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(4417);
  int kept = 0, skipped = 0;
  bool ok = true;
  for (int trial = 0; trial < 500 && ok; ++trial) {
    const int H = rng.uniform_int(2, 14), W = rng.uniform_int(2, 14);
    ProbMask probs(H, W);
    for (double& v : probs.values) v = rng.u01();
    RefinerConfig cfg;
    cfg.binarize_threshold = 0.3 + 0.5 * rng.u01();
    cfg.tau = 0.05 + 0.85 * rng.u01();
    cfg.connectivity = rng.bernoulli(0.5) ? Connectivity::four : Connectivity::eight;
    OmniLabel label;
    const int kind = rng.uniform_int(0, 2);
    if (kind == 1) {
      label = OmniLabel::of_point({rng.uniform_int(0, H - 1), rng.uniform_int(0, W - 1)});
    } else if (kind == 2) {
      const int r0 = rng.uniform_int(0, H - 1), c0 = rng.uniform_int(0, W - 1);
      label = OmniLabel::of_box({r0, c0, rng.uniform_int(r0 + 1, H), rng.uniform_int(c0 + 1, W)});
    }
    const RefinementOutcome got = refine(probs, label, cfg);
    const OracleOutcome want = oracle_refine(probs, label, cfg);
    if (want.kept != got.refined) {
      ok = false;
    } else if (want.kept) {
      ok = got.mask.bits == want.mask.bits;
      ++kept;
    } else {
      ++skipped;
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  record(6, ok && kept + skipped == 500 && kept > 50 && skipped > 50 && secs < 10.0,
         "refinement matches brute force on 500 random cases (" + std::to_string(kept) +
             " kept / " + std::to_string(skipped) + " skipped), " + fmt(secs) +
             "s (budget 10s)");
}

// --------------------------------------------------------------------------
// Criterion 7: EMA distance to the student decays exactly geometrically.
// --------------------------------------------------------------------------
void check_ema() {
  double worst = 0.0;
  for (const double alpha : {0.9, 0.9996}) {
    ModelParams student = init_params(5, 3, 2, 2);
    ModelParams teacher = student;
    fill_params(student, 0.25);
    fill_params(teacher, 1.0);
    double expected_gap = 0.75;
    for (int k = 1; k <= 1000; ++k) {
      ema_update(teacher, student, alpha);
      expected_gap *= alpha;
      for (auto [ptr, n] : param_spans(teacher)) {
        for (std::size_t i = 0; i < n; ++i) {
          worst = std::max(worst, std::abs((ptr[i] - 0.25) - expected_gap));
        }
      }
    }
  }
  record(7, worst < 1e-9,
         "EMA gap follows alpha^k for k<=1000, alpha in {0.9, 0.9996}; worst deviation " +
             std::to_string(worst));
}

// --------------------------------------------------------------------------
// Criterion 8: cross-entropy anchors.
// --------------------------------------------------------------------------
void check_bce() {
  ProbMask half(8, 8, 0.5);
  BitMask any(8, 8);
  for (std::size_t i = 0; i < any.bits.size(); ++i) any.bits[i] = (i % 3) == 0;
  const double ln2_err = std::abs(bce_loss(half, any) - std::log(2.0));

  ProbMask two(1, 2);
  two.values = {0.9, 0.2};
  BitMask target(1, 2);
  target.bits = {true, false};
  const double two_err = std::abs(bce_loss(two, target) - 0.164252033486018);

  record(8, ln2_err < 1e-12 && two_err < 1e-9,
         "BCE anchors: ln2 err " + std::to_string(ln2_err) + " (budget 1e-12), two-pixel err " +
             std::to_string(two_err) + " (budget 1e-9)");
}

// --------------------------------------------------------------------------
// Criterion 9: mIoU/oIoU separation and strict precision thresholds.
// --------------------------------------------------------------------------
std::pair<BitMask, BitMask> pair_with(int inter, int uni, int width) {
  BitMask pred(1, width), gt(1, width);
  for (int i = 0; i < uni; ++i) pred.bits[std::size_t(i)] = true;
  for (int i = 0; i < inter; ++i) gt.bits[std::size_t(i)] = true;
  return {pred, gt};
}

void check_metrics() {
  auto [p1, g1] = pair_with(1, 2, 128);
  auto [p2, g2] = pair_with(0, 100, 128);
  const std::vector<MaskPair> fixture{{p1, g1}, {p2, g2}};
  const double mean_val = miou(fixture);
  const double overall_val = oiou(fixture);
  bool ok = std::abs(mean_val - 0.25) < 1e-15 && std::abs(overall_val - 1.0 / 102.0) < 1e-15 &&
            mean_val > overall_val;

  // Pr@X must be monotone non-increasing in the threshold, strict at ties.
  Rng rng(99);
  for (int trial = 0; trial < 50 && ok; ++trial) {
    std::vector<MaskPair> pairs;
    for (int i = 0; i < 8; ++i) {
      MaskPair mp;
      mp.pred = random_mask(rng, 12, 0.4);
      mp.gt = BitMask(mp.pred.height, mp.pred.width);
      for (std::size_t k = 0; k < mp.gt.bits.size(); ++k) mp.gt.bits[k] = rng.bernoulli(0.4);
      pairs.push_back(std::move(mp));
    }
    double prev = 1.0;
    for (double x = 0.05; x < 0.96; x += 0.05) {
      const double pr = precision_at(pairs, x);
      ok = ok && pr <= prev + 1e-15;
      prev = pr;
    }
  }
  auto [pe, ge] = pair_with(1, 2, 4);  // IoU exactly 0.5
  const std::vector<MaskPair> edge{{pe, ge}};
  ok = ok && precision_at(edge, 0.49) == 1.0 && precision_at(edge, 0.5) == 0.0;
  record(9, ok,
         "separating fixture: miou " + fmt(mean_val) + " vs oiou " + fmt(overall_val) +
             "; Pr@X monotone with strict thresholds");
}

// --------------------------------------------------------------------------
// Criterion 10: byte-stable metrics and exact resume.
// --------------------------------------------------------------------------
std::string strip_wall_ms(const std::string& csv) {
  std::string out;
  std::size_t start = 0;
  while (start < csv.size()) {
    std::size_t end = csv.find('\n', start);
    if (end == std::string::npos) end = csv.size();
    const std::string line = csv.substr(start, end - start);
    out += line.substr(0, line.rfind(','));
    out.push_back('\n');
    start = end + 1;
  }
  return out;
}

void check_determinism() {
  const Vocabulary& vocab = Vocabulary::standard();
  TrainDatasets data;
  for (int i = 0; i < 4; ++i) {
    DatasetRecord r = generate_record(i, 424242, vocab);
    r.split = Split::fully;
    data.fully.push_back(std::move(r));
  }
  for (int i = 0; i < 4; ++i) {
    DatasetRecord r = generate_record(100 + i, 424242, vocab);
    r.split = Split::omni;
    data.omni.push_back(std::move(r));
  }
  for (int i = 0; i < 2; ++i) {
    DatasetRecord r = generate_record(200 + i, 424242, vocab);
    r.split = Split::val;
    data.val.push_back(std::move(r));
  }

  TrainConfig cfg;
  cfg.mode = SupervisionMode::omni_box;
  cfg.batch_size = 4;
  cfg.max_steps = 10;
  cfg.burn_in_steps = 3;
  cfg.eval_every = 5;
  cfg.seed = 31;

  TrainState a = make_train_state(cfg, vocab.size());
  TrainState b = make_train_state(cfg, vocab.size());
  const std::vector<StepLog> log_a = run_training(a, data, cfg);
  const std::vector<StepLog> log_b = run_training(b, data, cfg);
  bool ok = a.student == b.student &&
            strip_wall_ms(metrics_csv(log_a)) == strip_wall_ms(metrics_csv(log_b));

  const fs::path dir = fs::temp_directory_path() / "omniseg_acceptance_c10";
  fs::create_directories(dir);
  save_params(a.student, (dir / "a.json").string());
  save_params(b.student, (dir / "b.json").string());
  ok = ok && read_text_file((dir / "a.json").string()) ==
                 read_text_file((dir / "b.json").string());

  // Interrupt at step 4, persist, reload, continue to 10.
  TrainConfig leg = cfg;
  leg.max_steps = 4;
  TrainState part = make_train_state(cfg, vocab.size());
  run_training(part, data, leg);
  save_train_state(part, (dir / "state.json").string());
  TrainState resumed = load_train_state((dir / "state.json").string(), vocab.size());
  const std::vector<StepLog> tail = run_training(resumed, data, cfg);
  ok = ok && resumed.student == a.student && resumed.teacher == a.teacher &&
       resumed.rng == a.rng && tail.size() == 6;
  for (std::size_t i = 0; ok && i < tail.size(); ++i) {
    const StepLog& want = log_a[4 + i];
    ok = tail[i].step == want.step && tail[i].l_sup == want.l_sup &&
         tail[i].l_omni == want.l_omni && tail[i].skip_rate == want.skip_rate &&
         tail[i].val_miou == want.val_miou;
  }
  fs::remove_all(dir);
  record(10, ok, "repeated runs byte-identical (wall time aside) and resume is exact");
}

// --------------------------------------------------------------------------
// Criteria 1-3: the training matrices.
// --------------------------------------------------------------------------
TrainConfig matrix_base() {
  TrainConfig base;
  base.batch_size = 8;
  base.max_steps = 3000;
  base.eval_every = 0;
  // Desk-scale operating point. K = 3000 steps is ~1/50 of the schedules the
  // reference tables assume, so the time constants shrink with it: lr 5e-4
  // puts the supervised baseline mid-learning-curve instead of saturated or
  // collapsed, and alpha 0.997 gives the teacher a ~330-step lag (11% of the
  // run) so its pseudo-masks pass through a visible partial-coverage phase
  // rather than snapping from empty to final in one eval interval. The
  // binarize and tau schedules are lowered to intersect that phase: teacher
  // confidence peaks near 0.3 mid-run, and a tau end below ~0.2 keeps
  // low-fill shapes (a perfect triangle fills only ~half its tight box)
  // eligible once masks consolidate.
  base.lr = 5e-4;
  base.alpha = 0.997;
  base.binarize_threshold_start = 0.25;
  base.binarize_threshold_end = 0.1;
  base.tau_start = 0.35;
  base.tau_end = 0.15;
  return base;
}

int pool_size(std::size_t cells) {
  const unsigned hw = std::thread::hardware_concurrency();
  return int(std::min<std::size_t>(cells, hw == 0 ? 1 : hw));
}

double agg_miou(const AblationResult& res, SupervisionMode mode, double fraction) {
  for (const CellAggregate& a : res.aggregates) {
    if (a.mode == mode && a.fraction == fraction && a.n == 3) return a.miou_mean;
  }
  return -1.0;  // missing or incomplete aggregate: fail loudly
}

void check_training_matrices() {
  const fs::path root = fs::temp_directory_path() / "omniseg_acceptance_runs";
  fs::remove_all(root);

  SplitConfig data;
  data.n_train = 2000;
  data.n_val = 200;
  data.n_test = 200;
  data.seed = 7;

  // Criterion 1: all four modes at the 5% labeled fraction.
  AblationSpec spec_a;
  spec_a.fractions = {0.05};
  spec_a.base = matrix_base();
  spec_a.data = data;
  spec_a.parallel = pool_size(12);
  const AblationResult res_a = run_ablation(spec_a, (root / "f05").string());
  const double f05_fully = agg_miou(res_a, SupervisionMode::fully, 0.05);
  const double f05_none = agg_miou(res_a, SupervisionMode::omni_none, 0.05);
  const double f05_point = agg_miou(res_a, SupervisionMode::omni_point, 0.05);
  const double f05_box = agg_miou(res_a, SupervisionMode::omni_box, 0.05);
  const bool order_ok = res_a.failed_cells == 0 && f05_none - f05_fully >= 0.01 &&
                        f05_point - f05_none >= 0.01 && f05_box - f05_point >= 0.01;
  record(1, order_ok,
         "mean test mIoU at fraction 0.05 over seeds {1,2,3}: fully " + fmt(f05_fully) +
             " < omni_none " + fmt(f05_none) + " < omni_point " + fmt(f05_point) +
             " < omni_box " + fmt(f05_box) + " with gaps >= 0.01");

  // Criterion 2 (and the aplr arm of criterion 3) at the 1% fraction.
  AblationSpec spec_b;
  spec_b.modes = {SupervisionMode::fully, SupervisionMode::omni_none, SupervisionMode::omni_box};
  spec_b.fractions = {0.01};
  spec_b.base = matrix_base();
  spec_b.data = data;
  spec_b.parallel = pool_size(9);
  const AblationResult res_b = run_ablation(spec_b, (root / "f01").string());
  const double f01_fully = agg_miou(res_b, SupervisionMode::fully, 0.01);
  const double f01_none = agg_miou(res_b, SupervisionMode::omni_none, 0.01);
  const double f01_aplr = agg_miou(res_b, SupervisionMode::omni_box, 0.01);
  record(2, res_b.failed_cells == 0 && f01_none - f01_fully >= 0.02,
         "teacher-student without refinement beats fully at fraction 0.01 by >= 0.02: fully " +
             fmt(f01_fully) + " vs omni_none " + fmt(f01_none));

  // Criterion 3: the refinement strategy against the two box baselines.
  auto boxes_with = [&](RefineStrategy strategy, const std::string& dir) {
    AblationSpec spec;
    spec.modes = {SupervisionMode::omni_box};
    spec.fractions = {0.01};
    spec.base = matrix_base();
    spec.base.refine_strategy = strategy;
    spec.data = data;
    spec.parallel = pool_size(3);
    const AblationResult res = run_ablation(spec, (root / dir).string());
    return res.failed_cells == 0 ? agg_miou(res, SupervisionMode::omni_box, 0.01) : -1.0;
  };
  const double f01_suppress = boxes_with(RefineStrategy::box_suppress, "f01_suppress");
  const double f01_conf = boxes_with(RefineStrategy::avg_confidence, "f01_conf");
  record(3,
         f01_aplr >= 0.0 && f01_suppress >= 0.0 && f01_conf >= 0.0 &&
             f01_aplr - f01_suppress >= 0.005 && f01_aplr - f01_conf >= 0.005,
         "component refinement beats box baselines at fraction 0.01 by >= 0.005: aplr " +
             fmt(f01_aplr) + " vs box_suppress " + fmt(f01_suppress) + " vs avg_confidence " +
             fmt(f01_conf));
}

}  // namespace

int main() {
  check_gradients();
  check_components();
  check_refinement();
  check_ema();
  check_bce();
  check_metrics();
  check_determinism();
  check_training_matrices();

  for (const std::string& line : g_lines) std::printf("%s\n", line.c_str());
  return g_all_ok ? 0 : 1;
}
