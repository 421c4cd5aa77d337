#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "omniseg/image.hpp"
#include "omniseg/mask.hpp"
#include "omniseg/rng.hpp"
#include "omniseg/util.hpp"

namespace omniseg {

// ---------------------------------------------------------------------------
// A deliberately small text-conditioned per-pixel segmenter:
//   feature f = [r, g, b, row/(H-1), col/(W-1)]
//   e        = mean of token embeddings
//   hidden   = relu(W1·f + U1·e + b1)
//   prob     = sigmoid(w2·hidden + b2)
// Gradients are derived by hand; Adam and the EMA teacher update live here
// as well so the whole optimization story is in one place.
// ---------------------------------------------------------------------------

inline constexpr int kFeatureDim = 5;
inline constexpr int kDefaultTextDim = 16;
inline constexpr int kDefaultHidden = 32;
inline constexpr int kCheckpointVersion = 1;
inline constexpr double kProbEps = 1e-7;  // BCE probability clamp

struct ModelParams {
  int vocab_size = 0;
  int d_t = kDefaultTextDim;
  int h = kDefaultHidden;
  std::vector<double> token_embeddings;  // vocab_size x d_t, row-major
  std::vector<double> W1;                // h x kFeatureDim
  std::vector<double> U1;                // h x d_t
  std::vector<double> b1;                // h
  std::vector<double> w2;                // h
  double b2 = 0.0;

  bool operator==(const ModelParams&) const = default;
};

/// Gradients (or any other accumulator) shaped exactly like ModelParams.
struct ParamGrads {
  std::vector<double> token_embeddings;
  std::vector<double> W1;
  std::vector<double> U1;
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;
};

struct AdamState {
  ParamGrads m;  // first moments
  ParamGrads v;  // second moments
  long long step = 0;
};

/// Everything backward() needs from the matching forward() call.
struct ForwardCache {
  int height = 0;
  int width = 0;
  std::vector<int> tokens;
  std::vector<double> embed;   // d_t
  FloatImage image;            // features 0..2; coordinates are derived
  std::vector<double> hidden;  // H*W x h, post-relu
  std::vector<double> probs;   // H*W
};

// ---------------------------------------------------------------------------
// Shape plumbing.
// ---------------------------------------------------------------------------

inline void check_param_shapes(const ModelParams& p) {
  const bool ok = p.vocab_size >= 1 && p.d_t >= 1 && p.h >= 1 &&
                  p.token_embeddings.size() == std::size_t(p.vocab_size) * p.d_t &&
                  p.W1.size() == std::size_t(p.h) * kFeatureDim &&
                  p.U1.size() == std::size_t(p.h) * p.d_t &&
                  p.b1.size() == std::size_t(p.h) && p.w2.size() == std::size_t(p.h);
  if (!ok) throw DimensionError("model tensors disagree with declared dimensions");
}

inline void check_params_finite(const ModelParams& p) {
  auto scan = [](const std::vector<double>& t) {
    for (const double v : t) {
      if (!std::isfinite(v)) throw NumericError("non-finite model parameter");
    }
  };
  scan(p.token_embeddings);
  scan(p.W1);
  scan(p.U1);
  scan(p.b1);
  scan(p.w2);
  if (!std::isfinite(p.b2)) throw NumericError("non-finite model parameter");
}

inline ParamGrads zero_grads_like(const ModelParams& p) {
  ParamGrads g;
  g.token_embeddings.assign(p.token_embeddings.size(), 0.0);
  g.W1.assign(p.W1.size(), 0.0);
  g.U1.assign(p.U1.size(), 0.0);
  g.b1.assign(p.b1.size(), 0.0);
  g.w2.assign(p.w2.size(), 0.0);
  g.b2 = 0.0;
  return g;
}

inline AdamState make_adam_state(const ModelParams& p) {
  return AdamState{zero_grads_like(p), zero_grads_like(p), 0};
}

// ---------------------------------------------------------------------------
// Initialization.
// ---------------------------------------------------------------------------

inline double xavier_scale(int fan_in, int fan_out) {
  return std::sqrt(6.0 / (double(fan_in) + double(fan_out)));
}

/// Weights uniform in (-s, s) with the Xavier scale per tensor (embeddings
/// count as a vocab_size -> d_t map); biases start at zero. Draw order is
/// fixed: token_embeddings, W1, U1, w2.
inline ModelParams init_params(std::uint64_t seed, int vocab_size,
                               int d_t = kDefaultTextDim, int h = kDefaultHidden) {
  if (vocab_size < 1) throw std::invalid_argument("vocab_size must be >= 1");
  if (d_t < 1 || h < 1) throw std::invalid_argument("d_t and h must be >= 1");
  Rng rng(seed);
  ModelParams p;
  p.vocab_size = vocab_size;
  p.d_t = d_t;
  p.h = h;
  auto fill = [&](std::vector<double>& t, std::size_t n, int fan_in, int fan_out) {
    const double s = xavier_scale(fan_in, fan_out);
    t.resize(n);
    for (double& v : t) v = rng.uniform(-s, s);
  };
  fill(p.token_embeddings, std::size_t(vocab_size) * d_t, vocab_size, d_t);
  fill(p.W1, std::size_t(h) * kFeatureDim, kFeatureDim, h);
  fill(p.U1, std::size_t(h) * d_t, d_t, h);
  p.b1.assign(h, 0.0);
  fill(p.w2, h, h, 1);
  p.b2 = 0.0;
  return p;
}

// ---------------------------------------------------------------------------
// Forward pass.
// ---------------------------------------------------------------------------

/// Mean pooling of the token-embedding rows.
inline std::vector<double> embed_text(const std::vector<int>& tokens, const ModelParams& p) {
  if (tokens.empty()) throw std::invalid_argument("embed_text: empty token sequence");
  std::vector<double> e(p.d_t, 0.0);
  for (const int t : tokens) {
    if (t < 0 || t >= p.vocab_size) {
      throw std::invalid_argument("embed_text: token id " + std::to_string(t) +
                                  " outside vocabulary of " + std::to_string(p.vocab_size));
    }
    const double* row = p.token_embeddings.data() + std::size_t(t) * p.d_t;
    for (int k = 0; k < p.d_t; ++k) e[k] += row[k];
  }
  const double inv = 1.0 / double(tokens.size());
  for (double& v : e) v *= inv;
  return e;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Per-pixel forward pass. Pass a cache when backward() will follow; leave
/// it null for teacher/eval inference to skip the hidden-activation store.
inline ProbMask forward(const FloatImage& image, const std::vector<int>& tokens,
                        const ModelParams& params, ForwardCache* cache = nullptr) {
  check_param_shapes(params);
  check_params_finite(params);
  const int H = image.height, W = image.width, h = params.h;
  if (H < 1 || W < 1 || image.rgb.size() != std::size_t(H) * W * 3) {
    throw std::invalid_argument("forward: malformed image");
  }
  const std::vector<double> e = embed_text(tokens, params);

  // Per-image constants: text/bias offset and coordinate contributions.
  std::vector<double> t_off(h);
  for (int j = 0; j < h; ++j) {
    double acc = params.b1[j];
    const double* u = params.U1.data() + std::size_t(j) * params.d_t;
    for (int k = 0; k < params.d_t; ++k) acc += u[k] * e[k];
    t_off[j] = acc;
  }
  std::vector<double> w1c(std::size_t(kFeatureDim) * h);  // W1 transposed, column-major
  for (int j = 0; j < h; ++j) {
    for (int f = 0; f < kFeatureDim; ++f) w1c[std::size_t(f) * h + j] = params.W1[std::size_t(j) * kFeatureDim + f];
  }
  std::vector<double> row_term(std::size_t(H) * h), col_term(std::size_t(W) * h);
  for (int r = 0; r < H; ++r) {
    const double rn = H > 1 ? double(r) / double(H - 1) : 0.0;
    for (int j = 0; j < h; ++j) row_term[std::size_t(r) * h + j] = w1c[std::size_t(3) * h + j] * rn + t_off[j];
  }
  for (int c = 0; c < W; ++c) {
    const double cn = W > 1 ? double(c) / double(W - 1) : 0.0;
    for (int j = 0; j < h; ++j) col_term[std::size_t(c) * h + j] = w1c[std::size_t(4) * h + j] * cn;
  }

  ProbMask out(H, W);
  if (cache) {
    cache->height = H;
    cache->width = W;
    cache->tokens = tokens;
    cache->embed = e;
    cache->image = image;
    cache->hidden.assign(std::size_t(H) * W * h, 0.0);
    cache->probs.assign(std::size_t(H) * W, 0.0);
  }
  const double* c0 = w1c.data();
  const double* c1 = w1c.data() + h;
  const double* c2 = w1c.data() + 2 * std::size_t(h);
  for (int r = 0; r < H; ++r) {
    const double* rt = row_term.data() + std::size_t(r) * h;
    for (int c = 0; c < W; ++c) {
      const double* ct = col_term.data() + std::size_t(c) * h;
      const std::size_t pix = std::size_t(r) * W + c;
      const double* rgb = image.rgb.data() + pix * 3;
      double z = params.b2;
      if (cache) {
        double* hid = cache->hidden.data() + pix * h;
        for (int j = 0; j < h; ++j) {
          const double a = c0[j] * rgb[0] + c1[j] * rgb[1] + c2[j] * rgb[2] + rt[j] + ct[j];
          const double post = a > 0.0 ? a : 0.0;
          hid[j] = post;
          z += params.w2[j] * post;
        }
      } else {
        for (int j = 0; j < h; ++j) {
          const double a = c0[j] * rgb[0] + c1[j] * rgb[1] + c2[j] * rgb[2] + rt[j] + ct[j];
          z += params.w2[j] * (a > 0.0 ? a : 0.0);
        }
      }
      const double prob = sigmoid(z);
      out.values[pix] = prob;
      if (cache) cache->probs[pix] = prob;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss and gradients.
// ---------------------------------------------------------------------------

/// Mean binary cross-entropy with probabilities clamped to [eps, 1-eps].
/// With weights, the mean is weight-normalized (sum w·l / sum w).
inline double bce_loss(const ProbMask& prob, const BitMask& target,
                       const std::vector<double>* weights = nullptr) {
  if (prob.height != target.height || prob.width != target.width) {
    throw std::invalid_argument("bce_loss: dimension mismatch");
  }
  if (weights && weights->size() != prob.values.size()) {
    throw std::invalid_argument("bce_loss: weight grid dimension mismatch");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < prob.values.size(); ++i) {
    const double p = std::clamp(prob.values[i], kProbEps, 1.0 - kProbEps);
    const double l = target.bits[i] ? -std::log(p) : -std::log(1.0 - p);
    const double w = weights ? (*weights)[i] : 1.0;
    num += w * l;
    den += w;
  }
  if (den <= 0.0) throw std::invalid_argument("bce_loss: weights sum to zero");
  return num / den;
}

/// Analytic gradient of bce_loss(forward(...), target) for every tensor.
/// The pixel residual uses the clamped probability, so saturated-but-wrong
/// pixels keep a full-strength signal instead of exploding or vanishing.
inline ParamGrads backward(const ForwardCache& cache, const BitMask& target,
                           const ModelParams& params) {
  check_param_shapes(params);
  const int H = cache.height, W = cache.width, h = params.h;
  const std::size_t N = std::size_t(H) * W;
  if (target.height != H || target.width != W) {
    throw std::invalid_argument("backward: target does not match cached forward");
  }
  if (cache.hidden.size() != N * h || cache.probs.size() != N ||
      cache.embed.size() != std::size_t(params.d_t) ||
      cache.image.rgb.size() != N * 3) {
    throw std::invalid_argument("backward: stale or mismatched cache");
  }

  ParamGrads g = zero_grads_like(params);
  std::vector<double> sum_ga(h, 0.0);  // sum over pixels of dLoss/d(pre-activation)
  std::vector<double> gw1c(std::size_t(kFeatureDim) * h, 0.0);  // W1 grad, column-major
  double* g0 = gw1c.data();
  double* g1 = gw1c.data() + h;
  double* g2 = gw1c.data() + 2 * std::size_t(h);
  double* g3 = gw1c.data() + 3 * std::size_t(h);
  double* g4 = gw1c.data() + 4 * std::size_t(h);
  const double invN = 1.0 / double(N);

  for (int r = 0; r < H; ++r) {
    const double rn = H > 1 ? double(r) / double(H - 1) : 0.0;
    for (int c = 0; c < W; ++c) {
      const double cn = W > 1 ? double(c) / double(W - 1) : 0.0;
      const std::size_t pix = std::size_t(r) * W + c;
      const double p = std::clamp(cache.probs[pix], kProbEps, 1.0 - kProbEps);
      const double gz = (p - (target.bits[pix] ? 1.0 : 0.0)) * invN;
      const double* hid = cache.hidden.data() + pix * h;
      const double* rgb = cache.image.rgb.data() + pix * 3;
      g.b2 += gz;
      for (int j = 0; j < h; ++j) {
        const double post = hid[j];
        g.w2[j] += gz * post;
        const double ga = post > 0.0 ? gz * params.w2[j] : 0.0;
        sum_ga[j] += ga;
        g0[j] += ga * rgb[0];
        g1[j] += ga * rgb[1];
        g2[j] += ga * rgb[2];
        g3[j] += ga * rn;
        g4[j] += ga * cn;
      }
    }
  }

  for (int j = 0; j < h; ++j) {
    g.b1[j] = sum_ga[j];
    for (int f = 0; f < kFeatureDim; ++f) {
      g.W1[std::size_t(j) * kFeatureDim + f] = gw1c[std::size_t(f) * h + j];
    }
  }
  // Text path: e is shared by every pixel, so dU1 factors into an outer
  // product, and the embedding rows split the pooled gradient evenly.
  std::vector<double> ge(params.d_t, 0.0);
  for (int j = 0; j < h; ++j) {
    const double s = sum_ga[j];
    const double* u = params.U1.data() + std::size_t(j) * params.d_t;
    double* gu = g.U1.data() + std::size_t(j) * params.d_t;
    for (int k = 0; k < params.d_t; ++k) {
      gu[k] = s * cache.embed[k];
      ge[k] += s * u[k];
    }
  }
  const double inv_len = 1.0 / double(cache.tokens.size());
  for (const int t : cache.tokens) {
    double* row = g.token_embeddings.data() + std::size_t(t) * params.d_t;
    for (int k = 0; k < params.d_t; ++k) row[k] += ge[k] * inv_len;
  }
  return g;
}

/// Elementwise sum of gradients, used for batch accumulation.
inline void accumulate_grads(ParamGrads& acc, const ParamGrads& g, double scale = 1.0) {
  auto add = [scale](std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("accumulate_grads: shape mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
  };
  add(acc.token_embeddings, g.token_embeddings);
  add(acc.W1, g.W1);
  add(acc.U1, g.U1);
  add(acc.b1, g.b1);
  add(acc.w2, g.w2);
  acc.b2 += scale * g.b2;
}

inline void scale_grads(ParamGrads& g, double scale) {
  for (auto* t : {&g.token_embeddings, &g.W1, &g.U1, &g.b1, &g.w2}) {
    for (double& v : *t) v *= scale;
  }
  g.b2 *= scale;
}

// ---------------------------------------------------------------------------
// Optimizer and the EMA teacher update.
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adam_step(ModelParams& params, const ParamGrads& grads, AdamState& state,
                      const AdamConfig& cfg = {}) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  auto upd = [&](std::span<double> theta, std::span<const double> g, std::span<double> m,
                 std::span<double> v) {
    if (theta.size() != g.size() || theta.size() != m.size() || theta.size() != v.size()) {
      throw std::invalid_argument("adam_step: shape mismatch");
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      theta[i] -= cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
    }
  };
  upd(params.token_embeddings, grads.token_embeddings, state.m.token_embeddings,
      state.v.token_embeddings);
  upd(params.W1, grads.W1, state.m.W1, state.v.W1);
  upd(params.U1, grads.U1, state.m.U1, state.v.U1);
  upd(params.b1, grads.b1, state.m.b1, state.v.b1);
  upd(params.w2, grads.w2, state.m.w2, state.v.w2);
  upd({&params.b2, 1}, {&grads.b2, 1}, {&state.m.b2, 1}, {&state.v.b2, 1});
}

/// teacher <- alpha * teacher + (1 - alpha) * student, elementwise.
inline void ema_update(ModelParams& teacher, const ModelParams& student, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0,1]");
  if (teacher.vocab_size != student.vocab_size || teacher.d_t != student.d_t ||
      teacher.h != student.h) {
    throw DimensionError("ema_update: teacher/student shapes differ");
  }
  auto mix = [alpha](std::span<double> t, std::span<const double> s) {
    if (t.size() != s.size()) throw DimensionError("ema_update: tensor shapes differ");
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = alpha * t[i] + (1.0 - alpha) * s[i];
  };
  mix(teacher.token_embeddings, student.token_embeddings);
  mix(teacher.W1, student.W1);
  mix(teacher.U1, student.U1);
  mix(teacher.b1, student.b1);
  mix(teacher.w2, student.w2);
  teacher.b2 = alpha * teacher.b2 + (1.0 - alpha) * student.b2;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization: a JSON document with a small header followed by
// the named tensors as nested arrays of decimal doubles.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json matrix_json(const std::vector<double>& t, int rows, int cols) {
  nlohmann::ordered_json rows_json = nlohmann::ordered_json::array();
  for (int r = 0; r < rows; ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int c = 0; c < cols; ++c) row.push_back(t[std::size_t(r) * cols + c]);
    rows_json.push_back(std::move(row));
  }
  return rows_json;
}

inline std::vector<double> matrix_from_json(const nlohmann::json& a, int rows, int cols,
                                            const std::string& name) {
  if (!a.is_array() || int(a.size()) != rows) {
    throw DimensionError("checkpoint tensor " + name + " has wrong row count");
  }
  std::vector<double> out;
  out.reserve(std::size_t(rows) * cols);
  for (const auto& row : a) {
    if (!row.is_array() || int(row.size()) != cols) {
      throw DimensionError("checkpoint tensor " + name + " has wrong column count");
    }
    for (const auto& v : row) {
      if (!v.is_number()) throw FormatError("checkpoint tensor " + name + " holds a non-number");
      out.push_back(v.get<double>());
    }
  }
  return out;
}

inline std::vector<double> vector_from_json(const nlohmann::json& a, int n,
                                            const std::string& name) {
  if (!a.is_array() || int(a.size()) != n) {
    throw DimensionError("checkpoint tensor " + name + " has wrong length");
  }
  std::vector<double> out;
  out.reserve(n);
  for (const auto& v : a) {
    if (!v.is_number()) throw FormatError("checkpoint tensor " + name + " holds a non-number");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace detail

inline nlohmann::ordered_json params_to_json(const ModelParams& p) {
  check_param_shapes(p);
  check_params_finite(p);
  nlohmann::ordered_json j;
  j["header"] = {{"vocab_size", p.vocab_size},
                 {"d_t", p.d_t},
                 {"h", p.h},
                 {"format_version", kCheckpointVersion}};
  j["token_embeddings"] = detail::matrix_json(p.token_embeddings, p.vocab_size, p.d_t);
  j["W1"] = detail::matrix_json(p.W1, p.h, kFeatureDim);
  j["U1"] = detail::matrix_json(p.U1, p.h, p.d_t);
  j["b1"] = p.b1;
  j["w2"] = p.w2;
  j["b2"] = p.b2;
  return j;
}

inline ModelParams params_from_json(const nlohmann::json& j, int expected_vocab = -1) {
  if (!j.is_object() || !j.contains("header") || !j["header"].is_object()) {
    throw FormatError("checkpoint missing header");
  }
  const auto& hd = j["header"];
  for (const char* key : {"vocab_size", "d_t", "h", "format_version"}) {
    if (!hd.contains(key) || !hd[key].is_number_integer()) {
      throw FormatError(std::string("checkpoint header missing ") + key);
    }
  }
  if (hd["format_version"].get<int>() != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint format_version");
  }
  ModelParams p;
  p.vocab_size = hd["vocab_size"].get<int>();
  p.d_t = hd["d_t"].get<int>();
  p.h = hd["h"].get<int>();
  if (p.vocab_size < 1 || p.d_t < 1 || p.h < 1) {
    throw FormatError("checkpoint header dimensions out of range");
  }
  if (expected_vocab >= 0 && p.vocab_size != expected_vocab) {
    throw DimensionError("checkpoint vocab_size " + std::to_string(p.vocab_size) +
                         " does not match expected " + std::to_string(expected_vocab));
  }
  for (const char* key : {"token_embeddings", "W1", "U1", "b1", "w2", "b2"}) {
    if (!j.contains(key)) throw FormatError(std::string("checkpoint missing tensor ") + key);
  }
  p.token_embeddings =
      detail::matrix_from_json(j["token_embeddings"], p.vocab_size, p.d_t, "token_embeddings");
  p.W1 = detail::matrix_from_json(j["W1"], p.h, kFeatureDim, "W1");
  p.U1 = detail::matrix_from_json(j["U1"], p.h, p.d_t, "U1");
  p.b1 = detail::vector_from_json(j["b1"], p.h, "b1");
  p.w2 = detail::vector_from_json(j["w2"], p.h, "w2");
  if (!j["b2"].is_number()) throw FormatError("checkpoint tensor b2 holds a non-number");
  p.b2 = j["b2"].get<double>();
  return p;
}

inline void save_params(const ModelParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << params_to_json(p) << "\n";
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

inline ModelParams load_params(const std::string& path, int expected_vocab = -1) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("corrupt checkpoint " + path + ": " + e.what());
  }
  return params_from_json(j, expected_vocab);
}

}  // namespace omniseg
