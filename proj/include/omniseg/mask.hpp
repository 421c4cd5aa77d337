#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "omniseg/util.hpp"

namespace omniseg {

// ---------------------------------------------------------------------------
// Pixel-grid value types. All of them are plain value types: cheap to copy
// for the sizes this project deals in, safe to share once built.
// ---------------------------------------------------------------------------

/// Per-pixel foreground probabilities in [0, 1].
struct ProbMask {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // height*width, row-major

  ProbMask() = default;
  ProbMask(int h, int w, double fill = 0.0)
      : height(h), width(w), values(std::size_t(h) * w, fill) {}

  double& at(int r, int c) { return values[std::size_t(r) * width + c]; }
  double at(int r, int c) const { return values[std::size_t(r) * width + c]; }
  std::size_t pixel_count() const { return std::size_t(height) * width; }
};

/// Binary mask, one byte per pixel (0 or 1).
struct BitMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;  // height*width, row-major

  BitMask() = default;
  BitMask(int h, int w, bool fill = false)
      : height(h), width(w), bits(std::size_t(h) * w, fill ? 1 : 0) {}

  bool test(int r, int c) const { return bits[std::size_t(r) * width + c] != 0; }
  void set(int r, int c, bool v = true) { bits[std::size_t(r) * width + c] = v ? 1 : 0; }

  int popcount() const { return int(std::count(bits.begin(), bits.end(), std::uint8_t(1))); }
  bool empty() const { return std::find(bits.begin(), bits.end(), std::uint8_t(1)) == bits.end(); }
  std::size_t pixel_count() const { return std::size_t(height) * width; }

  bool operator==(const BitMask&) const = default;
};

struct PixelPoint {
  int row = 0;
  int col = 0;
  bool operator==(const PixelPoint&) const = default;
};

/// Half-open box: rows [row0, row1), cols [col0, col1).
struct PixelBox {
  int row0 = 0;
  int col0 = 0;
  int row1 = 0;
  int col1 = 0;

  int box_height() const { return row1 - row0; }
  int box_width() const { return col1 - col0; }
  long long area() const { return (long long)box_height() * box_width(); }
  bool contains(PixelPoint p) const {
    return p.row >= row0 && p.row < row1 && p.col >= col0 && p.col < col1;
  }
  bool operator==(const PixelBox&) const = default;
};

inline void check_point_in_bounds(PixelPoint p, int height, int width) {
  if (p.row < 0 || p.row >= height || p.col < 0 || p.col >= width) {
    throw std::invalid_argument("point (" + std::to_string(p.row) + "," +
                                std::to_string(p.col) + ") out of bounds");
  }
}

inline void check_box_in_bounds(const PixelBox& b, int height, int width) {
  if (!(0 <= b.row0 && b.row0 < b.row1 && b.row1 <= height && 0 <= b.col0 &&
        b.col0 < b.col1 && b.col1 <= width)) {
    throw std::invalid_argument("box out of bounds or degenerate");
  }
}

// ---------------------------------------------------------------------------
// Connected components.
// ---------------------------------------------------------------------------

enum class Connectivity { four = 4, eight = 8 };

/// Result of connected-component labeling: 0 marks background, component ids
/// run 1..component_count in first-encounter raster order. component_sizes is
/// indexed by id (entry 0 unused, always 0).
struct ComponentLabeling {
  int height = 0;
  int width = 0;
  std::vector<int> labels;
  int component_count = 0;
  std::vector<int> component_sizes;

  int label_at(int r, int c) const { return labels[std::size_t(r) * width + c]; }
};

/// Two-pass union-find labeling. Deterministic: the final ids follow the
/// raster order in which each component is first seen.
inline ComponentLabeling connected_components(const BitMask& m,
                                              Connectivity conn = Connectivity::eight) {
  const int h = m.height, w = m.width;
  ComponentLabeling out;
  out.height = h;
  out.width = w;
  out.labels.assign(std::size_t(h) * w, 0);
  out.component_sizes.assign(1, 0);
  if (h == 0 || w == 0) return out;

  std::vector<int> parent{0};  // provisional labels, 1-based
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  auto unite = [&](int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (a > b) std::swap(a, b);
    parent[b] = a;
    return a;
  };

  const bool diag = conn == Connectivity::eight;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!m.test(r, c)) continue;
      int lbl = 0;
      auto consider = [&](int rr, int cc) {
        if (rr < 0 || cc < 0 || cc >= w) return;
        const int n = out.labels[std::size_t(rr) * w + cc];
        if (n == 0) return;
        lbl = (lbl == 0) ? find(n) : unite(lbl, n);
      };
      consider(r, c - 1);
      consider(r - 1, c);
      if (diag) {
        consider(r - 1, c - 1);
        consider(r - 1, c + 1);
      }
      if (lbl == 0) {
        lbl = int(parent.size());
        parent.push_back(lbl);
      }
      out.labels[std::size_t(r) * w + c] = lbl;
    }
  }

  // Second pass: compress to dense ids in first-encounter raster order.
  std::vector<int> dense(parent.size(), 0);
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    if (out.labels[i] == 0) continue;
    const int root = find(out.labels[i]);
    if (dense[root] == 0) {
      dense[root] = ++out.component_count;
      out.component_sizes.push_back(0);
    }
    out.labels[i] = dense[root];
    ++out.component_sizes[dense[root]];
  }
  return out;
}

inline BitMask extract_component(const ComponentLabeling& l, int id) {
  if (id < 1 || id > l.component_count) {
    throw std::invalid_argument("component id " + std::to_string(id) +
                                " out of range 1.." + std::to_string(l.component_count));
  }
  BitMask out(l.height, l.width);
  for (std::size_t i = 0; i < l.labels.size(); ++i) out.bits[i] = l.labels[i] == id ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// Geometric predicates and mask arithmetic.
// ---------------------------------------------------------------------------

/// Threshold is inclusive: a probability exactly at the threshold is kept.
inline BitMask binarize(const ProbMask& p, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("binarize threshold must lie in (0,1)");
  }
  BitMask out(p.height, p.width);
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double v = p.values[i];
    if (v < 0.0 || v > 1.0) throw std::invalid_argument("probability out of [0,1]");
    out.bits[i] = v >= threshold ? 1 : 0;
  }
  return out;
}

inline bool contains_point(const BitMask& m, PixelPoint p) {
  check_point_in_bounds(p, m.height, m.width);
  return m.test(p.row, p.col);
}

/// Fraction of the box area covered by set mask pixels.
inline double box_coverage_ratio(const BitMask& m, const PixelBox& b) {
  check_box_in_bounds(b, m.height, m.width);
  long long inside = 0;
  for (int r = b.row0; r < b.row1; ++r) {
    for (int c = b.col0; c < b.col1; ++c) inside += m.test(r, c) ? 1 : 0;
  }
  return double(inside) / double(b.area());
}

/// Intersection over union; both-empty is defined as a perfect 1.0.
inline double iou(const BitMask& a, const BitMask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument("iou: mask dimensions differ");
  }
  long long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    const bool sa = a.bits[i] != 0, sb = b.bits[i] != 0;
    inter += (sa && sb) ? 1 : 0;
    uni += (sa || sb) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return double(inter) / double(uni);
}

inline BitMask mask_and(const BitMask& a, const BitMask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument("mask_and: mask dimensions differ");
  }
  BitMask out(a.height, a.width);
  for (std::size_t i = 0; i < a.bits.size(); ++i) out.bits[i] = (a.bits[i] & b.bits[i]);
  return out;
}

inline BitMask mask_or(const BitMask& a, const BitMask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument("mask_or: mask dimensions differ");
  }
  BitMask out(a.height, a.width);
  for (std::size_t i = 0; i < a.bits.size(); ++i) out.bits[i] = (a.bits[i] | b.bits[i]);
  return out;
}

/// Indicator mask of a box region.
inline BitMask box_mask(const PixelBox& b, int height, int width) {
  check_box_in_bounds(b, height, width);
  BitMask out(height, width);
  for (int r = b.row0; r < b.row1; ++r) {
    for (int c = b.col0; c < b.col1; ++c) out.set(r, c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run-length serialization: comma-separated run lengths alternating
// background/foreground, starting with background ("0,..." when the first
// pixel is foreground).
// ---------------------------------------------------------------------------

inline std::string rle_encode(const BitMask& m) {
  std::string out;
  std::uint8_t cur = 0;
  long long run = 0;
  auto flush = [&] {
    if (!out.empty()) out.push_back(',');
    out += std::to_string(run);
  };
  for (const std::uint8_t b : m.bits) {
    if (b == cur) {
      ++run;
    } else {
      flush();
      cur = b;
      run = 1;
    }
  }
  flush();  // final run; an empty mask serializes as a single background run
  return out;
}

inline BitMask rle_decode(const std::string& s, int height, int width) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("rle_decode: bad dimensions");
  BitMask out(height, width);
  const long long total = (long long)height * width;
  long long pos = 0;
  std::uint8_t cur = 0;
  std::size_t i = 0;
  if (s.empty()) throw FormatError("rle_decode: empty string");
  while (i < s.size()) {
    std::size_t j = i;
    while (j < s.size() && s[j] != ',') ++j;
    if (j == i) throw FormatError("rle_decode: empty run token");
    long long run = 0;
    for (std::size_t k = i; k < j; ++k) {
      const char c = s[k];
      if (c < '0' || c > '9') throw FormatError("rle_decode: non-digit in run length");
      run = run * 10 + (c - '0');
      if (run > total) throw FormatError("rle_decode: run exceeds mask size");
    }
    if (pos + run > total) throw FormatError("rle_decode: runs exceed mask size");
    if (cur) std::fill_n(out.bits.begin() + pos, run, std::uint8_t(1));
    pos += run;
    cur ^= 1;
    i = (j < s.size()) ? j + 1 : j;
    if (j < s.size() && j + 1 == s.size()) throw FormatError("rle_decode: trailing comma");
  }
  if (pos != total) throw FormatError("rle_decode: runs do not sum to H*W");
  return out;
}

}  // namespace omniseg
