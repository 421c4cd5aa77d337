#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "omniseg/dataset.hpp"
#include "omniseg/image.hpp"
#include "omniseg/mask.hpp"
#include "omniseg/rng.hpp"
#include "omniseg/util.hpp"

namespace omniseg {

// ---------------------------------------------------------------------------
// Synthetic referring-segmentation benchmark: scenes of 2-4 non-overlapping
// colored shapes on mid-gray, expressions that always pick out exactly one
// object (colors are unique within a scene), full masks, and derived weak
// labels.
// ---------------------------------------------------------------------------

enum class ShapeKind { square, disc, triangle };
enum class ColorName { red, green, blue, yellow, purple, cyan };

inline constexpr int kNumShapes = 3;
inline constexpr int kNumColors = 6;
inline constexpr int kMinObjectSize = 6;
inline constexpr int kMaxObjectSize = 14;
inline constexpr int kMinObjects = 2;
inline constexpr int kMaxObjects = 4;
inline constexpr std::uint8_t kBackgroundGray = 128;

inline const char* shape_word(ShapeKind s) {
  switch (s) {
    case ShapeKind::square: return "square";
    case ShapeKind::disc: return "disc";
    case ShapeKind::triangle: return "triangle";
  }
  throw std::invalid_argument("unknown shape");
}

inline const char* color_word(ColorName c) {
  switch (c) {
    case ColorName::red: return "red";
    case ColorName::green: return "green";
    case ColorName::blue: return "blue";
    case ColorName::yellow: return "yellow";
    case ColorName::purple: return "purple";
    case ColorName::cyan: return "cyan";
  }
  throw std::invalid_argument("unknown color");
}

/// Nominal byte RGB per color word; chosen so images round-trip exactly
/// through the byte-valued record format.
inline void color_rgb(ColorName c, std::uint8_t out[3]) {
  switch (c) {
    case ColorName::red: out[0] = 255; out[1] = 0; out[2] = 0; return;
    case ColorName::green: out[0] = 0; out[1] = 255; out[2] = 0; return;
    case ColorName::blue: out[0] = 0; out[1] = 0; out[2] = 255; return;
    case ColorName::yellow: out[0] = 255; out[1] = 255; out[2] = 0; return;
    case ColorName::purple: out[0] = 128; out[1] = 0; out[2] = 128; return;
    case ColorName::cyan: out[0] = 0; out[1] = 255; out[2] = 255; return;
  }
  throw std::invalid_argument("unknown color");
}

// ---------------------------------------------------------------------------
// Vocabulary: ids are assigned in a fixed order so they stay stable across
// dataset builds — colors, shapes, the four halves, then "object".
// ---------------------------------------------------------------------------

struct Vocabulary {
  std::vector<std::string> words;

  int id_of(const std::string& w) const {
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (words[i] == w) return int(i);
    }
    throw std::invalid_argument("word not in vocabulary: " + w);
  }
  int size() const { return int(words.size()); }

  static Vocabulary standard() {
    Vocabulary v;
    for (int c = 0; c < kNumColors; ++c) v.words.push_back(color_word(ColorName(c)));
    for (int s = 0; s < kNumShapes; ++s) v.words.push_back(shape_word(ShapeKind(s)));
    v.words.insert(v.words.end(), {"left", "right", "top", "bottom", "object"});
    return v;
  }
};

// ---------------------------------------------------------------------------
// Scenes.
// ---------------------------------------------------------------------------

struct ObjectSpec {
  ShapeKind shape = ShapeKind::square;
  ColorName color = ColorName::red;
  int center_row = 0;
  int center_col = 0;
  int size = kMinObjectSize;  // square side / disc diameter / triangle height
};

struct SceneSpec {
  int height = kImageSize;
  int width = kImageSize;
  std::vector<ObjectSpec> objects;
};

inline BitMask rasterize_square(int H, int W, int cr, int cc, int size) {
  BitMask m(H, W);
  const int r0 = cr - size / 2, c0 = cc - size / 2;
  for (int r = std::max(0, r0); r < std::min(H, r0 + size); ++r) {
    for (int c = std::max(0, c0); c < std::min(W, c0 + size); ++c) m.set(r, c);
  }
  return m;
}

/// Disc of radius size/2 (boundary pixels included).
inline BitMask rasterize_disc(int H, int W, int cr, int cc, int size) {
  BitMask m(H, W);
  const double rad = double(size) / 2.0;
  const double r2 = rad * rad;
  const int lo = int(std::floor(-rad)), hi = int(std::ceil(rad));
  for (int dr = lo; dr <= hi; ++dr) {
    for (int dc = lo; dc <= hi; ++dc) {
      if (double(dr) * dr + double(dc) * dc > r2) continue;
      const int r = cr + dr, c = cc + dc;
      if (r >= 0 && r < H && c >= 0 && c < W) m.set(r, c);
    }
  }
  return m;
}

/// Upward isoceles triangle: apex at the top, each side widens one pixel
/// every other row, base width ~= size.
inline BitMask rasterize_triangle(int H, int W, int cr, int cc, int size) {
  BitMask m(H, W);
  const int r0 = cr - size / 2;
  for (int k = 0; k < size; ++k) {
    const int r = r0 + k;
    if (r < 0 || r >= H) continue;
    const int half = k / 2;
    for (int c = std::max(0, cc - half); c <= std::min(W - 1, cc + half); ++c) m.set(r, c);
  }
  return m;
}

inline BitMask rasterize_object(const ObjectSpec& o, int H, int W) {
  switch (o.shape) {
    case ShapeKind::square: return rasterize_square(H, W, o.center_row, o.center_col, o.size);
    case ShapeKind::disc: return rasterize_disc(H, W, o.center_row, o.center_col, o.size);
    case ShapeKind::triangle:
      return rasterize_triangle(H, W, o.center_row, o.center_col, o.size);
  }
  throw std::invalid_argument("unknown shape");
}

/// Rejection-samples object placements until the scene is overlap-free.
/// Colors are drawn without replacement so every scene color is unique.
/// Draw order per scene: object count, color shuffle, then per object
/// shape, size, and center retries.
inline SceneSpec generate_scene(Rng& rng, int height = kImageSize, int width = kImageSize) {
  SceneSpec scene;
  scene.height = height;
  scene.width = width;
  const int n = rng.uniform_int(kMinObjects, kMaxObjects);

  int palette[kNumColors];
  for (int i = 0; i < kNumColors; ++i) palette[i] = i;
  for (int i = 0; i < n; ++i) {  // partial Fisher-Yates: first n entries
    const int j = rng.uniform_int(i, kNumColors - 1);
    std::swap(palette[i], palette[j]);
  }

  std::vector<BitMask> placed;
  for (int i = 0; i < n; ++i) {
    ObjectSpec o;
    o.shape = ShapeKind(rng.uniform_int(0, kNumShapes - 1));
    o.color = ColorName(palette[i]);
    o.size = rng.uniform_int(kMinObjectSize, kMaxObjectSize);
    const int margin = o.size / 2 + 1;
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      o.center_row = rng.uniform_int(margin, height - 1 - margin);
      o.center_col = rng.uniform_int(margin, width - 1 - margin);
      BitMask m = rasterize_object(o, height, width);
      ok = true;
      for (const BitMask& other : placed) {
        long long overlap = 0;
        for (std::size_t k = 0; k < m.bits.size(); ++k) overlap += m.bits[k] & other.bits[k];
        if (overlap > 0) {
          ok = false;
          break;
        }
      }
      if (ok) placed.push_back(std::move(m));
    }
    if (!ok) throw std::runtime_error("generate_scene: placement failed after 1000 retries");
    scene.objects.push_back(o);
  }
  return scene;
}

struct RenderedScene {
  Image image;
  std::vector<BitMask> object_masks;  // parallel to scene.objects
};

inline RenderedScene render(const SceneSpec& scene) {
  RenderedScene out;
  out.image.height = scene.height;
  out.image.width = scene.width;
  out.image.rgb.assign(std::size_t(scene.height) * scene.width * 3, kBackgroundGray);
  for (const ObjectSpec& o : scene.objects) {
    BitMask m = rasterize_object(o, scene.height, scene.width);
    std::uint8_t rgb[3];
    color_rgb(o.color, rgb);
    for (int r = 0; r < scene.height; ++r) {
      for (int c = 0; c < scene.width; ++c) {
        if (!m.test(r, c)) continue;
        std::uint8_t* px = out.image.rgb.data() + (std::size_t(r) * scene.width + c) * 3;
        px[0] = rgb[0];
        px[1] = rgb[1];
        px[2] = rgb[2];
      }
    }
    out.object_masks.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Expressions and weak labels.
// ---------------------------------------------------------------------------

/// Centroid of the set pixels, rounded half away from zero; if the rounded
/// pixel is unset the point snaps to the nearest set pixel (raster order
/// breaking distance ties). The box is the tight half-open bound.
inline std::pair<PixelPoint, PixelBox> derive_weak_labels(const BitMask& mask) {
  long long sum_r = 0, sum_c = 0, count = 0;
  int r0 = mask.height, c0 = mask.width, r1 = -1, c1 = -1;
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (!mask.test(r, c)) continue;
      sum_r += r;
      sum_c += c;
      ++count;
      r0 = std::min(r0, r);
      c0 = std::min(c0, c);
      r1 = std::max(r1, r);
      c1 = std::max(c1, c);
    }
  }
  if (count == 0) throw std::invalid_argument("derive_weak_labels: empty mask");
  PixelPoint p{int(std::llround(double(sum_r) / double(count))),
               int(std::llround(double(sum_c) / double(count)))};
  if (!mask.test(p.row, p.col)) {
    long long best = -1;
    PixelPoint snapped = p;
    for (int r = 0; r < mask.height; ++r) {
      for (int c = 0; c < mask.width; ++c) {
        if (!mask.test(r, c)) continue;
        const long long dr = r - p.row, dc = c - p.col;
        const long long d = dr * dr + dc * dc;
        if (best < 0 || d < best) {
          best = d;
          snapped = {r, c};
        }
      }
    }
    p = snapped;
  }
  return {p, PixelBox{r0, c0, r1 + 1, c1 + 1}};
}

/// True iff the object's snapped centroid lies in the named half of the grid.
inline bool in_half(PixelPoint centroid, const std::string& half, int height, int width) {
  if (half == "left") return centroid.col < width / 2;
  if (half == "right") return centroid.col >= width / 2;
  if (half == "top") return centroid.row < height / 2;
  if (half == "bottom") return centroid.row >= height / 2;
  throw std::invalid_argument("unknown half: " + half);
}

/// "<color> <shape>" or "<color> object <half>"; colors are unique per scene
/// so either template picks out exactly one object. Consumes one rng draw
/// for the template and, for the spatial form, one for the axis.
inline std::vector<int> make_expression(const SceneSpec& scene, int target_index, Rng& rng,
                                        const Vocabulary& vocab) {
  if (target_index < 0 || target_index >= int(scene.objects.size())) {
    throw std::invalid_argument("make_expression: target index out of range");
  }
  const ObjectSpec& o = scene.objects[target_index];
  const int color_id = vocab.id_of(color_word(o.color));
  if (rng.bernoulli(0.5)) {
    return {color_id, vocab.id_of(shape_word(o.shape))};
  }
  const auto [centroid, box] = derive_weak_labels(rasterize_object(o, scene.height, scene.width));
  (void)box;
  std::string half;
  if (rng.bernoulli(0.5)) {
    half = in_half(centroid, "left", scene.height, scene.width) ? "left" : "right";
  } else {
    half = in_half(centroid, "top", scene.height, scene.width) ? "top" : "bottom";
  }
  return {color_id, vocab.id_of("object"), vocab.id_of(half)};
}

/// Audit helper: does this expression describe scene object `index`?
inline bool expression_matches(const std::vector<int>& tokens, const SceneSpec& scene,
                               int index, const Vocabulary& vocab) {
  const ObjectSpec& o = scene.objects[index];
  const auto [centroid, box] =
      derive_weak_labels(rasterize_object(o, scene.height, scene.width));
  (void)box;
  for (const int t : tokens) {
    const std::string& w = vocab.words.at(std::size_t(t));
    bool is_color = false, is_shape = false;
    for (int c = 0; c < kNumColors; ++c) is_color |= w == color_word(ColorName(c));
    for (int s = 0; s < kNumShapes; ++s) is_shape |= w == shape_word(ShapeKind(s));
    if (is_color) {
      if (w != color_word(o.color)) return false;
    } else if (is_shape) {
      if (w != shape_word(o.shape)) return false;
    } else if (w == "object") {
      continue;  // matches any object
    } else {
      if (!in_half(centroid, w, scene.height, scene.width)) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Dataset builds.
// ---------------------------------------------------------------------------

struct SplitConfig {
  int n_train = 2000;
  int n_val = 200;
  int n_test = 200;
  double labeled_fraction = 0.05;
  std::uint64_t seed = 7;

  int n_fully() const { return int(std::lround(labeled_fraction * n_train)); }

  void validate() const {
    if (n_train < 1 || n_val < 1 || n_test < 1) throw ConfigError("split counts must be >= 1");
    if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) {
      throw ConfigError("labeled_fraction must lie in (0,1]");
    }
    if (n_fully() < 1) throw ConfigError("labeled_fraction leaves no fully-labeled records");
  }
};

inline constexpr int kDatasetFormatVersion = 1;

struct Manifest {
  std::uint64_t seed = 0;
  int n_train = 0;
  int n_val = 0;
  int n_test = 0;
  int n_fully = 0;
  int n_omni = 0;
  double labeled_fraction = 0.0;
  std::vector<std::string> vocab;
  int format_version = kDatasetFormatVersion;
  // file name -> FNV-1a hex digest of the file body
  std::vector<std::pair<std::string, std::string>> digests;
};

inline nlohmann::ordered_json manifest_to_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["seed"] = m.seed;
  j["counts"] = {{"n_train", m.n_train},
                 {"n_val", m.n_val},
                 {"n_test", m.n_test},
                 {"n_fully", m.n_fully},
                 {"n_omni", m.n_omni}};
  j["labeled_fraction"] = m.labeled_fraction;
  j["vocab"] = m.vocab;
  j["format_version"] = m.format_version;
  nlohmann::ordered_json digests;
  for (const auto& [file, digest] : m.digests) digests[file] = digest;
  j["digests"] = digests;
  return j;
}

inline Manifest manifest_from_json(const nlohmann::ordered_json& j) {
  Manifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    m.n_train = j.at("counts").at("n_train").get<int>();
    m.n_val = j.at("counts").at("n_val").get<int>();
    m.n_test = j.at("counts").at("n_test").get<int>();
    m.n_fully = j.at("counts").at("n_fully").get<int>();
    m.n_omni = j.at("counts").at("n_omni").get<int>();
    m.labeled_fraction = j.at("labeled_fraction").get<double>();
    m.vocab = j.at("vocab").get<std::vector<std::string>>();
    m.format_version = j.at("format_version").get<int>();
    for (const auto& [file, digest] : j.at("digests").items()) {
      m.digests.emplace_back(file, digest.get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  if (m.format_version != kDatasetFormatVersion) {
    throw FormatError("unsupported dataset format_version");
  }
  return m;
}

inline Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("corrupt manifest " + path + ": " + e.what());
  }
  return manifest_from_json(j);
}

/// One benchmark record from its own derived rng stream, so records can be
/// generated in any order (or in parallel) without changing content.
inline DatasetRecord generate_record(int id, std::uint64_t master_seed,
                                     const Vocabulary& vocab) {
  Rng rng(derive_seed(master_seed, std::uint64_t(id)));
  const SceneSpec scene = generate_scene(rng);
  const int target = rng.uniform_int(0, int(scene.objects.size()) - 1);
  DatasetRecord r;
  r.id = id;
  r.tokens = make_expression(scene, target, rng, vocab);
  RenderedScene rendered = render(scene);
  r.image = std::move(rendered.image);
  r.mask = std::move(rendered.object_masks[target]);
  std::tie(r.point, r.box) = derive_weak_labels(r.mask);
  return r;
}

/// Builds train/val/test JSONL files plus a manifest under out_dir. The
/// first n_fully train records in shuffled order are tagged `fully`, the
/// rest `omni`; files are byte-identical across runs with the same config.
inline Manifest build_dataset(const SplitConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const Vocabulary vocab = Vocabulary::standard();
  const int total = cfg.n_train + cfg.n_val + cfg.n_test;

  std::vector<DatasetRecord> train, val, test;
  train.reserve(cfg.n_train);
  val.reserve(cfg.n_val);
  test.reserve(cfg.n_test);
  for (int id = 0; id < total; ++id) {
    DatasetRecord r = generate_record(id, cfg.seed, vocab);
    if (id < cfg.n_train) {
      train.push_back(std::move(r));
    } else if (id < cfg.n_train + cfg.n_val) {
      r.split = Split::val;
      val.push_back(std::move(r));
    } else {
      r.split = Split::test;
      test.push_back(std::move(r));
    }
  }

  // Fully/omni assignment: Fisher-Yates shuffle on a dedicated stream, the
  // first n_fully shuffled positions become the fully-labeled set.
  std::vector<int> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  Rng shuffle_rng(derive_seed(cfg.seed, std::uint64_t(total)));
  for (int i = int(order.size()) - 1; i > 0; --i) {
    std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);
  }
  const int n_fully = cfg.n_fully();
  for (std::size_t i = 0; i < order.size(); ++i) {
    train[order[i]].split = i < std::size_t(n_fully) ? Split::fully : Split::omni;
  }

  std::filesystem::create_directories(out_dir);
  Manifest m;
  m.seed = cfg.seed;
  m.n_train = cfg.n_train;
  m.n_val = cfg.n_val;
  m.n_test = cfg.n_test;
  m.n_fully = n_fully;
  m.n_omni = cfg.n_train - n_fully;
  m.labeled_fraction = cfg.labeled_fraction;
  m.vocab = vocab.words;

  const std::pair<const char*, const std::vector<DatasetRecord>*> files[] = {
      {"train.jsonl", &train}, {"val.jsonl", &val}, {"test.jsonl", &test}};
  for (const auto& [name, records] : files) {
    const std::string body = records_to_jsonl(*records);
    const std::string path = (std::filesystem::path(out_dir) / name).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open dataset file for writing: " + path);
    out << body;
    if (!out) throw IoError("failed writing dataset file: " + path);
    m.digests.emplace_back(name, to_hex(fnv1a64(body)));
  }

  const std::string manifest_path = (std::filesystem::path(out_dir) / "manifest.json").string();
  std::ofstream mout(manifest_path);
  if (!mout) throw IoError("cannot open manifest for writing: " + manifest_path);
  mout << manifest_to_json(m).dump(2) << "\n";
  if (!mout) throw IoError("failed writing manifest: " + manifest_path);
  return m;
}

}  // namespace omniseg
