#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "omniseg/aplr.hpp"
#include "omniseg/image.hpp"
#include "omniseg/mask.hpp"
#include "omniseg/util.hpp"

namespace omniseg {

// ---------------------------------------------------------------------------
// Benchmark records and their JSON-lines serialization. One record = one
// image + one referring expression + the full mask + the derived weak labels.
// ---------------------------------------------------------------------------

inline constexpr int kImageSize = 64;  // records are fixed 64x64 RGB

enum class Split { fully, omni, val, test };

inline std::string split_name(Split s) {
  switch (s) {
    case Split::fully: return "fully";
    case Split::omni: return "omni";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  throw std::invalid_argument("unknown split");
}

inline Split split_from_name(const std::string& s) {
  if (s == "fully") return Split::fully;
  if (s == "omni") return Split::omni;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw FormatError("unknown split tag: " + s);
}

struct DatasetRecord {
  int id = 0;
  Image image;             // kImageSize x kImageSize x 3 bytes
  std::vector<int> tokens; // referring expression, vocabulary ids
  BitMask mask;            // full ground-truth mask y^f
  PixelPoint point;        // weak label: snapped centroid
  PixelBox box;            // weak label: tight bounding box
  Split split = Split::fully;
};

/// The weak label a record exposes under a given supervision mode.
inline OmniLabel omni_label_for(const DatasetRecord& r, LabelKind kind) {
  switch (kind) {
    case LabelKind::none: return OmniLabel::none();
    case LabelKind::point: return OmniLabel::of_point(r.point);
    case LabelKind::box: return OmniLabel::of_box(r.box);
  }
  throw std::invalid_argument("unknown label kind");
}

// ---------------------------------------------------------------------------
// Record <-> JSON.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json record_to_json(const DatasetRecord& r) {
  if (r.image.height != kImageSize || r.image.width != kImageSize ||
      r.mask.height != kImageSize || r.mask.width != kImageSize) {
    throw std::invalid_argument("record image/mask must be " + std::to_string(kImageSize) +
                                "x" + std::to_string(kImageSize));
  }
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["image_b64"] = base64_encode(r.image.rgb);
  j["tokens"] = r.tokens;
  j["mask_rle"] = rle_encode(r.mask);
  j["point"] = {r.point.row, r.point.col};
  j["box"] = {r.box.row0, r.box.col0, r.box.row1, r.box.col1};
  j["split"] = split_name(r.split);
  return j;
}

inline DatasetRecord record_from_json(const nlohmann::json& j) {
  for (const char* key : {"id", "image_b64", "tokens", "mask_rle", "point", "box", "split"}) {
    if (!j.contains(key)) throw FormatError(std::string("record missing field ") + key);
  }
  DatasetRecord r;
  try {
    r.id = j["id"].get<int>();
    r.image.height = kImageSize;
    r.image.width = kImageSize;
    r.image.rgb = base64_decode(j["image_b64"].get<std::string>());
    r.tokens = j["tokens"].get<std::vector<int>>();
    r.mask = rle_decode(j["mask_rle"].get<std::string>(), kImageSize, kImageSize);
    const auto& pt = j["point"];
    const auto& bx = j["box"];
    if (!pt.is_array() || pt.size() != 2 || !bx.is_array() || bx.size() != 4) {
      throw FormatError("record point/box have wrong arity");
    }
    r.point = {pt[0].get<int>(), pt[1].get<int>()};
    r.box = {bx[0].get<int>(), bx[1].get<int>(), bx[2].get<int>(), bx[3].get<int>()};
    r.split = split_from_name(j["split"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed record: ") + e.what());
  }
  if (r.image.rgb.size() != std::size_t(kImageSize) * kImageSize * 3) {
    throw FormatError("record image has wrong byte count");
  }
  check_point_in_bounds(r.point, kImageSize, kImageSize);
  check_box_in_bounds(r.box, kImageSize, kImageSize);
  return r;
}

// ---------------------------------------------------------------------------
// JSONL files.
// ---------------------------------------------------------------------------

/// Serializes records one-per-line; returned string is the exact file body
/// (callers digest it before writing).
inline std::string records_to_jsonl(const std::vector<DatasetRecord>& records) {
  std::string out;
  for (const DatasetRecord& r : records) {
    out += record_to_json(r).dump();
    out.push_back('\n');
  }
  return out;
}

inline void write_jsonl(const std::vector<DatasetRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open dataset file for writing: " + path);
  out << records_to_jsonl(records);
  if (!out) throw IoError("failed writing dataset file: " + path);
}

inline std::vector<DatasetRecord> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file: " + path);
  std::vector<DatasetRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    records.push_back(record_from_json(j));
  }
  return records;
}

/// Structural + semantic invariants every benchmark record must satisfy:
/// the point sits on the mask and the box is the tight bounding box.
inline void validate_record(const DatasetRecord& r) {
  if (r.mask.empty()) throw FormatError("record " + std::to_string(r.id) + ": empty mask");
  if (!contains_point(r.mask, r.point)) {
    throw FormatError("record " + std::to_string(r.id) + ": point off the mask");
  }
  int r0 = r.mask.height, c0 = r.mask.width, r1 = -1, c1 = -1;
  for (int row = 0; row < r.mask.height; ++row) {
    for (int col = 0; col < r.mask.width; ++col) {
      if (!r.mask.test(row, col)) continue;
      r0 = std::min(r0, row);
      c0 = std::min(c0, col);
      r1 = std::max(r1, row);
      c1 = std::max(c1, col);
    }
  }
  const PixelBox tight{r0, c0, r1 + 1, c1 + 1};
  if (!(tight == r.box)) {
    throw FormatError("record " + std::to_string(r.id) + ": box is not tight");
  }
}

}  // namespace omniseg
