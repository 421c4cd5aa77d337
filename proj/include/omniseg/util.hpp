#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace omniseg {

// ---------------------------------------------------------------------------
// Logging. Level comes from OMNI_SEG_LOG (quiet|info|debug), default info.
// ---------------------------------------------------------------------------

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("OMNI_SEG_LOG");
    if (env == nullptr) return LogLevel::info;
    const std::string_view v{env};
    if (v == "quiet") return LogLevel::quiet;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::info;
  }();
  return level;
}

inline void log_info(const std::string& msg) {
  if (static_cast<int>(log_level()) >= static_cast<int>(LogLevel::info)) {
    std::fprintf(stderr, "[omniseg] %s\n", msg.c_str());
  }
}

inline void log_debug(const std::string& msg) {
  if (static_cast<int>(log_level()) >= static_cast<int>(LogLevel::debug)) {
    std::fprintf(stderr, "[omniseg] %s\n", msg.c_str());
  }
}

// ---------------------------------------------------------------------------
// Error taxonomy. IO and config problems map to exit code 2 in the CLI,
// everything else to 1.
// ---------------------------------------------------------------------------

/// Missing or unreadable/unwritable file.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Structurally broken input (bad JSON, bad RLE string, truncated file).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or flag combination.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf where a finite number is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Well-formed data whose shape disagrees with what the caller expects.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Base64 (standard alphabet, '=' padding).
// ---------------------------------------------------------------------------

inline std::string base64_encode(const std::uint8_t* bytes, std::size_t n) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= n; i += 3) {
    const std::uint32_t v = (std::uint32_t(bytes[i]) << 16) |
                            (std::uint32_t(bytes[i + 1]) << 8) |
                            std::uint32_t(bytes[i + 2]);
    out.push_back(kAlphabet[(v >> 18) & 0x3f]);
    out.push_back(kAlphabet[(v >> 12) & 0x3f]);
    out.push_back(kAlphabet[(v >> 6) & 0x3f]);
    out.push_back(kAlphabet[v & 0x3f]);
  }
  const std::size_t rest = n - i;
  if (rest == 1) {
    const std::uint32_t v = std::uint32_t(bytes[i]) << 16;
    out.push_back(kAlphabet[(v >> 18) & 0x3f]);
    out.push_back(kAlphabet[(v >> 12) & 0x3f]);
    out.push_back('=');
    out.push_back('=');
  } else if (rest == 2) {
    const std::uint32_t v =
        (std::uint32_t(bytes[i]) << 16) | (std::uint32_t(bytes[i + 1]) << 8);
    out.push_back(kAlphabet[(v >> 18) & 0x3f]);
    out.push_back(kAlphabet[(v >> 12) & 0x3f]);
    out.push_back(kAlphabet[(v >> 6) & 0x3f]);
    out.push_back('=');
  }
  return out;
}

inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  return base64_encode(bytes.data(), bytes.size());
}

inline std::vector<std::uint8_t> base64_decode(std::string_view s) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (s.size() % 4 != 0) throw FormatError("base64: length not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(s.size() / 4 * 3);
  for (std::size_t i = 0; i < s.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = s[i + k];
      if (c == '=') {
        if (i + 4 != s.size() || k < 2) throw FormatError("base64: stray padding");
        vals[k] = 0;
        ++pad;
      } else {
        if (pad > 0) throw FormatError("base64: data after padding");
        vals[k] = value_of(c);
        if (vals[k] < 0) throw FormatError("base64: invalid character");
      }
    }
    const std::uint32_t v = (std::uint32_t(vals[0]) << 18) |
                            (std::uint32_t(vals[1]) << 12) |
                            (std::uint32_t(vals[2]) << 6) | std::uint32_t(vals[3]);
    out.push_back(std::uint8_t((v >> 16) & 0xff));
    if (pad < 2) out.push_back(std::uint8_t((v >> 8) & 0xff));
    if (pad < 1) out.push_back(std::uint8_t(v & 0xff));
  }
  return out;
}

// ---------------------------------------------------------------------------
// FNV-1a 64-bit, used for dataset/manifest content digests.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const char c : bytes) {
    h ^= std::uint8_t(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

/// Shortest decimal string that parses back to exactly this double; used for
/// CSV cells so logs are reproducible byte for byte.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::string out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return out;
}

inline void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out.write(content.data(), std::streamsize(content.size()));
  if (!out) throw IoError("failed writing file: " + path);
}

}  // namespace omniseg
