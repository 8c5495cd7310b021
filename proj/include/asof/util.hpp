#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace asof {

/// 64-bit FNV-1a. Stable across platforms; used for transcript ids,
/// fingerprints and stable pair ids.
class Fnv1a {
 public:
  Fnv1a& add(std::string_view bytes);
  /// Length-prefixed field so that ("ab","c") and ("a","bc") differ.
  Fnv1a& field(std::string_view bytes);
  Fnv1a& add_u64(std::uint64_t v);
  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hex64(std::uint64_t v);

std::string trim(std::string_view s);
/// Collapses runs of whitespace into one space and trims both ends.
std::string normalize_whitespace(std::string_view s);
std::string ascii_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// Number of UTF-8 code points.
std::size_t utf8_length(std::string_view s);
/// Truncate to at most `max_chars` code points without splitting a sequence.
std::string utf8_truncate(std::string_view s, std::size_t max_chars);

/// Replace `{name}` placeholders. Unknown placeholders are left untouched.
std::string render_template(std::string_view tmpl,
                            std::initializer_list<std::pair<std::string_view, std::string_view>> vars);

std::string read_file(const std::filesystem::path& path);
/// Write via a sibling temp file and rename, so readers never see a torn file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
/// Calls `fn(line, line_number)` for every non-blank line (1-based numbering).
void for_each_line(std::string_view text, const std::function<void(std::string_view, std::size_t)>& fn);

/// SplitMix64: tiny, fully specified PRNG used wherever sampling must be
/// reproducible across standard library implementations.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  /// Uniform in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) { return next() % n; }
  /// Uniform in [0, 1) with 53 bits.
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

}  // namespace asof
