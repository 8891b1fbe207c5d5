// Copyright 2026 The hwbc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Bag-of-tokens text embedding and the "<command>: <seconds>" script format.
//
// Tokens are lowercased alphanumeric runs. Each token is hashed with 64-bit
// FNV-1a; the hash selects a row of a seeded random table and the rows are
// summed and L2-normalized. Word order is ignored.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hwbc/core.hpp"
#include "hwbc/error.hpp"

namespace hwbc {

inline constexpr int kTextDim = 512;

using TextEmbedding = Vector;

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

class TextEncoder {
 public:
  static constexpr std::uint64_t kDefaultSeed = 0x5eed7e47ULL;
  static constexpr int kDefaultRows = 4096;

  explicit TextEncoder(std::uint64_t seed = kDefaultSeed, int rows = kDefaultRows,
                       int dim = kTextDim)
      : seed_(seed) {
    require(rows >= 1 && dim >= 1, "TextEncoder: table dimensions must be positive");
    Rng rng(seed);
    table_.resize(rows, dim);
    // Row-major fill so the table does not depend on Eigen's storage order.
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < dim; ++c) table_(r, c) = rng.uniform(-1.0, 1.0);
  }

  int dim() const { return static_cast<int>(table_.cols()); }
  std::uint64_t seed() const { return seed_; }

  std::size_t row_of(std::string_view token) const {
    return static_cast<std::size_t>(fnv1a64(token) % static_cast<std::uint64_t>(table_.rows()));
  }

  TextEmbedding embed(std::string_view text) const {
    const auto tokens = tokenize(text);
    require(!tokens.empty(), "embed_text: text has no tokens");
    Vector v = Vector::Zero(dim());
    for (const auto& t : tokens) v += table_.row(static_cast<Eigen::Index>(row_of(t))).transpose();
    const double norm = v.norm();
    // Only reachable if token rows cancel exactly.
    if (!(norm > 0.0)) throw NumericalError("embed_text: zero embedding");
    return v / norm;
  }

 private:
  std::uint64_t seed_;
  Matrix table_;
};

inline const TextEncoder& default_text_encoder() {
  static const TextEncoder encoder;
  return encoder;
}

inline TextEmbedding embed_text(std::string_view text) {
  return default_text_encoder().embed(text);
}

inline double similarity(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  require(a.size() == b.size(), "similarity: dimension mismatch");
  const double na = a.norm(), nb = b.norm();
  require(na > 0.0 && nb > 0.0, "similarity: zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

// Re-embeds only when the command text changes.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(const TextEncoder& encoder = default_text_encoder())
      : encoder_(&encoder) {}

  const TextEmbedding& get(const std::string& text) {
    if (!valid_ || text != text_) {
      value_ = encoder_->embed(text);
      text_ = text;
      valid_ = true;
      ++misses_;
    }
    return value_;
  }

  int misses() const { return misses_; }

 private:
  const TextEncoder* encoder_;
  std::string text_;
  TextEmbedding value_;
  bool valid_ = false;
  int misses_ = 0;
};

struct ScriptCommand {
  std::string text;
  double duration = 0.0;  // s
};

using CommandScript = std::vector<ScriptCommand>;

inline std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

// One "<command>: <seconds>" per line. The last ':' separates the duration so
// commands may contain colons. Blank lines and '#' comments are skipped.
inline CommandScript parse_script(std::string_view text) {
  CommandScript script;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto colon = line.rfind(':');
    if (colon == std::string_view::npos)
      throw ParseError(line_no, "expected '<command>: <seconds>'");
    const std::string_view command = trim(line.substr(0, colon));
    const std::string_view number = trim(line.substr(colon + 1));
    if (command.empty()) throw ParseError(line_no, "empty command text");
    double duration = 0.0;
    const auto [ptr, ec] =
        std::from_chars(number.data(), number.data() + number.size(), duration);
    if (number.empty() || ec != std::errc() || ptr != number.data() + number.size())
      throw ParseError(line_no, "duration '" + std::string(number) + "' is not a number");
    if (!std::isfinite(duration) || duration <= 0.0)
      throw InputError("line " + std::to_string(line_no) +
                       ": duration must be positive and finite");
    script.push_back({std::string(command), duration});
    if (end == text.size()) break;
  }
  return script;
}

inline double script_duration(const CommandScript& script) {
  double total = 0.0;
  for (const auto& c : script) total += c.duration;
  return total;
}

}  // namespace hwbc
