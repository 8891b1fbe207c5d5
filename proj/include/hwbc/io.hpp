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

// JSON/file helpers shared by the schema loaders. Every file written by this
// library carries "schema": "hwbc.<kind>/<major>"; readers accept a missing
// tag (hand-written inputs) but reject a different kind or major.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hwbc/core.hpp"

namespace hwbc::io {

using Json = nlohmann::json;

inline constexpr int kSchemaMajor = 1;

inline std::string schema_tag(const std::string& kind) {
  return "hwbc." + kind + "/" + std::to_string(kSchemaMajor);
}

inline void check_schema(const Json& j, const std::string& kind) {
  if (!j.is_object() || !j.contains("schema")) return;
  const std::string tag = j.at("schema").get<std::string>();
  const std::string prefix = "hwbc." + kind + "/";
  if (tag.rfind(prefix, 0) != 0)
    throw InputError("expected schema '" + prefix + "*', got '" + tag + "'");
  const std::string ver = tag.substr(prefix.size());
  const std::string major = ver.substr(0, ver.find('.'));
  if (major != std::to_string(kSchemaMajor))
    throw InputError("unsupported schema major version in '" + tag + "'");
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
  if (!out) throw InputError("write failed for '" + path + "'");
}

inline Json parse_json(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw InputError(origin + ": " + e.what());
  }
}

inline Json read_json(const std::string& path) {
  return parse_json(read_text(path), path);
}

inline void write_json(const std::string& path, const Json& j) {
  write_text(path, j.dump(2) + "\n");
}

// Field access that reports the missing key instead of a bare json error.
inline const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw InputError(std::string("missing field '") + key + "'");
  return j.at(key);
}

template <typename T>
T get(const Json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const Json::exception& e) {
    throw InputError(std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get<T>(j, key);
}

inline Vec3 to_vec3(const Json& j) {
  if (!j.is_array() || j.size() != 3)
    throw InputError("expected a 3-element array");
  Vec3 v;
  for (int i = 0; i < 3; ++i) v[i] = j.at(i).get<double>();
  return v;
}

inline Json from_vec3(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Vector to_vector(const Json& j) {
  if (!j.is_array()) throw InputError("expected a numeric array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

inline Json from_vector(const Eigen::Ref<const Vector>& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

// Row-major nested arrays.
inline Matrix to_matrix(const Json& j, Eigen::Index cols) {
  if (!j.is_array()) throw InputError("expected an array of rows");
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != cols)
      throw InputError("row " + std::to_string(r) + " has wrong length");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

inline Json from_matrix(const Eigen::Ref<const Matrix>& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(std::move(row));
  }
  return a;
}

inline Mat3 to_mat3(const Json& j) {
  const Matrix m = to_matrix(j, 3);
  if (m.rows() != 3) throw InputError("expected a 3x3 matrix");
  return m;
}

// Shortest round-trip decimal form, for CSV output.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string hex64(std::uint64_t h) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

}  // namespace hwbc::io
