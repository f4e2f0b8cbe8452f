// Copyright 2026 The fdasim Authors.
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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "fdasim/errors.hpp"
#include "fdasim/model.hpp"

namespace fdasim {

// Dataset document:
//   {"name", "kind": "regression"|"classification", "input_dim", "output_dim",
//    "inputs": [row-major numbers], "targets": [numbers]}
inline nlohmann::json dataset_to_json(const Dataset& d) {
  nlohmann::json j;
  j["name"] = d.name;
  j["kind"] = to_string(d.kind);
  j["input_dim"] = d.input_dim;
  j["output_dim"] = d.output_dim;
  j["inputs"] = d.inputs;
  if (d.kind == TaskKind::classification) {
    auto& t = j["targets"] = nlohmann::json::array();
    for (double v : d.targets) t.push_back(static_cast<long long>(v));
  } else {
    j["targets"] = d.targets;
  }
  return j;
}

inline Dataset dataset_from_json(const nlohmann::json& j) {
  auto field = [&j](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw ConfigError(std::string("dataset: missing field '") + key + "'");
    return j.at(key);
  };
  Dataset d;
  try {
    d.name = field("name").get<std::string>();
    const auto kind = field("kind").get<std::string>();
    if (kind == "regression") {
      d.kind = TaskKind::regression;
    } else if (kind == "classification") {
      d.kind = TaskKind::classification;
    } else {
      throw ConfigError("dataset: field 'kind' must be regression or classification");
    }
    d.input_dim = field("input_dim").get<std::size_t>();
    d.output_dim = field("output_dim").get<std::size_t>();
    d.inputs = field("inputs").get<std::vector<double>>();
    d.targets = field("targets").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset: ") + e.what());
  }
  try {
    d.validate();
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
  return d;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

inline nlohmann::json parse_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // byte offset -> line number for the diagnostic
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i)
      if (text[i] == '\n') ++line;
    throw ConfigError(path.string() + ":" + std::to_string(line) + ": " + e.what());
  }
}

inline void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  write_text_file(path, dataset_to_json(d).dump() + "\n");
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  try {
    return dataset_from_json(parse_json_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace fdasim
