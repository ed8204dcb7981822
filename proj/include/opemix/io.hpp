// Copyright 2026 The ope-mix Authors.
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

#ifndef OPEMIX_IO_HPP
#define OPEMIX_IO_HPP

#include <opemix/core.hpp>
#include <opemix/linalg.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_map>

/**
 * \file
 * \brief JSON Lines trajectory files.
 *
 * One trajectory per line:
 * `{"policy_id": "p3", "steps": [{"obs": {...}, "action": 17, "reward": 1.42, "behavior_prob": 0.031}, ...]}`
 */

namespace opemix {

inline nlohmann::json to_json(const Matrix& m) {
  auto out = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) {
      row.push_back(m(r, c));
    }
    out.push_back(std::move(row));
  }
  return out;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const std::size_t rows = j.size();
  const std::size_t cols = rows == 0 ? 0 : j.at(0).size();
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j.at(r).size() != cols) {
      throw ValidationError("ragged matrix in JSON");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      m(r, c) = j.at(r).at(c).get<double>();
    }
  }
  return m;
}

inline nlohmann::json to_json(const Observation& obs) {
  auto out = nlohmann::json::object();
  for (const auto& [key, value] : obs.features()) {
    std::visit([&, &k = key](const auto& v) { out[k] = v; }, value);
  }
  return out;
}

inline Observation observation_from_json(const nlohmann::json& j) {
  if (!j.is_object()) {
    throw ValidationError("obs must be an object");
  }
  Observation obs;
  for (const auto& [key, value] : j.items()) {
    if (value.is_number()) {
      obs.set(key, value.get<double>());
    } else if (value.is_array()) {
      obs.set(key, value.get<std::vector<double>>());
    } else {
      throw ValidationError("obs feature '" + key + "' must be a number or an array of numbers");
    }
  }
  return obs;
}

inline nlohmann::json to_json(const Trajectory& traj, const std::string& policy_id) {
  auto steps = nlohmann::json::array();
  for (const auto& s : traj.steps) {
    steps.push_back({{"obs", to_json(s.obs)},
                     {"action", s.action},
                     {"reward", s.reward},
                     {"behavior_prob", s.behavior_prob}});
  }
  return {{"policy_id", policy_id}, {"steps", std::move(steps)}};
}

/// Reads a multi-policy dataset; policies appear in order of first occurrence.
inline MultiDataset read_multidataset(std::istream& in) {
  MultiDataset out;
  std::unordered_map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    std::string policy_id;
    Trajectory traj;
    try {
      const auto rec = nlohmann::json::parse(line);
      policy_id = rec.at("policy_id").get<std::string>();
      const auto& steps = rec.at("steps");
      if (!steps.is_array() || steps.empty()) {
        throw ParseError(line_no, "trajectory must have at least one step");
      }
      for (const auto& s : steps) {
        Step step;
        step.obs = observation_from_json(s.at("obs"));
        step.action = s.at("action").get<std::size_t>();
        step.reward = s.at("reward").get<double>();
        step.behavior_prob = s.at("behavior_prob").get<double>();
        if (!(step.behavior_prob > 0.0) || step.behavior_prob > 1.0) {
          throw ValidationError("line " + std::to_string(line_no) +
                                ": support assumption violated, behavior_prob must lie in (0, 1]");
        }
        traj.steps.push_back(std::move(step));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    }
    auto [it, inserted] = index.try_emplace(policy_id, out.datasets.size());
    if (inserted) {
      out.datasets.push_back({policy_id, {}});
    }
    out.datasets[it->second].trajectories.push_back(std::move(traj));
  }
  if (out.datasets.empty()) {
    throw ParseError(0, "no trajectories");
  }
  return out;
}

inline MultiDataset load_multidataset(const std::filesystem::path& path) {
  std::ifstream in{path};
  if (!in) {
    throw ParseError(0, "cannot open " + path.string());
  }
  return read_multidataset(in);
}

inline void write_multidataset(std::ostream& out, const MultiDataset& ds) {
  for (const auto& d : ds.datasets) {
    for (const auto& traj : d.trajectories) {
      out << to_json(traj, d.policy_id).dump() << '\n';
    }
  }
}

inline void save_multidataset(const std::filesystem::path& path, const MultiDataset& ds) {
  std::ofstream out{path};
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  write_multidataset(out, ds);
}

}  // namespace opemix

#endif  // OPEMIX_IO_HPP
