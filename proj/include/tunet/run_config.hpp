#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tunet/model.hpp"
#include "tunet/optimizer.hpp"

namespace tunet {

enum class Task { detect, classify };

std::string to_string(Task task);

// Everything one command needs, resolved from a key=value file and then
// command-line overrides (later assignments win).
struct RunConfig {
  TUnetConfig model;
  TrainConfig train;
  Task task = Task::detect;
  int cls = 6;  // gesture classes; classify uses cls + 1 outputs
  bool normalize = true;

  std::filesystem::path data;        // dataset manifest
  std::filesystem::path out = "run";
  std::filesystem::path checkpoint;  // eval / predict input
  std::filesystem::path series;      // predict input
  std::filesystem::path labels;      // optional truth labels for predict
  std::string eval_split = "test";

  std::size_t synth_train = 64;
  std::size_t synth_test = 16;
  double synth_noise = 0.3;

  std::vector<double> ap_thresholds{0.5, 0.6, 0.7, 0.8, 0.9};

  // Throws ConfigError for unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  void apply_file(const std::filesystem::path& path);

  // Derives num_classes from the task and validates everything.
  void finalize();

  // Resolved configuration in a stable key order, re-readable by apply_file.
  std::vector<std::pair<std::string, std::string>> entries() const;
};

}  // namespace tunet
