#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "premise/corpus.hpp"
#include "premise/model.hpp"
#include "premise/train.hpp"

namespace premise {

// Everything a CLI run needs. Serialized as flat `key=value` lines.
struct RunConfig {
  std::string dataset_dir = "data";
  std::string embedding_file;  // empty: random initialization
  std::string output_dir = "out";

  ModelConfig model;
  bool centers_auto = true;  // C = ceil(sqrt(K))
  TrainConfig train;
  GeneratorSpec generator;
  double train_fraction = 0.7;
  double dev_fraction = 0.15;

  std::string bench_lengths = "50,100,200";
  double bench_k = 10;
  int bench_intervals = 5;
  int bench_iterations = 100;

  RunConfig();

  // Applies C=auto and mirrors shared keys; call after edits.
  void resolve();
  void validate() const;
  int effective_centers() const;

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  std::string emit() const;
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace premise
