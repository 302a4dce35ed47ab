#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "premise/bench.hpp"
#include "premise/config.hpp"
#include "premise/eval.hpp"
#include "premise/train.hpp"

namespace premise {

// Thin compositions of the library used by the `premise` tool. Each writes its
// artifacts under the configured directories and narrates to `log`.

// Writes <dataset_dir>/{train,dev,test}.jsonl.
DatasetSplits cmd_generate(const RunConfig& config, std::ostream& log);
DatasetSplits load_splits(const RunConfig& config);

// Fresh model for the config; loads the embedding file when one is set.
Model build_model(const RunConfig& config);

// Writes <output_dir>/model.ckpt, train_log.csv and config.txt.
TrainResult cmd_train(const RunConfig& config, std::ostream& log);

// Scores one split with a checkpoint; writes metrics.csv and metrics.json.
MetricsReport cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint, Split split,
                       std::ostream& log);

struct AblationSetting {
  std::string name;
  KindMask kinds;
};

// The full model followed by the seven masked variants.
std::vector<AblationSetting> ablation_settings();

// Throws InvariantError if any matching row of any pair in `dataset` comes
// from a kind outside the model's mask. Returns the number of rows inspected.
std::size_t check_provenance(const Model& model, const Dataset& dataset);

struct AblationRow {
  AblationSetting setting;
  MetricsReport test;
  std::size_t rows_checked = 0;
};

// One train + test evaluation per setting; writes ablation.csv.
std::vector<AblationRow> cmd_ablate(const RunConfig& config, std::ostream& log);

std::vector<Workload> bench_workloads(const RunConfig& config);
// Analytic and measured costs over the length sweep; writes bench.csv.
std::vector<CostReport> cmd_bench(const RunConfig& config, std::ostream& log);

// "block,row,col,score,selected" for every matching score of one pair.
void cmd_trace(const RunConfig& config, const std::filesystem::path& checkpoint, const std::string& product_id,
               const std::string& review_id, Split split, std::ostream& out);

}  // namespace premise
