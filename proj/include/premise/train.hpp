#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "premise/corpus.hpp"
#include "premise/eval.hpp"
#include "premise/model.hpp"

namespace premise {

// -sum_j softmax(y)_j * log softmax(f)_j, via log-sum-exp.
double listwise_loss(std::span<const double> f, std::span<const double> y);
// d loss / d f = softmax(f) - softmax(y).
std::vector<double> listwise_loss_grad(std::span<const double> f, std::span<const double> y);

struct ListwiseBatchLoss {
  double value = 0.0;  // sum over products
  std::vector<double> per_product;
};

// When `grads` is given, accumulates dL/dparams into it (fault applied).
ListwiseBatchLoss batch_loss(const Model& model, const Batch& batch, ModelParams* grads = nullptr,
                             std::vector<long long>* signature = nullptr);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ModelParams m;
  ModelParams v;
  long long step = 0;

  static AdamState for_params(const ModelParams& params);
};

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const AdamConfig& cfg);

struct TrainConfig {
  AdamConfig adam;
  int batch_size = 8;
  int n_neg = 3;
  int epochs = 30;
  int patience = 5;  // epochs without dev MAP improvement; 0 disables early stopping
  std::uint64_t seed = 7;
  MetricConfig metrics;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;  // mean batch loss
  MetricsReport dev;
};

std::string format_epoch_line(const EpochLog& log);

struct TrainResult {
  Model model;  // best dev-MAP parameters, or the last ones without a dev split
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Each epoch visits every training product once, in B-sized shuffled batches.
TrainResult train(Model model, const Dataset& train_split, const Dataset* dev_split,
                  const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {});

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;  // scaled by max(1, |theta|); extrapolated with step/2
  // Relative error is |a - n| / max(|a|, |n|, floor), where floor is the
  // larger of abs_floor and the loss rounding noise divided by tolerance.
  double abs_floor = 1e-6;
  int max_entries_per_group = 0;  // 0 checks every entry
  std::uint64_t seed = 1;
};

struct GroupReport {
  std::string group;
  double worst_rel_error = 0.0;
  double worst_abs_error = 0.0;
  int checked = 0;
  int skipped = 0;  // perturbation crossed a top-K or refinement boundary
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GroupReport> groups;
  bool passed = true;
  double worst_rel_error = 0.0;

  const GroupReport* find(const std::string& group) const;
  std::vector<std::string> failed_groups() const;
};

GradCheckReport grad_check(const Model& model, const Batch& batch, const GradCheckOptions& opts = {});

}  // namespace premise
