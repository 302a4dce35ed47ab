#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "premise/common.hpp"

namespace premise {

struct Model;

// A pair of modality sequences of lengths l1, l2 projected to dimension d,
// aggregated over N layers with per-modality downscale ratios k1, k2.
struct Workload {
  double l1 = 100;
  double l2 = 100;
  double d = 128;
  int N = 2;
  double k1 = 10;
  double k2 = 10;

  void validate() const;
};

struct CostReport {
  Workload workload;
  double fusion = 0.0;         // C_f
  double attention = 0.0;      // C_att
  double matching_bound = 0.0; // C_mm upper bound
  double matching = 0.0;       // C_m = C_att + C_mm bound
  double ratio = 0.0;          // C_m / C_f

  // filled by measure_counts
  bool measured = false;
  double measured_attention = 0.0;
  double measured_matching = 0.0;
  double measured_ratio = 0.0;
  double seconds_per_iteration = 0.0;
};

// C_f = (2 l1 l2 + l1^2 + l2^2) N d, conjugate cross-attention plus self-attention.
double fusion_cost(const Workload& w);
// C_att = 2 (l1^2 + l2^2) d, higher-scale terms dropped.
double attention_cost(const Workload& w);
// C_mm < l1 l2 d / (k1 k2 (1 - 1/k1)(1 - 1/k2)), the geometric-series bound.
double matching_bound(const Workload& w);
// The finite N-term sum the bound dominates: l1 l2 d (sum_i k1^-i)(sum_i k2^-i).
double matching_exact(const Workload& w);

CostReport matching_cost(const Workload& w);

// Root of C_m(l1, l2) = C_f(l1, l2) in x = l1/l2, searched on [lo, hi] with
// l2 fixed. Returns nullopt when the ratio does not cross 1 in the bracket.
std::optional<double> solve_crossover(const Workload& base, double lo = 1.0, double hi = 1e3);

struct MeasureOptions {
  int intervals = 5;
  int iterations_per_interval = 100;
  std::uint64_t seed = 11;
};

// Runs the model's aggregation stacks and matching kernel on random sequences
// shaped like each workload (one block per modality, scale-0 sets refined to
// ceil(l/k) rows), counting multiply-accumulates in attention score/value
// products and cosine numerators. Wall time is sum(t_i) / (iterations * intervals).
std::vector<CostReport> measure_counts(const Model& model, const std::vector<Workload>& workloads,
                                       const MeasureOptions& opts = {});

std::string cost_csv_header();
std::string cost_csv_row(const CostReport& r);
void write_cost_csv(const std::vector<CostReport>& rows, const std::filesystem::path& path);

}  // namespace premise
