#include <gtest/gtest.h>

#include "premise/bench.hpp"
#include "premise/model.hpp"

using namespace premise;

namespace {

Workload square(double l, double d = 128, int N = 2, double k = 10) {
  Workload w;
  w.l1 = w.l2 = l;
  w.d = d;
  w.N = N;
  w.k1 = w.k2 = k;
  return w;
}

}  // namespace

TEST(CostModel, FusionCostSquareCase) {
  for (double l : {10.0, 50.0, 100.0})
    for (int N : {1, 2, 3}) EXPECT_DOUBLE_EQ(fusion_cost(square(l, 64, N)), 4 * l * l * N * 64);
  EXPECT_DOUBLE_EQ(fusion_cost(square(100)), 10'240'000.0);
  EXPECT_DOUBLE_EQ(fusion_cost(square(100)), 8 * 100.0 * 100.0 * 128);
}

TEST(CostModel, MatchingCostSquareCase) {
  const CostReport r = matching_cost(square(100));
  EXPECT_DOUBLE_EQ(r.attention, 5'120'000.0);
  EXPECT_NEAR(r.matching_bound, 1'280'000.0 / 81.0, 1e-9);
  EXPECT_NEAR(r.matching_bound, 15'802, 1.0);
  EXPECT_NEAR(r.ratio, 0.5015, 1e-4);
  EXPECT_LT(r.matching, (4.0 + 1.0 / 81.0) * 100 * 100 * 128 + 1e-6);
  EXPECT_NEAR(r.matching / (100.0 * 100.0 * 128.0), 4.01, 0.005);
}

TEST(CostModel, ExactSumBelowBound) {
  for (int N = 1; N < 6; ++N)
    for (double k : {1.5, 2.0, 10.0}) {
      Workload w = square(100, 128, N, k);
      EXPECT_LT(matching_exact(w), matching_bound(w));
    }
}

TEST(CostModel, RejectsDegenerateWorkloads) {
  Workload w = square(100);
  w.l2 = 0;
  EXPECT_THROW(fusion_cost(w), std::invalid_argument);
  w = square(100);
  w.k1 = 1.0;
  EXPECT_THROW(matching_bound(w), std::invalid_argument);
}

// With two layers the difference C_m - C_f is l2^2 d x (1/((k1-1)(k2-1)) - 4),
// linear in x = l1/l2 with a sign that does not depend on x: no crossover.
TEST(Crossover, NoneForTwoLayers) {
  const Workload base = square(100);
  for (double x = 1.0; x <= 1000.0; x *= 1.1) {
    Workload w = base;
    w.l1 = x * base.l2;
    EXPECT_LT(matching_cost(w).ratio, 1.0) << x;
  }
  EXPECT_FALSE(solve_crossover(base).has_value());
}

// Three layers with k = 1.1: the difference is l2^2 d (-x^2 + 94x - 1), whose
// larger root is (94 + sqrt(94^2 - 4)) / 2.
TEST(Crossover, SolverFindsQuadraticRoot) {
  const Workload base = square(100, 128, 3, 1.1);
  const auto x = solve_crossover(base);
  ASSERT_TRUE(x.has_value());
  const double c = 1.0 / (0.1 * 0.1);
  const double b = c - 6.0;
  EXPECT_NEAR(*x, (b + std::sqrt(b * b - 4.0)) / 2.0, 1e-6);
}

TEST(MeasureCounts, MatchedWorkloadRatio) {
  ModelConfig cfg;
  const Model m = Model::create(cfg);
  MeasureOptions opts;
  opts.intervals = 1;
  opts.iterations_per_interval = 1;
  const auto rows = measure_counts(m, {square(100)}, opts);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_TRUE(rows[0].measured);
  EXPECT_GE(rows[0].measured_ratio, 0.4);
  EXPECT_LE(rows[0].measured_ratio, 0.6);
  // Two length-100 blocks through one layer each dominate the attention count.
  EXPECT_GE(rows[0].measured_attention, 2.0 * 2 * 101 * 101 * 128);
  EXPECT_GT(rows[0].seconds_per_iteration, 0.0);
}

TEST(MeasureCounts, CsvRow) {
  const CostReport r = matching_cost(square(100));
  const std::string row = cost_csv_row(r);
  const std::string header = cost_csv_header();
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(header.begin(), header.end(), ','));
  EXPECT_EQ(row.rfind("100,100,128,2,10,10,10240000,5120000,", 0), 0u) << row;
}
