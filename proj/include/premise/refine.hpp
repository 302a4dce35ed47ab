#pragma once

#include <vector>

#include "premise/common.hpp"

namespace premise {

struct RefineConfig {
  int centers = 10;      // C
  int cluster_size = 4;  // r, expected members per cluster
  int max_iters = 10;
  bool accelerated = false;  // Hamerly bounds instead of plain Lloyd

  void validate() const;
};

// C = ceil(sqrt(K)), exact in integers.
int auto_centers(int K);

enum class RefineBranch { passthrough, sampled, clustered };

const char* to_string(RefineBranch branch);

struct RefineOutcome {
  Mat representatives;
  RefineBranch branch = RefineBranch::passthrough;
  // passthrough: assignment[i] = i
  // sampled:     assignment[i] = output slot of row i, or -1 if not drawn
  // clustered:   assignment[i] = cluster id of row i
  std::vector<int> assignment;
  std::vector<int> cluster_sizes;  // clustered branch only
  // Rows averaged into each representative. Differs from the final
  // assignment only for a cluster that emptied and kept an older centroid.
  std::vector<std::vector<int>> members;
  std::vector<double> wcss_history;
  int iterations = 0;
};

// Picks the branch from n <= C (passthrough), n <= C * r (sample C rows),
// otherwise k-means with C centers seeded from C distinct rows.
RefineOutcome refine(const Mat& points, const RefineConfig& cfg, Rng& rng);

// Routes representative gradients back to input rows with the draw and
// assignments held fixed; cluster gradients are split evenly over members.
Mat refine_backward(const RefineOutcome& outcome, const Mat& d_representatives,
                    Eigen::Index n_rows);

struct KMeansResult {
  Mat centroids;
  std::vector<int> assignment;
  int iterations = 0;
  // within-cluster sum of squares after each centroid update
  std::vector<double> wcss_history;
  // Points each centroid is currently the mean of; empty means the initial value.
  std::vector<std::vector<int>> members;
};

// Exact Lloyd iterations. Nearest centroid by squared Euclidean distance,
// ties to the lowest index; empty clusters keep their previous centroid;
// stops at an assignment fixpoint or after max_iters updates.
KMeansResult kmeans_lloyd(const Mat& points, const Mat& init, int max_iters);

// Hamerly's bounds-based variant; produces the same iterates as Lloyd.
KMeansResult kmeans_hamerly(const Mat& points, const Mat& init, int max_iters);

double wcss(const Mat& points, const Mat& centroids, const std::vector<int>& assignment);

}  // namespace premise
