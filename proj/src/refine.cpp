#include "premise/refine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace premise {

void RefineConfig::validate() const {
  if (centers < 1) throw ConfigError("C", "number of centers must be at least 1");
  if (cluster_size < 1) throw ConfigError("r", "expected cluster size must be at least 1");
  if (max_iters < 1) throw ConfigError("max_iters", "must be at least 1");
}

int auto_centers(int K) {
  if (K < 1) throw std::invalid_argument("K must be at least 1");
  int c = static_cast<int>(std::sqrt(static_cast<double>(K)));
  while (c * c < K) ++c;
  while (c > 1 && (c - 1) * (c - 1) >= K) --c;
  return c;
}

const char* to_string(RefineBranch branch) {
  switch (branch) {
    case RefineBranch::passthrough: return "passthrough";
    case RefineBranch::sampled: return "sampled";
    case RefineBranch::clustered: return "clustered";
  }
  return "?";
}

double wcss(const Mat& points, const Mat& centroids, const std::vector<int>& assignment) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    total += (points.row(i) - centroids.row(assignment[i])).squaredNorm();
  return total;
}

namespace {

int nearest(const Mat& points, Eigen::Index i, const Mat& centroids, double* best_sq = nullptr,
            double* second_sq = nullptr) {
  int best = 0;
  double b = std::numeric_limits<double>::infinity();
  double s = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
    double dist = (points.row(i) - centroids.row(j)).squaredNorm();
    if (dist < b) {
      s = b;
      b = dist;
      best = static_cast<int>(j);
    } else if (dist < s) {
      s = dist;
    }
  }
  if (best_sq) *best_sq = b;
  if (second_sq) *second_sq = s;
  return best;
}

// Means of members; empty clusters keep their previous centroid.
void recompute(const Mat& points, const std::vector<int>& assignment, Mat& centroids,
               std::vector<std::vector<int>>& members) {
  Mat sums = Mat::Zero(centroids.rows(), centroids.cols());
  std::vector<std::vector<int>> now(static_cast<std::size_t>(centroids.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    sums.row(assignment[i]) += points.row(i);
    now[assignment[i]].push_back(static_cast<int>(i));
  }
  for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
    if (now[j].empty()) continue;
    centroids.row(j) = sums.row(j) / static_cast<double>(now[j].size());
    members[j] = std::move(now[j]);
  }
}

void check_kmeans_input(const Mat& points, const Mat& init) {
  if (init.rows() < 1) throw std::invalid_argument("k-means needs at least one centroid");
  if (points.rows() < init.rows()) throw std::invalid_argument("k-means needs n >= C");
  if (points.cols() != init.cols()) throw std::invalid_argument("k-means dimension mismatch");
}

std::vector<int> draw_distinct(Eigen::Index n, int count, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int k = 0; k < count; ++k) {
    auto j = std::uniform_int_distribution<std::size_t>(k, idx.size() - 1)(rng);
    std::swap(idx[k], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

KMeansResult kmeans_lloyd(const Mat& points, const Mat& init, int max_iters) {
  check_kmeans_input(points, init);
  KMeansResult res;
  res.centroids = init;
  res.members.resize(static_cast<std::size_t>(init.rows()));
  res.assignment.assign(static_cast<std::size_t>(points.rows()), -1);
  for (int it = 0; it < max_iters; ++it) {
    std::vector<int> next(res.assignment.size());
    for (Eigen::Index i = 0; i < points.rows(); ++i) next[i] = nearest(points, i, res.centroids);
    if (next == res.assignment) break;
    res.assignment = std::move(next);
    recompute(points, res.assignment, res.centroids, res.members);
    ++res.iterations;
    res.wcss_history.push_back(wcss(points, res.centroids, res.assignment));
  }
  return res;
}

KMeansResult kmeans_hamerly(const Mat& points, const Mat& init, int max_iters) {
  check_kmeans_input(points, init);
  const Eigen::Index n = points.rows();
  const Eigen::Index k = init.rows();
  KMeansResult res;
  res.centroids = init;
  res.members.resize(static_cast<std::size_t>(k));
  res.assignment.assign(static_cast<std::size_t>(n), -1);
  std::vector<double> upper(n), lower(n);

  auto update_bounds = [&](const Mat& old_centroids) {
    std::vector<double> moved(k);
    for (Eigen::Index j = 0; j < k; ++j)
      moved[j] = (res.centroids.row(j) - old_centroids.row(j)).norm();
    Eigen::Index top = 0;
    for (Eigen::Index j = 1; j < k; ++j)
      if (moved[j] > moved[top]) top = j;
    double second = 0.0;
    for (Eigen::Index j = 0; j < k; ++j)
      if (j != top) second = std::max(second, moved[j]);
    for (Eigen::Index i = 0; i < n; ++i) {
      upper[i] += moved[res.assignment[i]];
      lower[i] -= res.assignment[i] == top ? second : moved[top];
    }
  };

  for (int it = 0; it < max_iters; ++it) {
    std::vector<int> next = res.assignment;
    bool changed = false;
    if (it == 0) {
      for (Eigen::Index i = 0; i < n; ++i) {
        double b, s;
        next[i] = nearest(points, i, res.centroids, &b, &s);
        upper[i] = std::sqrt(b);
        lower[i] = std::sqrt(s);
      }
      changed = true;
    } else {
      std::vector<double> half_gap(k, std::numeric_limits<double>::infinity());
      for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = a + 1; b < k; ++b) {
          double dist = 0.5 * (res.centroids.row(a) - res.centroids.row(b)).norm();
          half_gap[a] = std::min(half_gap[a], dist);
          half_gap[b] = std::min(half_gap[b], dist);
        }
      for (Eigen::Index i = 0; i < n; ++i) {
        const double bound = std::max(half_gap[next[i]], lower[i]);
        if (upper[i] < bound) continue;
        upper[i] = (points.row(i) - res.centroids.row(next[i])).norm();
        if (upper[i] < bound) continue;
        double b, s;
        int a = nearest(points, i, res.centroids, &b, &s);
        upper[i] = std::sqrt(b);
        lower[i] = std::sqrt(s);
        if (a != next[i]) {
          next[i] = a;
          changed = true;
        }
      }
    }
    if (!changed) break;
    res.assignment = std::move(next);
    Mat old = res.centroids;
    recompute(points, res.assignment, res.centroids, res.members);
    ++res.iterations;
    res.wcss_history.push_back(wcss(points, res.centroids, res.assignment));
    update_bounds(old);
  }
  return res;
}

RefineOutcome refine(const Mat& points, const RefineConfig& cfg, Rng& rng) {
  cfg.validate();
  const Eigen::Index n = points.rows();
  RefineOutcome out;
  if (n <= cfg.centers) {
    out.branch = RefineBranch::passthrough;
    out.representatives = points;
    out.assignment.resize(static_cast<std::size_t>(n));
    std::iota(out.assignment.begin(), out.assignment.end(), 0);
    for (int i = 0; i < n; ++i) out.members.push_back({i});
    return out;
  }
  const auto chosen = draw_distinct(n, cfg.centers, rng);
  if (static_cast<long long>(n) <=
      static_cast<long long>(cfg.centers) * static_cast<long long>(cfg.cluster_size)) {
    out.branch = RefineBranch::sampled;
    out.representatives.resize(cfg.centers, points.cols());
    out.assignment.assign(static_cast<std::size_t>(n), -1);
    for (int s = 0; s < cfg.centers; ++s) {
      out.representatives.row(s) = points.row(chosen[s]);
      out.assignment[chosen[s]] = s;
      out.members.push_back({chosen[s]});
    }
    return out;
  }
  Mat init(cfg.centers, points.cols());
  for (int s = 0; s < cfg.centers; ++s) init.row(s) = points.row(chosen[s]);
  KMeansResult km = cfg.accelerated ? kmeans_hamerly(points, init, cfg.max_iters)
                                    : kmeans_lloyd(points, init, cfg.max_iters);
  out.branch = RefineBranch::clustered;
  out.representatives = std::move(km.centroids);
  out.assignment = std::move(km.assignment);
  out.wcss_history = std::move(km.wcss_history);
  out.iterations = km.iterations;
  out.cluster_sizes.assign(cfg.centers, 0);
  for (int a : out.assignment) ++out.cluster_sizes[a];
  out.members = std::move(km.members);
  for (int s = 0; s < cfg.centers; ++s)
    if (out.members[s].empty()) out.members[s] = {chosen[s]};
  return out;
}

Mat refine_backward(const RefineOutcome& o, const Mat& d_rep, Eigen::Index n_rows) {
  Mat d = Mat::Zero(n_rows, d_rep.cols());
  for (std::size_t j = 0; j < o.members.size(); ++j) {
    const double share = 1.0 / static_cast<double>(o.members[j].size());
    for (int i : o.members[j]) d.row(i) += share * d_rep.row(static_cast<Eigen::Index>(j));
  }
  return d;
}

}  // namespace premise
