#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "premise/corpus.hpp"

namespace premise {

struct Model;

struct RankedItem {
  double score = 0.0;
  int label = 0;
  std::string review_id;
};

// Sorted by score descending, ties by review id ascending.
using RankedList = std::vector<RankedItem>;

RankedList rank(std::vector<RankedItem> items);

enum class Gain { exponential, linear };

struct MetricConfig {
  int relevance_threshold = kPositiveThreshold;  // relevant iff label > threshold
  Gain gain = Gain::exponential;
};

// Mean of precision@k over relevant positions; 0 when nothing is relevant.
double average_precision(const RankedList& list, int relevance_threshold = kPositiveThreshold);

// DCG@N / IDCG@N with gain 2^label - 1 (or label) and log2(i + 1) discount.
// A list whose ideal DCG is 0 scores 1.
double ndcg_at(const RankedList& list, int N, Gain gain = Gain::exponential);

struct ProductMetrics {
  std::string product_id;
  double ap = 0.0;
  double ndcg3 = 0.0;
  double ndcg5 = 0.0;
};

struct MetricsReport {
  double map = 0.0;
  double ndcg3 = 0.0;
  double ndcg5 = 0.0;
  std::vector<ProductMetrics> per_product;
};

using ReviewScorer = std::function<double(const Product&, const Review&)>;

MetricsReport evaluate_scores(const Dataset& dataset, const ReviewScorer& scorer,
                              const MetricConfig& cfg = {});
// Ranks every review of every product by the model's predicted helpfulness.
MetricsReport evaluate(const Model& model, const Dataset& dataset, const MetricConfig& cfg = {});

void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path);
void write_metrics_json(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace premise
