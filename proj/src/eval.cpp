#include "premise/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "premise/model.hpp"

namespace premise {

RankedList rank(std::vector<RankedItem> items) {
  std::sort(items.begin(), items.end(), [](const RankedItem& a, const RankedItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.review_id < b.review_id;
  });
  return items;
}

double average_precision(const RankedList& list, int threshold) {
  int hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (list[i].label > threshold) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return hits == 0 ? 0.0 : sum / hits;
}

namespace {

double gain_of(int label, Gain gain) {
  return gain == Gain::exponential ? std::exp2(static_cast<double>(label)) - 1.0
                                   : static_cast<double>(label);
}

double dcg(const std::vector<int>& labels, int N, Gain gain) {
  double total = 0.0;
  const std::size_t n = std::min<std::size_t>(labels.size(), static_cast<std::size_t>(N));
  for (std::size_t i = 0; i < n; ++i) total += gain_of(labels[i], gain) / std::log2(i + 2.0);
  return total;
}

}  // namespace

double ndcg_at(const RankedList& list, int N, Gain gain) {
  if (N < 1) throw std::invalid_argument("NDCG cutoff must be at least 1");
  std::vector<int> labels;
  for (const auto& it : list) labels.push_back(it.label);
  const double actual = dcg(labels, N, gain);
  std::sort(labels.begin(), labels.end(), std::greater<>());
  const double ideal = dcg(labels, N, gain);
  return ideal == 0.0 ? 1.0 : actual / ideal;
}

MetricsReport evaluate_scores(const Dataset& ds, const ReviewScorer& scorer, const MetricConfig& cfg) {
  MetricsReport rep;
  for (const auto& p : ds.products) {
    const auto& reviews = ds.reviews(p.id);
    if (reviews.empty()) continue;
    std::vector<RankedItem> items;
    for (const auto& r : reviews) items.push_back({scorer(p, r), r.label, r.id});
    RankedList list = rank(std::move(items));
    ProductMetrics pm{p.id, average_precision(list, cfg.relevance_threshold), ndcg_at(list, 3, cfg.gain),
                      ndcg_at(list, 5, cfg.gain)};
    rep.map += pm.ap;
    rep.ndcg3 += pm.ndcg3;
    rep.ndcg5 += pm.ndcg5;
    rep.per_product.push_back(std::move(pm));
  }
  if (!rep.per_product.empty()) {
    const auto n = static_cast<double>(rep.per_product.size());
    rep.map /= n;
    rep.ndcg3 /= n;
    rep.ndcg5 /= n;
  }
  return rep;
}

MetricsReport evaluate(const Model& model, const Dataset& ds, const MetricConfig& cfg) {
  // encode each product once and reuse it for all of its reviews
  const Product* cached_for = nullptr;
  FieldPass product_pass;
  return evaluate_scores(
      ds,
      [&](const Product& p, const Review& r) {
        if (cached_for != &p) {
          product_pass = encode_field(model, p.sentences, p.images, Field::product, p.id);
          cached_for = &p;
        }
        FieldPass rp = encode_field(model, r.sentences, r.images, Field::review, r.id);
        return forward_pair(model, product_pass, rp).f;
      },
      cfg);
}

void write_metrics_csv(const MetricsReport& rep, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(10);
  out << "product,AP,NDCG@3,NDCG@5\n";
  for (const auto& pm : rep.per_product) out << pm.product_id << ',' << pm.ap << ',' << pm.ndcg3 << ',' << pm.ndcg5 << '\n';
  out << "mean," << rep.map << ',' << rep.ndcg3 << ',' << rep.ndcg5 << '\n';
}

void write_metrics_json(const MetricsReport& rep, const std::filesystem::path& path) {
  nlohmann::json j;
  j["MAP"] = rep.map;
  j["NDCG@3"] = rep.ndcg3;
  j["NDCG@5"] = rep.ndcg5;
  j["per_product"] = nlohmann::json::array();
  for (const auto& pm : rep.per_product)
    j["per_product"].push_back({{"product", pm.product_id}, {"AP", pm.ap}, {"NDCG@3", pm.ndcg3}, {"NDCG@5", pm.ndcg5}});
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace premise
