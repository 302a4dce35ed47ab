#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "premise/common.hpp"

namespace premise {

using Sentence = std::vector<int>;
// One image: n_regions x d_v, one region vector per row.
using Image = Mat;

struct Product {
  std::string id;
  std::vector<Sentence> sentences;
  std::vector<Image> images;
};

struct Review {
  std::string id;
  std::string product_id;
  std::vector<Sentence> sentences;
  std::vector<Image> images;
  long long votes = 0;
  int label = 0;
};

enum class Split { train, dev, test };

std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct Dataset {
  std::vector<Product> products;
  std::map<std::string, std::vector<Review>> reviews_by_product;
  Split split = Split::train;

  const Product& product(const std::string& id) const;
  const std::vector<Review>& reviews(const std::string& product_id) const;
  std::size_t review_count() const;
  // Region dimension shared by all images, or 0 when the dataset has none.
  int region_dim() const;
  int max_token_id() const;
};

// Reviews with label above this value are positives for sampling and MAP.
inline constexpr int kPositiveThreshold = 2;

int clip_label(long long votes);

// Throws InvariantError naming the offending record.
void validate(const Dataset& dataset);

// Line-delimited JSON records; see README for the schema.
Dataset load_dataset(const std::filesystem::path& path, Split split = Split::train);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

struct GeneratorSpec {
  int n_products = 50;
  int reviews_per_product = 10;
  int vocab_size = 400;
  int region_dim = 32;
  int n_topics = 10;
  double noise = 0.0;
  int product_sentences = 4;
  int review_sentences = 3;
  int tokens_per_sentence = 8;
  int product_images = 2;
  int review_images = 1;
  int regions_per_image = 4;
  // Probability that a review carries images at all.
  double review_image_prob = 1.0;
  // Magnitude of the per-region variation around the planted direction.
  double region_variation = 0.3;
};

void validate(const GeneratorSpec& spec);

// Planted-topic corpus. A label-L review copies round(L/4 * n) of its tokens
// from the product description (the rest come from an unrelated topic) and
// its regions have a component L-proportional along the product's visual
// direction. All products land in one dataset tagged as `train`.
Dataset generate_synthetic(const GeneratorSpec& spec, std::uint64_t seed);

// The planted visual alignment coefficient for a label.
double planted_visual_alignment(int label);

struct DatasetSplits {
  Dataset train;
  Dataset dev;
  Dataset test;
};

DatasetSplits split_dataset(const Dataset& dataset, double train_fraction, double dev_fraction,
                            std::uint64_t seed);

struct BatchEntry {
  const Product* product = nullptr;
  const Review* positive = nullptr;
  std::vector<const Review*> negatives;
};

// Borrows from the dataset it was sampled from.
struct Batch {
  std::vector<BatchEntry> entries;
  int B = 0;
  int n_neg = 0;
};

Batch sample_batch(const Dataset& dataset, int B, int n_neg, Rng& rng);
// Same per-product draw, for an explicit list of product indices.
Batch make_batch(const Dataset& dataset, const std::vector<std::size_t>& product_indices, int n_neg,
                 Rng& rng);

}  // namespace premise
