#include "premise/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

namespace premise {

using nlohmann::json;

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "dev") return Split::dev;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + name + "'");
}

const Product& Dataset::product(const std::string& id) const {
  for (const auto& p : products)
    if (p.id == id) return p;
  throw std::out_of_range("unknown product '" + id + "'");
}

const std::vector<Review>& Dataset::reviews(const std::string& product_id) const {
  static const std::vector<Review> kEmpty;
  auto it = reviews_by_product.find(product_id);
  return it == reviews_by_product.end() ? kEmpty : it->second;
}

std::size_t Dataset::review_count() const {
  std::size_t n = 0;
  for (const auto& [_, rs] : reviews_by_product) n += rs.size();
  return n;
}

namespace {

template <class Fn>
void for_each_image(const Dataset& ds, Fn&& fn) {
  for (const auto& p : ds.products)
    for (const auto& im : p.images) fn(p.id, im);
  for (const auto& [_, rs] : ds.reviews_by_product)
    for (const auto& r : rs)
      for (const auto& im : r.images) fn(r.id, im);
}

void check_text(const std::string& id, const std::vector<Sentence>& sentences) {
  if (sentences.empty()) throw InvariantError(id + ": text has no sentences");
  for (const auto& s : sentences) {
    if (s.empty()) throw InvariantError(id + ": empty sentence");
    for (int t : s)
      if (t < 0) throw InvariantError(id + ": negative token id");
  }
}

}  // namespace

int Dataset::region_dim() const {
  int dim = 0;
  for_each_image(*this, [&](const std::string&, const Image& im) {
    if (dim == 0) dim = static_cast<int>(im.cols());
  });
  return dim;
}

int Dataset::max_token_id() const {
  int m = -1;
  auto scan = [&](const std::vector<Sentence>& ss) {
    for (const auto& s : ss)
      for (int t : s) m = std::max(m, t);
  };
  for (const auto& p : products) scan(p.sentences);
  for (const auto& [_, rs] : reviews_by_product)
    for (const auto& r : rs) scan(r.sentences);
  return m;
}

int clip_label(long long votes) {
  if (votes < 0) throw std::invalid_argument("votes must be non-negative");
  // floor(log2(votes + 1)) by bit length, exact for all integers
  unsigned long long v = static_cast<unsigned long long>(votes) + 1ULL;
  int lg = 0;
  while (v >>= 1) ++lg;
  return std::min(lg, 4);
}

void validate(const Dataset& ds) {
  std::set<std::string> ids;
  for (const auto& p : ds.products) {
    if (!ids.insert(p.id).second) throw InvariantError(p.id + ": duplicate product id");
    check_text(p.id, p.sentences);
  }
  for (const auto& [pid, rs] : ds.reviews_by_product) {
    for (const auto& r : rs) {
      if (r.product_id != pid || !ids.count(pid))
        throw InvariantError(r.id + ": unknown product '" + r.product_id + "'");
      check_text(r.id, r.sentences);
      if (r.votes < 0) throw InvariantError(r.id + ": negative votes");
      int expected = clip_label(r.votes);
      if (r.label != expected)
        throw InvariantError(r.id + ": label " + std::to_string(r.label) + " does not match votes " +
                             std::to_string(r.votes) + " (expected " + std::to_string(expected) +
                             ")");
    }
  }
  int dim = 0;
  for_each_image(ds, [&](const std::string& id, const Image& im) {
    if (im.rows() == 0) throw InvariantError(id + ": image without regions");
    if (dim == 0) dim = static_cast<int>(im.cols());
    if (im.cols() != dim) throw InvariantError(id + ": region dimension mismatch");
    if (!im.allFinite()) throw InvariantError(id + ": non-finite region vector");
  });
  if (ds.split == Split::train) {
    for (const auto& p : ds.products) {
      const auto& rs = ds.reviews(p.id);
      bool pos = std::any_of(rs.begin(), rs.end(),
                             [](const Review& r) { return r.label > kPositiveThreshold; });
      bool neg = std::any_of(rs.begin(), rs.end(),
                             [](const Review& r) { return r.label <= kPositiveThreshold; });
      if (!pos || !neg)
        throw InvariantError(p.id + ": train products need a positive and a negative review");
    }
  }
}

// ---------------------------------------------------------------------------
// Record file

namespace {

json sentences_to_json(const std::vector<Sentence>& ss) { return json(ss); }

json images_to_json(const std::vector<Image>& images) {
  json out = json::array();
  for (const auto& im : images) {
    json regions = json::array();
    for (Eigen::Index i = 0; i < im.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < im.cols(); ++j) row.push_back(static_cast<float>(im(i, j)));
      regions.push_back(std::move(row));
    }
    out.push_back(std::move(regions));
  }
  return out;
}

std::vector<Sentence> sentences_from_json(const json& j) {
  return j.get<std::vector<Sentence>>();
}

std::vector<Image> images_from_json(const json& j) {
  std::vector<Image> out;
  for (const auto& regions : j) {
    auto rows = regions.get<std::vector<std::vector<float>>>();
    if (rows.empty()) {
      out.emplace_back(0, 0);
      continue;
    }
    Image im(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows[0].size()) throw std::invalid_argument("ragged region vectors");
      for (std::size_t k = 0; k < rows[i].size(); ++k)
        im(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
    out.push_back(std::move(im));
  }
  return out;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file " + path.string());
  Dataset ds;
  ds.split = split;
  std::vector<Review> reviews;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json rec = json::parse(line);
      const std::string kind = rec.at("kind").get<std::string>();
      if (kind == "product") {
        Product p;
        p.id = rec.at("id").get<std::string>();
        p.sentences = sentences_from_json(rec.at("sentences"));
        p.images = images_from_json(rec.value("images", json::array()));
        ds.products.push_back(std::move(p));
      } else if (kind == "review") {
        Review r;
        r.id = rec.at("id").get<std::string>();
        r.product_id = rec.at("product_id").get<std::string>();
        r.sentences = sentences_from_json(rec.at("sentences"));
        r.images = images_from_json(rec.value("images", json::array()));
        r.votes = rec.at("votes").get<long long>();
        r.label = rec.at("label").get<int>();
        reviews.push_back(std::move(r));
      } else {
        throw std::invalid_argument("unknown record kind '" + kind + "'");
      }
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    } catch (const std::invalid_argument& e) {
      throw ParseError(lineno, e.what());
    }
  }
  std::set<std::string> known;
  for (const auto& p : ds.products) known.insert(p.id);
  for (auto& r : reviews) {
    if (!known.count(r.product_id))
      throw InvariantError(r.id + ": unknown product '" + r.product_id + "'");
    ds.reviews_by_product[r.product_id].push_back(std::move(r));
  }
  validate(ds);
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset file " + path.string());
  for (const auto& p : ds.products) {
    json rec = {{"kind", "product"},
                {"id", p.id},
                {"sentences", sentences_to_json(p.sentences)},
                {"images", images_to_json(p.images)}};
    out << rec.dump() << '\n';
  }
  for (const auto& p : ds.products) {
    for (const auto& r : ds.reviews(p.id)) {
      json rec = {{"kind", "review"},
                  {"id", r.id},
                  {"product_id", r.product_id},
                  {"sentences", sentences_to_json(r.sentences)},
                  {"images", images_to_json(r.images)},
                  {"votes", r.votes},
                  {"label", r.label}};
      out << rec.dump() << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic generator

void validate(const GeneratorSpec& s) {
  auto positive = [](int v, const char* key) {
    if (v <= 0) throw ConfigError(key, "must be positive");
  };
  positive(s.n_products, "n_products");
  positive(s.reviews_per_product, "reviews_per_product");
  positive(s.vocab_size, "vocab_size");
  positive(s.region_dim, "d_v");
  positive(s.n_topics, "n_topics");
  positive(s.product_sentences, "product_sentences");
  positive(s.review_sentences, "review_sentences");
  positive(s.tokens_per_sentence, "tokens_per_sentence");
  positive(s.regions_per_image, "regions_per_image");
  if (s.product_images < 0) throw ConfigError("product_images", "must be non-negative");
  if (s.review_images < 0) throw ConfigError("review_images", "must be non-negative");
  if (s.reviews_per_product < 2)
    throw ConfigError("reviews_per_product", "need at least one positive and one negative");
  if (s.n_topics < 2) throw ConfigError("n_topics", "need at least two topics");
  if (s.vocab_size < s.n_topics) throw ConfigError("vocab_size", "smaller than n_topics");
  if (s.noise < 0.0) throw ConfigError("noise", "must be non-negative");
  if (s.review_image_prob < 0.0 || s.review_image_prob > 1.0)
    throw ConfigError("review_image_prob", "must lie in [0,1]");
  int needed = 2 + s.product_images * s.regions_per_image + s.review_images * s.regions_per_image;
  if (s.region_dim < needed)
    throw ConfigError("d_v", "must be at least " + std::to_string(needed) +
                                 " to hold orthogonal planted directions");
}

double planted_visual_alignment(int label) { return 0.2 + 0.2 * label; }

namespace {

// Random unit vector orthogonal to every row of `basis` (rows orthonormal).
Vec orthogonal_unit(const std::vector<Vec>& basis, int dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v(i) = normal(rng);
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : basis) v -= v.dot(b) * b;
    double n = v.norm();
    if (n > 1e-6) return v / n;
  }
}

long long votes_for_label(int label, Rng& rng) {
  long long lo = (1LL << label) - 1;
  long long hi = label < 4 ? (1LL << (label + 1)) - 2 : 60;
  return std::uniform_int_distribution<long long>(lo, hi)(rng);
}

Image to_f32(Image im) {
  return im.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); });
}

std::string product_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "p%04d", i);
  return buf;
}

std::string review_name(int p, int r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "p%04d-r%02d", p, r);
  return buf;
}

}  // namespace

Dataset generate_synthetic(const GeneratorSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int block = spec.vocab_size / spec.n_topics;
  const int dv = spec.region_dim;
  constexpr int kLabelPattern[5] = {4, 0, 3, 1, 2};

  auto topic_token = [&](int topic) {
    return topic * block + std::uniform_int_distribution<int>(0, block - 1)(rng);
  };
  auto noisy_token = [&](int token) {
    if (spec.noise > 0.0 && unit(rng) < std::min(1.0, spec.noise))
      return std::uniform_int_distribution<int>(0, spec.vocab_size - 1)(rng);
    return token;
  };
  auto add_noise = [&](Image& im) {
    if (spec.noise <= 0.0) return;
    for (Eigen::Index i = 0; i < im.size(); ++i)
      im.data()[i] += spec.noise * normal(rng) / std::sqrt(static_cast<double>(dv));
  };

  Dataset ds;
  ds.split = Split::train;
  for (int pi = 0; pi < spec.n_products; ++pi) {
    Product p;
    p.id = product_name(pi);
    const int topic = std::uniform_int_distribution<int>(0, spec.n_topics - 1)(rng);
    std::vector<int> description;
    for (int s = 0; s < spec.product_sentences; ++s) {
      Sentence sent;
      for (int t = 0; t < spec.tokens_per_sentence; ++t) {
        int tok = topic_token(topic);
        description.push_back(tok);
        sent.push_back(noisy_token(tok));
      }
      p.sentences.push_back(std::move(sent));
    }

    // Planted visual direction plus orthogonal per-region variation.
    std::vector<Vec> basis;
    Vec direction = orthogonal_unit(basis, dv, rng);
    basis.push_back(direction);
    for (int im = 0; im < spec.product_images; ++im) {
      Image image(spec.regions_per_image, dv);
      for (int r = 0; r < spec.regions_per_image; ++r) {
        Vec e = orthogonal_unit(basis, dv, rng);
        basis.push_back(e);
        image.row(r) = (direction + spec.region_variation * e).transpose();
      }
      add_noise(image);
      p.images.push_back(to_f32(std::move(image)));
    }
    const std::size_t product_basis = basis.size();

    std::vector<int> labels(spec.reviews_per_product);
    for (int k = 0; k < spec.reviews_per_product; ++k) labels[k] = kLabelPattern[k % 5];
    std::shuffle(labels.begin(), labels.end(), rng);

    std::vector<Review> reviews;
    for (int k = 0; k < spec.reviews_per_product; ++k) {
      Review r;
      r.id = review_name(pi, k);
      r.product_id = p.id;
      r.label = labels[k];
      r.votes = votes_for_label(r.label, rng);

      const int n_tokens = spec.review_sentences * spec.tokens_per_sentence;
      double share = r.label / 4.0;
      if (spec.noise > 0.0) share = std::clamp(share + spec.noise * normal(rng), 0.0, 1.0);
      const int copied = static_cast<int>(std::lround(share * n_tokens));
      int distractor = std::uniform_int_distribution<int>(0, spec.n_topics - 2)(rng);
      if (distractor >= topic) ++distractor;
      std::vector<int> tokens(n_tokens);
      for (int t = 0; t < n_tokens; ++t) {
        tokens[t] = t < copied ? description[std::uniform_int_distribution<std::size_t>(
                                     0, description.size() - 1)(rng)]
                               : topic_token(distractor);
      }
      std::shuffle(tokens.begin(), tokens.end(), rng);
      for (int s = 0; s < spec.review_sentences; ++s) {
        Sentence sent;
        for (int t = 0; t < spec.tokens_per_sentence; ++t)
          sent.push_back(noisy_token(tokens[s * spec.tokens_per_sentence + t]));
        r.sentences.push_back(std::move(sent));
      }

      if (spec.review_images > 0 && unit(rng) < spec.review_image_prob) {
        basis.resize(product_basis);
        const double alpha = planted_visual_alignment(r.label);
        const double beta = std::sqrt(std::max(0.0, 1.0 - alpha * alpha));
        Vec off = orthogonal_unit(basis, dv, rng);
        basis.push_back(off);
        for (int im = 0; im < spec.review_images; ++im) {
          Image image(spec.regions_per_image, dv);
          for (int q = 0; q < spec.regions_per_image; ++q) {
            Vec e = orthogonal_unit(basis, dv, rng);
            basis.push_back(e);
            image.row(q) =
                (alpha * direction + beta * off + spec.region_variation * e).transpose();
          }
          add_noise(image);
          r.images.push_back(to_f32(std::move(image)));
        }
      }
      reviews.push_back(std::move(r));
    }
    ds.reviews_by_product[p.id] = std::move(reviews);
    ds.products.push_back(std::move(p));
  }
  validate(ds);
  return ds;
}

DatasetSplits split_dataset(const Dataset& ds, double train_fraction, double dev_fraction,
                            std::uint64_t seed) {
  if (train_fraction <= 0.0 || dev_fraction < 0.0 || train_fraction + dev_fraction > 1.0)
    throw ConfigError("train_fraction", "fractions must be positive and sum to at most 1");
  std::vector<std::size_t> order(ds.products.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(order.size());
  const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * n));
  const auto n_dev = std::min(order.size() - n_train,
                              static_cast<std::size_t>(std::lround(dev_fraction * n)));
  DatasetSplits out;
  out.train.split = Split::train;
  out.dev.split = Split::dev;
  out.test.split = Split::test;
  for (std::size_t i = 0; i < order.size(); ++i) {
    Dataset& dst = i < n_train ? out.train : (i < n_train + n_dev ? out.dev : out.test);
    const Product& p = ds.products[order[i]];
    dst.products.push_back(p);
    dst.reviews_by_product[p.id] = ds.reviews(p.id);
  }
  // keep file order stable by id
  for (Dataset* d : {&out.train, &out.dev, &out.test})
    std::sort(d->products.begin(), d->products.end(),
              [](const Product& a, const Product& b) { return a.id < b.id; });
  return out;
}

// ---------------------------------------------------------------------------
// Batch sampling

Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& product_indices, int n_neg,
                 Rng& rng) {
  if (ds.split != Split::train) throw std::invalid_argument("batches are drawn from the train split");
  if (n_neg < 1) throw std::invalid_argument("n_neg must be at least 1");
  Batch batch;
  batch.B = static_cast<int>(product_indices.size());
  batch.n_neg = n_neg;
  for (std::size_t idx : product_indices) {
    const Product& p = ds.products.at(idx);
    std::vector<const Review*> pos, neg;
    for (const auto& r : ds.reviews(p.id)) (r.label > kPositiveThreshold ? pos : neg).push_back(&r);
    if (pos.empty()) throw InvariantError(p.id + ": no positive review to sample");
    if (static_cast<int>(neg.size()) < n_neg)
      throw InvariantError(p.id + ": only " + std::to_string(neg.size()) +
                           " negative reviews, need " + std::to_string(n_neg));
    BatchEntry e;
    e.product = &p;
    e.positive = pos[std::uniform_int_distribution<std::size_t>(0, pos.size() - 1)(rng)];
    // partial Fisher-Yates: without replacement
    for (int k = 0; k < n_neg; ++k) {
      auto j = std::uniform_int_distribution<std::size_t>(k, neg.size() - 1)(rng);
      std::swap(neg[k], neg[j]);
      e.negatives.push_back(neg[k]);
    }
    batch.entries.push_back(std::move(e));
  }
  return batch;
}

Batch sample_batch(const Dataset& ds, int B, int n_neg, Rng& rng) {
  if (B < 1 || static_cast<std::size_t>(B) > ds.products.size())
    throw std::invalid_argument("batch size must lie in [1, number of products]");
  std::vector<std::size_t> order(ds.products.size());
  std::iota(order.begin(), order.end(), 0);
  for (int k = 0; k < B; ++k) {
    auto j = std::uniform_int_distribution<std::size_t>(k, order.size() - 1)(rng);
    std::swap(order[k], order[j]);
  }
  order.resize(B);
  return make_batch(ds, order, n_neg, rng);
}

}  // namespace premise
