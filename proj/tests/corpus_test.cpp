#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "premise/corpus.hpp"
#include "test_util.hpp"

using namespace premise;

TEST(ClipLabel, Examples) {
  EXPECT_EQ(clip_label(0), 0);
  EXPECT_EQ(clip_label(15), 4);
  EXPECT_EQ(clip_label(3), 2);
}

TEST(ClipLabel, AgreesWithFloorLog2AndSaturates) {
  int prev = 0;
  for (long long v = 0; v < 5000; ++v) {
    const int want = std::min(4, static_cast<int>(std::floor(std::log2(static_cast<double>(v) + 1.0))));
    const int got = clip_label(v);
    ASSERT_EQ(got, want) << v;
    ASSERT_GE(got, prev);
    prev = got;
    if (v >= 15) ASSERT_EQ(got, 4);
  }
}

namespace {

std::string product_line(const std::string& id) {
  return R"({"kind":"product","id":")" + id + R"(","sentences":[[1,2,3]],"images":[]})";
}

std::string review_line(const std::string& id, const std::string& pid, int votes, int label) {
  return R"({"kind":"review","id":")" + id + R"(","product_id":")" + pid + R"(","sentences":[[4,5]],"votes":)" +
         std::to_string(votes) + R"(,"label":)" + std::to_string(label) + "}";
}

std::filesystem::path write_lines(const std::string& name, const std::vector<std::string>& lines) {
  auto path = fixture::scratch_dir("corpus") / name;
  std::ofstream out(path);
  for (const auto& l : lines) out << l << '\n';
  return path;
}

}  // namespace

TEST(LoadDataset, PreservesCounts) {
  auto path = write_lines("ok.jsonl", {product_line("p1"), review_line("r1", "p1", 15, 4),
                                       review_line("r2", "p1", 0, 0)});
  const Dataset ds = load_dataset(path);
  ASSERT_EQ(ds.products.size(), 1u);
  EXPECT_EQ(ds.reviews("p1").size(), 2u);
  EXPECT_EQ(ds.review_count(), 2u);
}

TEST(LoadDataset, UnknownProductNamesReview) {
  auto path = write_lines("orphan.jsonl", {product_line("p1"), review_line("r9", "nope", 15, 4)});
  try {
    load_dataset(path);
    FAIL() << "expected an error";
  } catch (const InvariantError& e) {
    EXPECT_NE(std::string(e.what()).find("r9"), std::string::npos);
  }
}

TEST(LoadDataset, LabelMismatchReportsExpected) {
  auto path = write_lines("mismatch.jsonl", {product_line("p1"), review_line("r1", "p1", 15, 3),
                                             review_line("r2", "p1", 0, 0)});
  try {
    load_dataset(path);
    FAIL() << "expected an error";
  } catch (const InvariantError& e) {
    EXPECT_NE(std::string(e.what()).find("expected 4"), std::string::npos) << e.what();
  }
}

TEST(LoadDataset, MalformedLineReportsLineNumber) {
  auto path = write_lines("bad.jsonl", {product_line("p1"), "{not json"});
  try {
    load_dataset(path);
    FAIL() << "expected an error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadDataset, EmptySentenceRejected) {
  auto path = write_lines("empty.jsonl", {R"({"kind":"product","id":"p1","sentences":[[]],"images":[]})"});
  EXPECT_THROW(load_dataset(path, Split::test), InvariantError);
}

TEST(LoadDataset, TrainSplitNeedsBothPolarities) {
  auto path = write_lines("onesided.jsonl", {product_line("p1"), review_line("r1", "p1", 15, 4),
                                             review_line("r2", "p1", 15, 4)});
  EXPECT_THROW(load_dataset(path, Split::train), InvariantError);
  EXPECT_NO_THROW(load_dataset(path, Split::test));
}

TEST(Generator, RoundTripsThroughFiles) {
  GeneratorSpec spec;
  spec.n_products = 6;
  const Dataset ds = generate_synthetic(spec, 3);
  auto path = fixture::scratch_dir("roundtrip") / "all.jsonl";
  save_dataset(ds, path);
  const Dataset back = load_dataset(path);
  ASSERT_EQ(back.products.size(), ds.products.size());
  for (const auto& p : ds.products) {
    const auto& a = ds.reviews(p.id);
    const auto& b = back.reviews(p.id);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].sentences, b[i].sentences);
      ASSERT_EQ(a[i].images.size(), b[i].images.size());
      for (std::size_t k = 0; k < a[i].images.size(); ++k) EXPECT_EQ(a[i].images[k], b[i].images[k]);
    }
  }
}

namespace {

std::string file_bytes(const Dataset& ds, const std::string& name) {
  auto path = fixture::scratch_dir("bytes_" + name) / "d.jsonl";
  save_dataset(ds, path);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Generator, SeedDeterminism) {
  GeneratorSpec spec;
  EXPECT_EQ(file_bytes(generate_synthetic(spec, 7), "a"), file_bytes(generate_synthetic(spec, 7), "b"));
  EXPECT_NE(file_bytes(generate_synthetic(spec, 7), "c"), file_bytes(generate_synthetic(spec, 8), "d"));
}

TEST(Generator, ShapeAndLabelsFollowSpec) {
  GeneratorSpec spec;
  const Dataset ds = generate_synthetic(spec, 7);
  EXPECT_EQ(ds.products.size(), 50u);
  EXPECT_EQ(ds.review_count(), 500u);
  EXPECT_EQ(ds.region_dim(), spec.region_dim);
  EXPECT_LT(ds.max_token_id(), spec.vocab_size);
  for (const auto& p : ds.products)
    for (const auto& r : ds.reviews(p.id)) EXPECT_EQ(r.label, clip_label(r.votes));
  EXPECT_NO_THROW(validate(ds));
}

// Brute-force alignment statistic: mean cosine between review regions and the
// mean product region, grouped by label.
TEST(Generator, VisualAlignmentIncreasesWithLabel) {
  GeneratorSpec spec;
  const Dataset ds = generate_synthetic(spec, 7);
  std::map<int, std::pair<double, int>> by_label;
  for (const auto& p : ds.products) {
    RowVec center = RowVec::Zero(spec.region_dim);
    int n = 0;
    for (const auto& im : p.images)
      for (Eigen::Index i = 0; i < im.rows(); ++i, ++n) center += im.row(i);
    center /= n;
    for (const auto& r : ds.reviews(p.id))
      for (const auto& im : r.images)
        for (Eigen::Index i = 0; i < im.rows(); ++i) {
          const double c = im.row(i).dot(center) / (im.row(i).norm() * center.norm());
          by_label[r.label].first += c;
          by_label[r.label].second += 1;
        }
  }
  ASSERT_TRUE(by_label.count(0) && by_label.count(4));
  double prev = -2.0;
  for (const auto& [label, acc] : by_label) {
    const double mean = acc.first / acc.second;
    EXPECT_GT(mean, prev) << "label " << label;
    prev = mean;
  }
  EXPECT_GT(by_label[4].first / by_label[4].second, by_label[0].first / by_label[0].second);
}

TEST(Generator, TextOverlapIncreasesWithLabel) {
  GeneratorSpec spec;
  const Dataset ds = generate_synthetic(spec, 7);
  std::map<int, std::pair<double, int>> by_label;
  for (const auto& p : ds.products) {
    std::set<int> vocab;
    for (const auto& s : p.sentences) vocab.insert(s.begin(), s.end());
    for (const auto& r : ds.reviews(p.id)) {
      int shared = 0, total = 0;
      for (const auto& s : r.sentences)
        for (int t : s) {
          shared += vocab.count(t) ? 1 : 0;
          ++total;
        }
      by_label[r.label].first += static_cast<double>(shared) / total;
      by_label[r.label].second += 1;
    }
  }
  double prev = -1.0;
  for (const auto& [label, acc] : by_label) {
    EXPECT_GT(acc.first / acc.second, prev) << "label " << label;
    prev = acc.first / acc.second;
  }
}

TEST(Generator, RejectsTooSmallRegionDim) {
  GeneratorSpec spec;
  spec.region_dim = 4;
  EXPECT_THROW(generate_synthetic(spec, 1), ConfigError);
}

TEST(Split, DisjointAndProportional) {
  GeneratorSpec spec;
  const Dataset ds = generate_synthetic(spec, 7);
  const DatasetSplits s = split_dataset(ds, 0.7, 0.15, 7);
  std::set<std::string> seen;
  for (const Dataset* d : {&s.train, &s.dev, &s.test})
    for (const auto& p : d->products) EXPECT_TRUE(seen.insert(p.id).second) << p.id;
  EXPECT_EQ(seen.size(), 50u);
  EXPECT_NEAR(static_cast<double>(s.train.products.size()), 35.0, 1.0);
  EXPECT_NEAR(static_cast<double>(s.dev.products.size()), 7.5, 1.0);
}

TEST(Batch, Counts) {
  GeneratorSpec spec;
  const Dataset ds = generate_synthetic(spec, 7);
  Rng rng(1);
  Batch b = sample_batch(ds, 2, 1, rng);
  ASSERT_EQ(b.entries.size(), 2u);
  int reviews = 0;
  for (const auto& e : b.entries) reviews += 1 + static_cast<int>(e.negatives.size());
  EXPECT_EQ(reviews, 4);

  b = sample_batch(ds, 32, 3, rng);
  ASSERT_EQ(b.entries.size(), 32u);
  reviews = 0;
  for (const auto& e : b.entries) reviews += 1 + static_cast<int>(e.negatives.size());
  EXPECT_EQ(reviews, 128);
}

TEST(Batch, PolarityAndDistinctProducts) {
  GeneratorSpec spec;
  const Dataset ds = generate_synthetic(spec, 7);
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    Batch b = sample_batch(ds, 8, 3, rng);
    std::set<std::string> products;
    for (const auto& e : b.entries) {
      EXPECT_TRUE(products.insert(e.product->id).second);
      EXPECT_GT(e.positive->label, kPositiveThreshold);
      std::set<std::string> negs;
      for (const Review* n : e.negatives) {
        EXPECT_LE(n->label, kPositiveThreshold);
        EXPECT_EQ(n->product_id, e.product->id);
        EXPECT_TRUE(negs.insert(n->id).second);
      }
    }
  }
}

TEST(Batch, RngStateDeterminism) {
  GeneratorSpec spec;
  const Dataset ds = generate_synthetic(spec, 7);
  auto ids = [](const Batch& b) {
    std::vector<std::string> out;
    for (const auto& e : b.entries) {
      out.push_back(e.positive->id);
      for (const Review* n : e.negatives) out.push_back(n->id);
    }
    return out;
  };
  Rng rng(9);
  const auto first = ids(sample_batch(ds, 8, 3, rng));
  const auto second = ids(sample_batch(ds, 8, 3, rng));
  EXPECT_NE(first, second);
  Rng reset(9);
  EXPECT_EQ(ids(sample_batch(ds, 8, 3, reset)), first);
}

TEST(Batch, OversizedRequestFails) {
  GeneratorSpec spec;
  spec.n_products = 3;
  const Dataset ds = generate_synthetic(spec, 7);
  Rng rng(1);
  EXPECT_THROW(sample_batch(ds, 4, 1, rng), std::invalid_argument);
}
