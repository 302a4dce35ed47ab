#include <gtest/gtest.h>

#include "premise/msmn.hpp"
#include "test_util.hpp"

using namespace premise;
using fixture::max_rel_error;
using fixture::random_mat;

namespace {

EncoderLayerParams zeros_like(const EncoderLayerParams& p) {
  EncoderLayerParams z = p;
  EncoderLayerParams::visit(z, [](const char*, Mat& m) { m.setZero(); });
  return z;
}

AggregationStack zeros_like(const AggregationStack& s) {
  AggregationStack z = s;
  for (auto& l : z.layers) l = zeros_like(l);
  return z;
}

}  // namespace

TEST(EncoderLayer, Shapes) {
  Rng rng(1);
  const auto p = EncoderLayerParams::random(8, 4, rng);
  const LayerOutput out = encoder_layer(p, random_mat(5, 8, rng));
  EXPECT_EQ(out.head.cols(), 8);
  EXPECT_EQ(out.body.rows(), 5);
  EXPECT_EQ(out.body.cols(), 8);
}

TEST(EncoderLayer, PermutationEquivariance) {
  Rng rng(2);
  const auto p = EncoderLayerParams::random(8, 4, rng);
  const Mat x = random_mat(5, 8, rng);
  const std::vector<int> perm{3, 0, 4, 1, 2};
  Mat xp(5, 8);
  for (int i = 0; i < 5; ++i) xp.row(i) = x.row(perm[i]);
  const LayerOutput a = encoder_layer(p, x);
  const LayerOutput b = encoder_layer(p, xp);
  EXPECT_LT((a.head - b.head).norm(), 1e-12);
  for (int i = 0; i < 5; ++i) EXPECT_LT((b.body.row(i) - a.body.row(perm[i])).norm(), 1e-12);
}

TEST(EncoderLayer, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  auto p = EncoderLayerParams::random(4, 2, rng);
  Mat x = random_mat(3, 4, rng);
  const RowVec wh = random_mat(1, 4, rng);
  const Mat wb = random_mat(3, 4, rng);
  auto loss = [&]() {
    const LayerOutput o = encoder_layer(p, x);
    return o.head.dot(wh) + (o.body.array() * wb.array()).sum();
  };
  EncoderLayerCache cache;
  encoder_layer(p, x, &cache);
  auto g = zeros_like(p);
  const Mat dx = encoder_layer_backward(p, cache, wh, wb, g);
  EXPECT_LT(max_rel_error(x, dx, loss), 1e-4);
  std::vector<std::pair<std::string, Mat*>> params;
  std::vector<Mat*> grads;
  EncoderLayerParams::visit(p, [&](const char* n, Mat& m) { params.push_back({n, &m}); });
  EncoderLayerParams::visit(g, [&](const char*, Mat& m) { grads.push_back(&m); });
  for (std::size_t i = 0; i < params.size(); ++i)
    EXPECT_LT(max_rel_error(*params[i].second, *grads[i], loss), 1e-4) << params[i].first;
}

TEST(EncoderLayer, AttentionCountClosedForm) {
  Rng rng(4);
  const auto p = EncoderLayerParams::random(8, 2, rng);
  const Mat x = random_mat(10, 8, rng);
  reset_thread_op_counts();
  encoder_layer(p, x);
  // scores (n+1)^2 d plus weighted values (n+1)^2 d
  EXPECT_EQ(thread_op_counts().attention_macs, 2u * 11u * 11u * 8u);
  EXPECT_EQ(thread_op_counts().cosine_macs, 0u);
}

TEST(AggregateLayer, CountsPerSequence) {
  Rng rng(5);
  const auto p = EncoderLayerParams::random(16, 4, rng);
  const std::vector<Mat> seqs{random_mat(4, 16, rng), random_mat(6, 16, rng), random_mat(5, 16, rng)};
  const AggregateOutput out = aggregate_layer(p, seqs);
  ASSERT_EQ(out.next_scale.size(), 3u);
  ASSERT_EQ(out.same_scale.size(), 3u);
  Eigen::Index rows = 0;
  for (const auto& m : out.same_scale) rows += m.rows();
  EXPECT_EQ(rows, 15);

  const AggregateOutput one = aggregate_layer(p, {seqs[0]});
  EXPECT_EQ(one.next_scale.size(), 1u);
  EXPECT_EQ(one.same_scale.size(), 1u);
}

TEST(AggregateLayer, SharedParametersGiveIdenticalHeads) {
  Rng rng(6);
  const auto p = EncoderLayerParams::random(8, 2, rng);
  const Mat s = random_mat(4, 8, rng);
  const AggregateOutput out = aggregate_layer(p, {s, s});
  EXPECT_EQ(out.next_scale[0], out.next_scale[1]);
}

namespace {

const FeatureSet* find(const std::vector<FeatureSet>& sets, FeatureKind k) {
  for (const auto& s : sets)
    if (s.kind == k) return &s;
  return nullptr;
}

}  // namespace

TEST(Stream, TextFeatureCountsWithoutRefinement) {
  Rng rng(7);
  const auto stack = AggregationStack::random(8, 2, 2, rng);
  StreamConfig cfg;
  cfg.refine_enabled = false;
  const auto sets = run_stream(stack, {random_mat(3, 8, rng), random_mat(4, 8, rng)}, Field::product,
                               Modality::text, cfg, rng);
  ASSERT_NE(find(sets, FeatureKind::ngram_token), nullptr);
  EXPECT_EQ(find(sets, FeatureKind::ngram_token)->vectors.rows(), 7);
  EXPECT_EQ(find(sets, FeatureKind::sentence)->vectors.rows(), 2);
  EXPECT_EQ(find(sets, FeatureKind::ngram_sentence)->vectors.rows(), 2);
  EXPECT_EQ(find(sets, FeatureKind::document)->vectors.rows(), 1);
  for (const auto& s : sets) EXPECT_EQ(s.vectors.cols(), 8);
}

TEST(Stream, NoImagesGivesEmptyVisionSets) {
  Rng rng(8);
  const auto stack = AggregationStack::random(8, 2, 2, rng);
  StreamConfig cfg;
  cfg.vision_layer2 = true;
  const auto sets = run_stream(stack, {}, Field::review, Modality::vision, cfg, rng);
  for (const auto& s : sets) EXPECT_EQ(s.vectors.rows(), 0) << to_string(s.kind);
}

TEST(Stream, VisionKinds) {
  Rng rng(9);
  const auto stack = AggregationStack::random(8, 2, 2, rng);
  StreamConfig cfg;
  cfg.refine_enabled = false;
  const std::vector<Mat> images{random_mat(4, 8, rng), random_mat(3, 8, rng)};
  auto sets = run_stream(stack, images, Field::product, Modality::vision, cfg, rng);
  EXPECT_EQ(find(sets, FeatureKind::ngram_roi)->vectors.rows(), 7);
  EXPECT_EQ(find(sets, FeatureKind::image)->vectors.rows(), 2);
  EXPECT_EQ(find(sets, FeatureKind::ngram_image), nullptr);
  cfg.vision_layer2 = true;
  sets = run_stream(stack, images, Field::product, Modality::vision, cfg, rng);
  EXPECT_EQ(find(sets, FeatureKind::ngram_image)->vectors.rows(), 2);
  EXPECT_EQ(find(sets, FeatureKind::document)->vectors.rows(), 1);
}

TEST(Stream, RefinementCapsTokenRepresentations) {
  Rng rng(10);
  const auto stack = AggregationStack::random(8, 2, 2, rng);
  StreamConfig cfg;
  cfg.refine.centers = 10;
  cfg.refine.cluster_size = 4;
  std::vector<Mat> sentences;
  for (int i = 0; i < 6; ++i) sentences.push_back(random_mat(10, 8, rng));
  const auto sets = run_stream(stack, sentences, Field::review, Modality::text, cfg, rng);
  EXPECT_EQ(find(sets, FeatureKind::ngram_token)->vectors.rows(), 10);
  EXPECT_EQ(find(sets, FeatureKind::sentence)->vectors.rows(), 6);
}

TEST(Stream, SinusoidalTable) {
  const Mat pe = sinusoidal_encoding(3, 4);
  EXPECT_DOUBLE_EQ(pe(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(pe(0, 1), 1.0);
  EXPECT_NEAR(pe(1, 0), std::sin(1.0), 1e-15);
  EXPECT_NEAR(pe(2, 2), std::sin(2.0 / 100.0), 1e-15);
  EXPECT_NEAR(pe(2, 3), std::cos(2.0 / 100.0), 1e-15);
}

// Gradient of a weighted sum of every feature set w.r.t. the scale-0 inputs
// and stack parameters, for each refinement branch.
class StreamGradient : public ::testing::TestWithParam<std::pair<int, Modality>> {};

TEST_P(StreamGradient, MatchesFiniteDifferences) {
  const auto [rows_per_block, modality] = GetParam();
  Rng rng(11);
  auto stack = AggregationStack::random(4, 2, 2, rng);
  StreamConfig cfg;
  cfg.refine.centers = 3;
  cfg.refine.cluster_size = 2;
  cfg.vision_layer2 = true;
  std::vector<Mat> x{random_mat(rows_per_block, 4, rng), random_mat(rows_per_block + 1, 4, rng)};

  std::vector<Mat> weights;
  auto loss = [&]() {
    Rng r(99);
    const auto sets = run_stream(stack, x, Field::product, modality, cfg, r);
    double total = 0.0;
    for (std::size_t i = 0; i < sets.size(); ++i) total += (sets[i].vectors.array() * weights[i].array()).sum();
    return total;
  };
  Rng r(99);
  StreamCache cache;
  const auto sets = run_stream(stack, x, Field::product, modality, cfg, r, &cache);
  for (const auto& s : sets) weights.push_back(random_mat(s.vectors.rows(), s.vectors.cols(), rng));
  AggregationStack g = zeros_like(stack);
  const auto dx = run_stream_backward(stack, cache, weights, g);
  ASSERT_EQ(dx.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LT(max_rel_error(x[i], dx[i], loss), 1e-4) << "input " << i;
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    std::vector<Mat*> ps, gs;
    EncoderLayerParams::visit(stack.layers[l], [&](const char*, Mat& m) { ps.push_back(&m); });
    EncoderLayerParams::visit(g.layers[l], [&](const char*, Mat& m) { gs.push_back(&m); });
    for (std::size_t i = 0; i < ps.size(); ++i) EXPECT_LT(max_rel_error(*ps[i], *gs[i], loss), 1e-4);
  }
}

// 2+3 rows: passthrough at C=3 would need <=3, so: 1+2 = passthrough,
// 2+3 = sampled (5 <= 6), 4+5 = clustered (9 > 6).
INSTANTIATE_TEST_SUITE_P(Branches, StreamGradient,
                         ::testing::Values(std::pair{1, Modality::text}, std::pair{2, Modality::text},
                                           std::pair{4, Modality::text}, std::pair{4, Modality::vision}));
