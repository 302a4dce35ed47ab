#include <gtest/gtest.h>

#include <fstream>

#include "premise/encoder.hpp"
#include "test_util.hpp"

using namespace premise;
using fixture::max_rel_error;
using fixture::random_mat;

TEST(Embedding, RepeatedIdsGiveIdenticalRows) {
  Rng rng(1);
  const EmbeddingTable t = EmbeddingTable::random(10, 4, rng);
  const std::vector<int> ids{0, 0, 0};
  const Mat out = embed_tokens(t, ids);
  ASSERT_EQ(out.rows(), 3);
  EXPECT_EQ(out.row(0), out.row(1));
  EXPECT_EQ(out.row(1), out.row(2));
}

TEST(Embedding, OneHotTableSelectsBasisRows) {
  EmbeddingTable t;
  t.rows = Mat::Identity(8, 8);
  const std::vector<int> ids{2, 5};
  const Mat out = embed_tokens(t, ids);
  EXPECT_EQ(out.row(0), RowVec::Unit(8, 2));
  EXPECT_EQ(out.row(1), RowVec::Unit(8, 5));
}

TEST(Embedding, OutOfRangeIdRejected) {
  Rng rng(1);
  const EmbeddingTable t = EmbeddingTable::random(10, 4, rng);
  const std::vector<int> ids{1, 10};
  EXPECT_THROW(embed_tokens(t, ids), std::out_of_range);
}

TEST(Embedding, BackwardScattersRows) {
  const std::vector<int> ids{3, 1, 3};
  Mat d_out(3, 2);
  d_out << 1, 2, 3, 4, 5, 6;
  Mat d_rows = Mat::Zero(5, 2);
  embed_tokens_backward(ids, d_out, d_rows);
  EXPECT_EQ(d_rows.row(3), RowVec((RowVec(2) << 6, 8).finished()));
  EXPECT_EQ(d_rows.row(1), RowVec((RowVec(2) << 3, 4).finished()));
  EXPECT_EQ(d_rows.row(0).norm(), 0.0);
}

TEST(Embedding, LoadsOneTokenPerLine) {
  auto path = fixture::scratch_dir("emb") / "e.txt";
  {
    std::ofstream out(path);
    out << "0.5 1 -2\n1.5 0 0.25\n";
  }
  const EmbeddingTable t = EmbeddingTable::load(path);
  ASSERT_EQ(t.vocab_size(), 2);
  ASSERT_EQ(t.dim(), 3);
  EXPECT_DOUBLE_EQ(t.rows(0, 2), -2.0);
  EXPECT_DOUBLE_EQ(t.rows(1, 2), 0.25);
}

TEST(Gru, ZeroParametersGiveZeroStates) {
  Rng rng(2);
  const GruParams p = GruParams::zeros(5, 6);
  const Mat out = gru_contextualize(p, random_mat(7, 5, rng));
  ASSERT_EQ(out.rows(), 7);
  ASSERT_EQ(out.cols(), 6);
  EXPECT_EQ(out.norm(), 0.0);
}

TEST(Gru, SingleTokenShape) {
  Rng rng(3);
  const GruParams p = GruParams::random(5, 6, rng);
  const Mat out = gru_contextualize(p, random_mat(1, 5, rng));
  EXPECT_EQ(out.rows(), 1);
  EXPECT_EQ(out.cols(), 6);
}

TEST(Gru, RejectsNonFiniteInput) {
  Rng rng(3);
  const GruParams p = GruParams::random(2, 3, rng);
  Mat x = random_mat(2, 2, rng);
  x(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(gru_contextualize(p, x), std::domain_error);
}

TEST(Gru, MatchesHandRecurrence) {
  Rng rng(4);
  const GruParams p = GruParams::random(3, 4, rng);
  const Mat x = random_mat(3, 3, rng);
  const Mat out = gru_contextualize(p, x);
  auto sig = [](const RowVec& v) { return RowVec((1.0 / (1.0 + (-v.array()).exp())).matrix()); };
  RowVec h = RowVec::Zero(4);
  for (int t = 0; t < 3; ++t) {
    const RowVec xt = x.row(t);
    const RowVec z = sig(xt * p.w_z + h * p.u_z + p.b_z);
    const RowVec r = sig(xt * p.w_r + h * p.u_r + p.b_r);
    const RowVec n = (xt * p.w_n + (r.array() * h.array()).matrix() * p.u_n + p.b_n).array().tanh().matrix();
    h = ((1.0 - z.array()) * n.array() + z.array() * h.array()).matrix();
    EXPECT_LT((out.row(t) - h).norm(), 1e-12) << t;
  }
}

TEST(Gru, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  GruParams p = GruParams::random(3, 4, rng);
  Mat x = random_mat(3, 3, rng);
  const Mat w = random_mat(3, 4, rng);
  auto loss = [&]() { return (gru_contextualize(p, x).array() * w.array()).sum(); };

  GruCache cache;
  gru_contextualize(p, x, &cache);
  GruParams g = GruParams::zeros(3, 4);
  const Mat dx = gru_backward(p, cache, w, g);
  EXPECT_LT(max_rel_error(x, dx, loss), 1e-4);
  std::vector<Mat*> params, grads;
  GruParams::visit(p, [&](const char*, Mat& m) { params.push_back(&m); });
  GruParams::visit(g, [&](const char*, Mat& m) { grads.push_back(&m); });
  for (std::size_t i = 0; i < params.size(); ++i) EXPECT_LT(max_rel_error(*params[i], *grads[i], loss), 1e-4) << i;
}

TEST(VisualProjection, IdentityAndConstant) {
  Rng rng(6);
  const Mat x = random_mat(3, 5, rng);
  VisualProjection id{Mat::Identity(5, 5), Mat::Zero(1, 5)};
  EXPECT_LT((project_visual(id, x) - x).norm(), 1e-15);
  VisualProjection c{Mat::Zero(4, 5), random_mat(1, 4, rng)};
  const Mat out = project_visual(c, x);
  for (Eigen::Index i = 0; i < out.rows(); ++i) EXPECT_EQ(out.row(i), c.bias.row(0));
}

TEST(VisualProjection, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  VisualProjection p = VisualProjection::random(5, 4, rng);
  Mat x = random_mat(3, 5, rng);
  const Mat w = random_mat(3, 4, rng);
  auto loss = [&]() { return (project_visual(p, x).array() * w.array()).sum(); };
  VisualProjection g{Mat::Zero(4, 5), Mat::Zero(1, 4)};
  const Mat dx = project_visual_backward(p, x, w, g);
  EXPECT_LT(max_rel_error(x, dx, loss), 1e-4);
  EXPECT_LT(max_rel_error(p.weight, g.weight, loss), 1e-4);
  EXPECT_LT(max_rel_error(p.bias, g.bias, loss), 1e-4);
}
