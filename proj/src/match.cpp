#include "premise/match.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace premise {

namespace {

Vec clamped_norms(const Mat& m) { return m.rowwise().norm().cwiseMax(kCosineEps); }

}  // namespace

Mat cosine_matrix(const Mat& a, const Mat& b) {
  if (a.rows() > 0 && b.rows() > 0 && a.cols() != b.cols())
    throw std::invalid_argument("cosine_matrix dimension mismatch");
  thread_op_counts().cosine_macs += static_cast<std::uint64_t>(a.rows() * b.rows() * a.cols());
  if (a.rows() == 0 || b.rows() == 0) return Mat(a.rows(), b.rows());
  Mat an = a.array().colwise() / clamped_norms(a).array();
  Mat bn = b.array().colwise() / clamped_norms(b).array();
  return an * bn.transpose();
}

void cosine_matrix_backward(const Mat& a, const Mat& b, const Mat& d_s, Mat& d_a, Mat& d_b) {
  if (a.rows() == 0 || b.rows() == 0) return;
  const Vec na = clamped_norms(a), nb = clamped_norms(b);
  Mat an = a.array().colwise() / na.array();
  Mat bn = b.array().colwise() / nb.array();
  Mat d_an = d_s * bn;
  Mat d_bn = d_s.transpose() * an;
  // through the row normalization x / |x|; constant denominator where clamped
  auto through_norm = [](const Mat& x, const Mat& xn, const Vec& norms, const Mat& d_xn, Mat& d_x) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (x.row(i).norm() > kCosineEps)
        d_x.row(i) += (d_xn.row(i) - d_xn.row(i).dot(xn.row(i)) * xn.row(i)) / norms(i);
      else
        d_x.row(i) += d_xn.row(i) / norms(i);
    }
  };
  through_norm(a, an, na, d_an, d_a);
  through_norm(b, bn, nb, d_bn, d_b);
}

ScoreList collect_scores(const PairFeatures& pf) {
  ScoreList out;
  Eigen::Index total = 0;
  for (std::size_t k = 0; k < kScoreBlocks.size(); ++k) {
    out.blocks[k] = cosine_matrix(pf[kScoreBlocks[k].left], pf[kScoreBlocks[k].right]);
    out.offset[k] = total;
    total += out.blocks[k].size();
  }
  out.scores.resize(total);
  for (std::size_t k = 0; k < kScoreBlocks.size(); ++k) {
    const Mat& blk = out.blocks[k];
    for (Eigen::Index i = 0; i < blk.rows(); ++i)
      for (Eigen::Index j = 0; j < blk.cols(); ++j)
        out.scores(out.offset[k] + i * blk.cols() + j) = blk(i, j);
  }
  return out;
}

MatchingFeature topk_select(const Vec& scores, int K) {
  if (K < 1) throw std::invalid_argument("K must be at least 1");
  const Eigen::Index n = scores.size();
  const Eigen::Index take = std::min<Eigen::Index>(K, n);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  auto before = [&](Eigen::Index x, Eigen::Index y) {
    return scores(x) > scores(y) || (scores(x) == scores(y) && x < y);
  };
  std::partial_sort(idx.begin(), idx.begin() + take, idx.end(), before);

  MatchingFeature mf;
  mf.h = Vec::Constant(K, MatchingFeature::pad_value);
  mf.selection.assign(static_cast<std::size_t>(K), ScoreSlot{});
  for (Eigen::Index s = 0; s < take; ++s) {
    mf.h(s) = scores(idx[s]);
    mf.selection[s].flat = idx[s];
  }
  return mf;
}

void locate(MatchingFeature& mf, const ScoreList& list) {
  for (auto& slot : mf.selection) {
    if (slot.flat < 0) continue;
    int k = 2;
    while (k > 0 && slot.flat < list.offset[k]) --k;
    const Eigen::Index local = slot.flat - list.offset[k];
    const Eigen::Index cols = list.blocks[k].cols();
    slot.block = k;
    slot.row = local / cols;
    slot.col = local % cols;
  }
}

Vec topk_backward(const MatchingFeature& mf, const Vec& d_h, Eigen::Index n_scores) {
  Vec d = Vec::Zero(n_scores);
  for (std::size_t s = 0; s < mf.selection.size(); ++s)
    if (mf.selection[s].flat >= 0) d(mf.selection[s].flat) += d_h(static_cast<Eigen::Index>(s));
  return d;
}

PredictionHead PredictionHead::zeros(int K) { return {Mat::Zero(1, K), Mat::Zero(1, 1)}; }

double head_logit(const PredictionHead& head, const Vec& h) {
  if (h.size() != head.weight.cols()) throw std::invalid_argument("feature length does not match head");
  return head.weight.row(0).dot(h) + head.bias(0, 0);
}

double predict(const PredictionHead& head, const Vec& h) {
  return 1.0 / (1.0 + std::exp(-head_logit(head, h)));
}

}  // namespace premise
