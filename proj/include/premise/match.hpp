#pragma once

#include <array>
#include <vector>

#include "premise/common.hpp"
#include "premise/msmn.hpp"

namespace premise {

inline constexpr double kCosineEps = 1e-8;

// S(i,j) = <A_i, B_j> / (max(|A_i|, eps) * max(|B_j|, eps))
Mat cosine_matrix(const Mat& a, const Mat& b);
// Accumulates into d_a / d_b (pre-sized like a / b).
void cosine_matrix_backward(const Mat& a, const Mat& b, const Mat& d_s, Mat& d_a, Mat& d_b);

// Where a row of a PairFeatures matrix came from.
struct RowSource {
  FeatureKind kind = FeatureKind::ngram_token;
  int set = 0;  // index into the stream's feature-set list
  int row = 0;
};

enum class PairMatrix { text_product = 0, text_review = 1, vision_product = 2, vision_review = 3 };

struct PairFeatures {
  std::array<Mat, 4> rows;  // indexed by PairMatrix
  std::array<std::vector<RowSource>, 4> provenance;

  const Mat& operator[](PairMatrix m) const { return rows[static_cast<int>(m)]; }
  Eigen::Index count(PairMatrix m) const { return rows[static_cast<int>(m)].rows(); }
};

// The three matched blocks, in flattening order.
struct ScoreBlock {
  PairMatrix left;
  PairMatrix right;
};
inline constexpr std::array<ScoreBlock, 3> kScoreBlocks = {{
    {PairMatrix::text_product, PairMatrix::text_review},
    {PairMatrix::text_review, PairMatrix::vision_review},
    {PairMatrix::vision_product, PairMatrix::vision_review},
}};

struct ScoreList {
  Vec scores;
  std::array<Mat, 3> blocks;          // cosine matrices
  std::array<Eigen::Index, 3> offset{};  // flat offset of each block
};

// Row-major flattening of the three blocks; length n1n2 + n2n4 + n3n4.
ScoreList collect_scores(const PairFeatures& pf);

struct ScoreSlot {
  int block = -1;  // -1 marks a PAD slot
  Eigen::Index row = -1;
  Eigen::Index col = -1;
  Eigen::Index flat = -1;
};

struct MatchingFeature {
  static constexpr double pad_value = -1.0;
  Vec h;  // K values, non-increasing over the non-pad prefix
  std::vector<ScoreSlot> selection;
};

// K largest scores, descending; ties go to the lower flat index; short lists pad with -1.
MatchingFeature topk_select(const Vec& scores, int K);
// Fills block/row/col of each selected slot.
void locate(MatchingFeature& mf, const ScoreList& list);
// Scatters dL/dh onto the flat score vector: selected slots pass through, PAD is dropped.
Vec topk_backward(const MatchingFeature& mf, const Vec& d_h, Eigen::Index n_scores);

struct PredictionHead {
  Mat weight;  // 1 x K
  Mat bias;    // 1 x 1

  static PredictionHead zeros(int K);

  template <class Self, class Fn>
  static void visit(Self& s, Fn&& fn) {
    fn("weight", s.weight);
    fn("bias", s.bias);
  }
};

double head_logit(const PredictionHead& head, const Vec& h);
double predict(const PredictionHead& head, const Vec& h);

}  // namespace premise
