#pragma once

#include <filesystem>
#include <span>
#include <string_view>

#include "premise/common.hpp"

namespace premise {

struct EmbeddingTable {
  Mat rows;  // vocab_size x d_e
  bool trainable = true;

  int vocab_size() const { return static_cast<int>(rows.rows()); }
  int dim() const { return static_cast<int>(rows.cols()); }

  static EmbeddingTable random(int vocab_size, int dim, Rng& rng);
  // Whitespace-separated floats, one token per line; line number is the token id.
  static EmbeddingTable load(const std::filesystem::path& path);
};

Mat embed_tokens(const EmbeddingTable& table, std::span<const int> ids);
void embed_tokens_backward(std::span<const int> ids, const Mat& d_out, Mat& d_rows);

// Single-direction GRU, zero initial state:
//   z = sig(x Wz + h Uz + bz), r = sig(x Wr + h Ur + br)
//   n = tanh(x Wn + (r*h) Un + bn),  h' = (1 - z) * n + z * h
struct GruParams {
  Mat w_z, w_r, w_n;  // d_e x d
  Mat u_z, u_r, u_n;  // d x d
  Mat b_z, b_r, b_n;  // 1 x d

  int input_dim() const { return static_cast<int>(w_z.rows()); }
  int hidden_dim() const { return static_cast<int>(w_z.cols()); }

  static GruParams random(int input_dim, int hidden_dim, Rng& rng);
  static GruParams zeros(int input_dim, int hidden_dim);

  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    fn("w_z", self.w_z); fn("w_r", self.w_r); fn("w_n", self.w_n);
    fn("u_z", self.u_z); fn("u_r", self.u_r); fn("u_n", self.u_n);
    fn("b_z", self.b_z); fn("b_r", self.b_r); fn("b_n", self.b_n);
  }
};

struct GruCache {
  Mat x;  // l x d_e
  Mat h;  // (l + 1) x d, row 0 is the initial state
  Mat z, r, n;
};

Mat gru_contextualize(const GruParams& params, const Mat& x, GruCache* cache = nullptr);
// Accumulates parameter gradients into `grads`; returns dL/dx.
Mat gru_backward(const GruParams& params, const GruCache& cache, const Mat& d_out, GruParams& grads);

struct VisualProjection {
  Mat weight;  // d x d_v
  Mat bias;    // 1 x d

  static VisualProjection random(int region_dim, int dim, Rng& rng);

  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    fn("weight", self.weight);
    fn("bias", self.bias);
  }
};

Mat project_visual(const VisualProjection& proj, const Mat& regions);
Mat project_visual_backward(const VisualProjection& proj, const Mat& regions, const Mat& d_out,
                            VisualProjection& grads);

}  // namespace premise
