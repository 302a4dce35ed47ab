#pragma once

#include <string>
#include <vector>

#include "premise/common.hpp"
#include "premise/refine.hpp"

namespace premise {

// One pre-norm transformer encoder layer with a learned aggregation token:
//   X0 = [cls; seq],  X1 = X0 + MHA(LN1(X0)),  X2 = X1 + FFN(LN2(X1))
// FFN is GELU(x W1 + b1) W2 + b2 with inner width 4d.
struct EncoderLayerParams {
  int n_heads = 1;
  Mat cls;             // 1 x d
  Mat ln1_g, ln1_b;    // 1 x d
  Mat w_q, w_k, w_v, w_o;  // d x d
  Mat b_q, b_k, b_v, b_o;  // 1 x d
  Mat ln2_g, ln2_b;
  Mat w_1, b_1;  // d x 4d, 1 x 4d
  Mat w_2, b_2;  // 4d x d, 1 x d

  int dim() const { return static_cast<int>(cls.cols()); }

  static EncoderLayerParams random(int dim, int n_heads, Rng& rng);

  template <class Self, class Fn>
  static void visit(Self& s, Fn&& fn) {
    fn("cls", s.cls);
    fn("ln1_g", s.ln1_g); fn("ln1_b", s.ln1_b);
    fn("w_q", s.w_q); fn("b_q", s.b_q);
    fn("w_k", s.w_k); fn("b_k", s.b_k);
    fn("w_v", s.w_v); fn("b_v", s.b_v);
    fn("w_o", s.w_o); fn("b_o", s.b_o);
    fn("ln2_g", s.ln2_g); fn("ln2_b", s.ln2_b);
    fn("w_1", s.w_1); fn("b_1", s.b_1);
    fn("w_2", s.w_2); fn("b_2", s.b_2);
  }
};

struct LayerNormCache {
  Mat xhat;
  Vec inv_std;
};

struct EncoderLayerCache {
  Mat x0, a, q, k, v, o, x1, b, h, g;
  std::vector<Mat> probs;  // per head, (n+1) x (n+1)
  LayerNormCache ln1, ln2;
};

struct LayerOutput {
  RowVec head;
  Mat body;
};

LayerOutput encoder_layer(const EncoderLayerParams& params, const Mat& seq,
                          EncoderLayerCache* cache = nullptr);
// Returns dL/dseq and accumulates into `grads`.
Mat encoder_layer_backward(const EncoderLayerParams& params, const EncoderLayerCache& cache,
                           const RowVec& d_head, const Mat& d_body, EncoderLayerParams& grads);

struct AggregateOutput {
  std::vector<RowVec> next_scale;
  std::vector<Mat> same_scale;
};

// One shared parameter set applied to every sequence (block) of a layer.
AggregateOutput aggregate_layer(const EncoderLayerParams& params, const std::vector<Mat>& sequences,
                                std::vector<EncoderLayerCache>* caches = nullptr);

struct AggregationStack {
  std::vector<EncoderLayerParams> layers;

  static AggregationStack random(int dim, int n_heads, int n_layers, Rng& rng);
};

enum class Field { product, review };
enum class Modality { text, vision };
enum class FeatureKind { ngram_token, sentence, ngram_sentence, ngram_roi, image, ngram_image, document };

const char* to_string(Field f);
const char* to_string(Modality m);
const char* to_string(FeatureKind k);
FeatureKind feature_kind_from_string(const std::string& name);
int scale_of(FeatureKind k);

struct FeatureSet {
  Field field = Field::product;
  Modality modality = Modality::text;
  FeatureKind kind = FeatureKind::ngram_token;
  Mat vectors;  // n x d, n may be 0
};

struct StreamConfig {
  bool positional_encoding = true;
  double positional_scale = 0.1;
  bool vision_layer2 = false;
  bool refine_enabled = true;
  RefineConfig refine;
};

// Sinusoidal table, n x d, with the usual 10000^(2i/d) wavelengths.
Mat sinusoidal_encoding(Eigen::Index n, int dim);

struct StreamCache {
  Modality modality = Modality::text;
  std::vector<EncoderLayerCache> layer1;
  std::vector<Eigen::Index> body_rows;
  Mat low_scale;  // concatenated layer-1 bodies before refinement
  bool refined = false;
  RefineOutcome refine;
  bool has_layer2 = false;
  EncoderLayerCache layer2;
};

// Text: scale0 holds one matrix per sentence and yields
//   [ngram_token, sentence, ngram_sentence, document] (last two need 2 layers).
// Vision: one matrix per image, yields [ngram_roi, image] and, when
// vision_layer2 is set, [ngram_image, document].
std::vector<FeatureSet> run_stream(const AggregationStack& stack, const std::vector<Mat>& scale0,
                                   Field field, Modality modality, const StreamConfig& cfg, Rng& rng,
                                   StreamCache* cache = nullptr);

// d_sets aligns with the sets returned by run_stream; returns one gradient per scale0 input.
std::vector<Mat> run_stream_backward(const AggregationStack& stack, const StreamCache& cache,
                                     const std::vector<Mat>& d_sets, AggregationStack& grads);

}  // namespace premise
