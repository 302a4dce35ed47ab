#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "premise/corpus.hpp"
#include "premise/encoder.hpp"
#include "premise/match.hpp"
#include "premise/msmn.hpp"
#include "premise/refine.hpp"

namespace premise {

// Which feature kinds enter the matching matrices.
class KindMask {
 public:
  static KindMask defaults();  // the five matched kinds
  static KindMask none() { return KindMask{}; }
  static KindMask parse(const std::string& csv);

  bool contains(FeatureKind k) const { return on_[static_cast<int>(k)]; }
  KindMask& set(FeatureKind k, bool on = true) {
    on_[static_cast<int>(k)] = on;
    return *this;
  }
  KindMask without(FeatureKind k) const { return KindMask(*this).set(k, false); }
  std::string str() const;
  bool operator==(const KindMask&) const = default;

 private:
  std::array<bool, 7> on_{};
};

// Test fixture: perturbs one group's backward formula so the gradient
// checker can be shown to catch it.
enum class GradientFault { none, embedding, gru, visual, text_stack, vision_stack, head };

struct ModelConfig {
  int vocab_size = 400;
  int embed_dim = 128;   // d_e
  int dim = 128;         // d, shared space
  int region_dim = 32;   // d_v
  int n_heads = 4;
  int layers = 2;        // N
  int K = 96;
  RefineConfig refine;
  bool refine_enabled = true;
  bool positional_encoding = true;
  double positional_scale = 0.1;
  bool vision_layer2 = false;
  bool train_embedding = true;
  KindMask kinds = KindMask::defaults();
  std::uint64_t seed = 7;
  GradientFault fault = GradientFault::none;

  void validate() const;
  StreamConfig stream() const;
};

struct ModelParams {
  EmbeddingTable embedding;
  GruParams gru;
  VisualProjection visual;
  AggregationStack text_stack;
  AggregationStack vision_stack;
  PredictionHead head;

  ModelParams zeros_like() const;

  // fn(group, name, matrix). Groups: embedding, gru, visual, text_stack.<i>,
  // vision_stack.<i>, head.
  template <class Self, class Fn>
  static void visit(Self& s, Fn&& fn) {
    fn(std::string("embedding"), std::string("rows"), s.embedding.rows);
    GruParams::visit(s.gru, [&](const char* n, auto& m) { fn(std::string("gru"), std::string(n), m); });
    VisualProjection::visit(s.visual,
                            [&](const char* n, auto& m) { fn(std::string("visual"), std::string(n), m); });
    for (std::size_t i = 0; i < s.text_stack.layers.size(); ++i)
      EncoderLayerParams::visit(s.text_stack.layers[i], [&](const char* n, auto& m) {
        fn("text_stack." + std::to_string(i), std::string(n), m);
      });
    for (std::size_t i = 0; i < s.vision_stack.layers.size(); ++i)
      EncoderLayerParams::visit(s.vision_stack.layers[i], [&](const char* n, auto& m) {
        fn("vision_stack." + std::to_string(i), std::string(n), m);
      });
    PredictionHead::visit(s.head, [&](const char* n, auto& m) { fn(std::string("head"), std::string(n), m); });
  }
};

struct Model {
  ModelConfig config;
  ModelParams params;

  static Model create(const ModelConfig& config);
};

// Forward state of one field (product description or review), both modalities.
struct FieldPass {
  Field field = Field::product;
  std::vector<Sentence> sentences;
  std::vector<GruCache> gru;
  std::vector<FeatureSet> text_sets;
  StreamCache text_cache;
  const std::vector<Image>* images = nullptr;
  std::vector<FeatureSet> vision_sets;
  StreamCache vision_cache;
};

// Gradients w.r.t. the feature sets of a FieldPass, same shapes.
struct FieldGrad {
  std::vector<Mat> text;
  std::vector<Mat> vision;

  static FieldGrad zeros_for(const FieldPass& pass);
};

// The refinement draw is seeded from (model seed, instance id, field, modality).
FieldPass encode_field(const Model& model, const std::vector<Sentence>& sentences,
                       const std::vector<Image>& images, Field field, std::string_view instance_id);
void encode_field_backward(const Model& model, const FieldPass& pass, const FieldGrad& grad,
                           ModelParams& grads);

PairFeatures assemble_pair(const Model& model, const FieldPass& product, const FieldPass& review);

struct PairPass {
  PairFeatures features;
  ScoreList scores;
  MatchingFeature feature;
  double logit = 0.0;
  double f = 0.5;
};

PairPass forward_pair(const Model& model, const FieldPass& product, const FieldPass& review);
void backward_pair(const Model& model, const PairPass& pass, double d_f, FieldGrad& d_product,
                   FieldGrad& d_review, ModelParams& grads);

struct PairScore {
  double f = 0.5;
  MatchingFeature trace;
};

PairScore score_pair(const Model& model, const Product& product, const Review& review);

// Discrete choices made by a forward pass (refinement draws and assignments,
// top-K indices). Equal signatures mean the same piecewise-smooth branch.
void append_signature(const FieldPass& pass, std::vector<long long>& out);
void append_signature(const PairPass& pass, std::vector<long long>& out);

// Applies ModelConfig::fault to accumulated gradients.
void apply_fault(GradientFault fault, ModelParams& grads);

}  // namespace premise
