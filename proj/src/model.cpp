#include "premise/model.hpp"

#include <sstream>

namespace premise {

KindMask KindMask::defaults() {
  KindMask m;
  for (auto k : {FeatureKind::ngram_token, FeatureKind::sentence, FeatureKind::ngram_sentence,
                 FeatureKind::ngram_roi, FeatureKind::image})
    m.set(k);
  return m;
}

KindMask KindMask::parse(const std::string& csv) {
  KindMask m;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    m.set(feature_kind_from_string(item));
  }
  return m;
}

std::string KindMask::str() const {
  std::string out;
  for (int i = 0; i < 7; ++i) {
    if (!on_[i]) continue;
    if (!out.empty()) out += ',';
    out += to_string(static_cast<FeatureKind>(i));
  }
  return out;
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* key) {
    if (v < 1) throw ConfigError(key, "must be at least 1");
  };
  positive(vocab_size, "vocab_size");
  positive(embed_dim, "d_e");
  positive(dim, "d");
  positive(region_dim, "d_v");
  positive(n_heads, "n_heads");
  positive(K, "K");
  if (dim % n_heads != 0) throw ConfigError("n_heads", "must divide d");
  if (layers < 1 || layers > 2) throw ConfigError("layers", "supported values are 1 and 2");
  refine.validate();
  if (positional_scale < 0.0) throw ConfigError("positional_scale", "must be non-negative");
}

StreamConfig ModelConfig::stream() const {
  StreamConfig s;
  s.positional_encoding = positional_encoding;
  s.positional_scale = positional_scale;
  s.vision_layer2 = vision_layer2;
  s.refine_enabled = refine_enabled;
  s.refine = refine;
  return s;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  visit(z, [](const std::string&, const std::string&, Mat& m) { m.setZero(); });
  return z;
}

Model Model::create(const ModelConfig& config) {
  config.validate();
  Rng rng(config.seed);
  Model m;
  m.config = config;
  m.params.embedding = EmbeddingTable::random(config.vocab_size, config.embed_dim, rng);
  m.params.embedding.trainable = config.train_embedding;
  m.params.gru = GruParams::random(config.embed_dim, config.dim, rng);
  m.params.visual = VisualProjection::random(config.region_dim, config.dim, rng);
  m.params.text_stack = AggregationStack::random(config.dim, config.n_heads, config.layers, rng);
  m.params.vision_stack = AggregationStack::random(config.dim, config.n_heads, config.layers, rng);
  m.params.head = PredictionHead::zeros(config.K);
  return m;
}

FieldGrad FieldGrad::zeros_for(const FieldPass& pass) {
  FieldGrad g;
  for (const auto& s : pass.text_sets) g.text.push_back(Mat::Zero(s.vectors.rows(), s.vectors.cols()));
  for (const auto& s : pass.vision_sets)
    g.vision.push_back(Mat::Zero(s.vectors.rows(), s.vectors.cols()));
  return g;
}

namespace {

std::string stream_tag(std::string_view id, Field f, Modality m) {
  return std::string(id) + "/" + to_string(f) + "/" + to_string(m);
}

}  // namespace

FieldPass encode_field(const Model& model, const std::vector<Sentence>& sentences,
                       const std::vector<Image>& images, Field field, std::string_view instance_id) {
  const auto& p = model.params;
  const StreamConfig scfg = model.config.stream();
  FieldPass pass;
  pass.field = field;
  pass.sentences = sentences;
  pass.images = &images;

  std::vector<Mat> text0;
  pass.gru.resize(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i)
    text0.push_back(gru_contextualize(p.gru, embed_tokens(p.embedding, sentences[i]), &pass.gru[i]));
  Rng text_rng(mix_seed(model.config.seed, stream_tag(instance_id, field, Modality::text)));
  pass.text_sets = run_stream(p.text_stack, text0, field, Modality::text, scfg, text_rng, &pass.text_cache);

  std::vector<Mat> vision0;
  for (const auto& im : images) vision0.push_back(project_visual(p.visual, im));
  Rng vision_rng(mix_seed(model.config.seed, stream_tag(instance_id, field, Modality::vision)));
  pass.vision_sets =
      run_stream(p.vision_stack, vision0, field, Modality::vision, scfg, vision_rng, &pass.vision_cache);
  return pass;
}

void encode_field_backward(const Model& model, const FieldPass& pass, const FieldGrad& grad,
                           ModelParams& grads) {
  const auto& p = model.params;
  std::vector<Mat> d_text = run_stream_backward(p.text_stack, pass.text_cache, grad.text, grads.text_stack);
  for (std::size_t i = 0; i < d_text.size(); ++i) {
    Mat d_emb = gru_backward(p.gru, pass.gru[i], d_text[i], grads.gru);
    if (p.embedding.trainable) embed_tokens_backward(pass.sentences[i], d_emb, grads.embedding.rows);
  }
  if (!pass.images->empty()) {
    std::vector<Mat> d_vis =
        run_stream_backward(p.vision_stack, pass.vision_cache, grad.vision, grads.vision_stack);
    for (std::size_t i = 0; i < d_vis.size(); ++i)
      project_visual_backward(p.visual, (*pass.images)[i], d_vis[i], grads.visual);
  }
}

PairFeatures assemble_pair(const Model& model, const FieldPass& product, const FieldPass& review) {
  PairFeatures pf;
  const KindMask& kinds = model.config.kinds;
  const int d = model.config.dim;
  auto gather = [&](const std::vector<FeatureSet>& sets, PairMatrix slot) {
    const int k = static_cast<int>(slot);
    Eigen::Index n = 0;
    for (const auto& s : sets)
      if (kinds.contains(s.kind)) n += s.vectors.rows();
    pf.rows[k].resize(n, d);
    Eigen::Index at = 0;
    for (std::size_t si = 0; si < sets.size(); ++si) {
      const auto& s = sets[si];
      if (!kinds.contains(s.kind)) continue;
      for (Eigen::Index r = 0; r < s.vectors.rows(); ++r) {
        pf.rows[k].row(at++) = s.vectors.row(r);
        pf.provenance[k].push_back({s.kind, static_cast<int>(si), static_cast<int>(r)});
      }
    }
  };
  gather(product.text_sets, PairMatrix::text_product);
  gather(review.text_sets, PairMatrix::text_review);
  gather(product.vision_sets, PairMatrix::vision_product);
  gather(review.vision_sets, PairMatrix::vision_review);
  return pf;
}

PairPass forward_pair(const Model& model, const FieldPass& product, const FieldPass& review) {
  PairPass pp;
  pp.features = assemble_pair(model, product, review);
  pp.scores = collect_scores(pp.features);
  pp.feature = topk_select(pp.scores.scores, model.config.K);
  locate(pp.feature, pp.scores);
  pp.logit = head_logit(model.params.head, pp.feature.h);
  pp.f = 1.0 / (1.0 + std::exp(-pp.logit));
  return pp;
}

void backward_pair(const Model& model, const PairPass& pp, double d_f, FieldGrad& d_product,
                   FieldGrad& d_review, ModelParams& grads) {
  const double d_logit = d_f * pp.f * (1.0 - pp.f);
  grads.head.weight.row(0) += d_logit * pp.feature.h.transpose();
  grads.head.bias(0, 0) += d_logit;
  const Vec d_h = d_logit * model.params.head.weight.row(0).transpose();
  const Vec d_scores = topk_backward(pp.feature, d_h, pp.scores.scores.size());

  std::array<Mat, 4> d_rows;
  for (int k = 0; k < 4; ++k) d_rows[k] = Mat::Zero(pp.features.rows[k].rows(), pp.features.rows[k].cols());
  for (std::size_t b = 0; b < kScoreBlocks.size(); ++b) {
    const Mat& blk = pp.scores.blocks[b];
    if (blk.size() == 0) continue;
    Mat d_blk(blk.rows(), blk.cols());
    for (Eigen::Index i = 0; i < blk.rows(); ++i)
      for (Eigen::Index j = 0; j < blk.cols(); ++j)
        d_blk(i, j) = d_scores(pp.scores.offset[b] + i * blk.cols() + j);
    if (d_blk.isZero(0.0)) continue;
    const int l = static_cast<int>(kScoreBlocks[b].left), r = static_cast<int>(kScoreBlocks[b].right);
    cosine_matrix_backward(pp.features.rows[l], pp.features.rows[r], d_blk, d_rows[l], d_rows[r]);
  }

  auto scatter = [&](PairMatrix slot, std::vector<Mat>& dst) {
    const int k = static_cast<int>(slot);
    for (std::size_t i = 0; i < pp.features.provenance[k].size(); ++i) {
      const RowSource& src = pp.features.provenance[k][i];
      dst[src.set].row(src.row) += d_rows[k].row(static_cast<Eigen::Index>(i));
    }
  };
  scatter(PairMatrix::text_product, d_product.text);
  scatter(PairMatrix::text_review, d_review.text);
  scatter(PairMatrix::vision_product, d_product.vision);
  scatter(PairMatrix::vision_review, d_review.vision);
}

PairScore score_pair(const Model& model, const Product& product, const Review& review) {
  FieldPass pp = encode_field(model, product.sentences, product.images, Field::product, product.id);
  FieldPass rp = encode_field(model, review.sentences, review.images, Field::review, review.id);
  PairPass pair = forward_pair(model, pp, rp);
  return {pair.f, std::move(pair.feature)};
}

void append_signature(const FieldPass& pass, std::vector<long long>& out) {
  for (const StreamCache* c : {&pass.text_cache, &pass.vision_cache}) {
    out.push_back(c->refined ? static_cast<long long>(c->refine.branch) : -1);
    if (!c->refined) continue;
    out.insert(out.end(), c->refine.assignment.begin(), c->refine.assignment.end());
    for (const auto& m : c->refine.members) {
      out.push_back(-static_cast<long long>(m.size()) - 2);
      out.insert(out.end(), m.begin(), m.end());
    }
  }
}

void append_signature(const PairPass& pass, std::vector<long long>& out) {
  for (const auto& s : pass.feature.selection) out.push_back(s.flat);
}

void apply_fault(GradientFault fault, ModelParams& grads) {
  if (fault == GradientFault::none) return;
  auto scale = [](Mat& m) { m *= 1.25; };
  switch (fault) {
    case GradientFault::embedding: scale(grads.embedding.rows); break;
    case GradientFault::gru: GruParams::visit(grads.gru, [&](const char*, Mat& m) { scale(m); }); break;
    case GradientFault::visual:
      VisualProjection::visit(grads.visual, [&](const char*, Mat& m) { scale(m); });
      break;
    case GradientFault::text_stack:
      for (auto& l : grads.text_stack.layers) EncoderLayerParams::visit(l, [&](const char*, Mat& m) { scale(m); });
      break;
    case GradientFault::vision_stack:
      for (auto& l : grads.vision_stack.layers)
        EncoderLayerParams::visit(l, [&](const char*, Mat& m) { scale(m); });
      break;
    case GradientFault::head: PredictionHead::visit(grads.head, [&](const char*, Mat& m) { scale(m); }); break;
    case GradientFault::none: break;
  }
}

}  // namespace premise
