#include "premise/msmn.hpp"

#include <cmath>
#include <numbers>

namespace premise {

namespace {

Mat uniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

constexpr double kLnEps = 1e-5;

Mat layer_norm(const Mat& x, const Mat& g, const Mat& b, LayerNormCache& c) {
  const auto d = static_cast<double>(x.cols());
  c.xhat.resize(x.rows(), x.cols());
  c.inv_std.resize(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).sum() / d;
    RowVec centered = x.row(i).array() - mu;
    const double var = centered.squaredNorm() / d;
    c.inv_std(i) = 1.0 / std::sqrt(var + kLnEps);
    c.xhat.row(i) = centered * c.inv_std(i);
  }
  Mat y = c.xhat.array().rowwise() * g.row(0).array();
  y.rowwise() += b.row(0);
  return y;
}

Mat layer_norm_backward(const LayerNormCache& c, const Mat& g, const Mat& dy, Mat& dg, Mat& db) {
  dg.row(0) += dy.cwiseProduct(c.xhat).colwise().sum();
  db.row(0) += dy.colwise().sum();
  Mat dxhat = dy.array().rowwise() * g.row(0).array();
  const auto d = static_cast<double>(dy.cols());
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_d = dxhat.row(i).sum() / d;
    const double mean_dx = dxhat.row(i).dot(c.xhat.row(i)) / d;
    dx.row(i) = c.inv_std(i) * (dxhat.row(i).array() - mean_d - c.xhat.row(i).array() * mean_dx).matrix();
  }
  return dx;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) +
         x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace

EncoderLayerParams EncoderLayerParams::random(int dim, int n_heads, Rng& rng) {
  if (n_heads < 1 || dim % n_heads != 0)
    throw ConfigError("n_heads", "must divide the shared dimension");
  const double b = 1.0 / std::sqrt(static_cast<double>(dim));
  const double b_inner = 1.0 / std::sqrt(4.0 * dim);
  EncoderLayerParams p;
  p.n_heads = n_heads;
  p.cls = uniform(1, dim, 0.1, rng);
  p.ln1_g = Mat::Ones(1, dim);
  p.ln1_b = Mat::Zero(1, dim);
  p.w_q = uniform(dim, dim, b, rng);
  p.w_k = uniform(dim, dim, b, rng);
  p.w_v = uniform(dim, dim, b, rng);
  p.w_o = uniform(dim, dim, b, rng);
  p.b_q = p.b_k = p.b_v = p.b_o = Mat::Zero(1, dim);
  p.ln2_g = Mat::Ones(1, dim);
  p.ln2_b = Mat::Zero(1, dim);
  p.w_1 = uniform(dim, 4 * dim, b, rng);
  p.b_1 = Mat::Zero(1, 4 * dim);
  p.w_2 = uniform(4 * dim, dim, b_inner, rng);
  p.b_2 = Mat::Zero(1, dim);
  return p;
}

LayerOutput encoder_layer(const EncoderLayerParams& p, const Mat& seq, EncoderLayerCache* cache) {
  const int d = p.dim();
  if (seq.rows() < 1) throw std::invalid_argument("encoder layer needs a non-empty sequence");
  if (seq.cols() != d) throw std::invalid_argument("encoder layer dimension mismatch");
  if (!seq.allFinite()) throw std::domain_error("non-finite encoder layer input");
  const Eigen::Index m = seq.rows() + 1;
  const int dh = d / p.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  EncoderLayerCache local;
  EncoderLayerCache& c = cache ? *cache : local;
  c.x0.resize(m, d);
  c.x0.row(0) = p.cls.row(0);
  c.x0.bottomRows(m - 1) = seq;

  c.a = layer_norm(c.x0, p.ln1_g, p.ln1_b, c.ln1);
  c.q = (c.a * p.w_q).rowwise() + p.b_q.row(0);
  c.k = (c.a * p.w_k).rowwise() + p.b_k.row(0);
  c.v = (c.a * p.w_v).rowwise() + p.b_v.row(0);
  c.o.resize(m, d);
  c.probs.resize(p.n_heads);
  for (int h = 0; h < p.n_heads; ++h) {
    Mat s = c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose() * scale;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double mx = s.row(i).maxCoeff();
      s.row(i) = (s.row(i).array() - mx).exp().matrix();
      s.row(i) /= s.row(i).sum();
    }
    c.o.middleCols(h * dh, dh) = s * c.v.middleCols(h * dh, dh);
    c.probs[h] = std::move(s);
  }
  thread_op_counts().attention_macs += 2ULL * static_cast<std::uint64_t>(m * m) * d;

  c.x1 = c.x0 + ((c.o * p.w_o).rowwise() + p.b_o.row(0));
  c.b = layer_norm(c.x1, p.ln2_g, p.ln2_b, c.ln2);
  c.h = (c.b * p.w_1).rowwise() + p.b_1.row(0);
  c.g = c.h.unaryExpr([](double x) { return gelu(x); });
  Mat x2 = c.x1 + ((c.g * p.w_2).rowwise() + p.b_2.row(0));
  return {x2.row(0), x2.bottomRows(m - 1)};
}

Mat encoder_layer_backward(const EncoderLayerParams& p, const EncoderLayerCache& c,
                           const RowVec& d_head, const Mat& d_body, EncoderLayerParams& g) {
  const int d = p.dim();
  const Eigen::Index m = c.x0.rows();
  const int dh = d / p.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Mat dx2(m, d);
  dx2.row(0) = d_head;
  dx2.bottomRows(m - 1) = d_body;

  // feed-forward branch
  g.w_2.noalias() += c.g.transpose() * dx2;
  g.b_2.row(0) += dx2.colwise().sum();
  Mat dhid = (dx2 * p.w_2.transpose()).cwiseProduct(c.h.unaryExpr([](double x) { return gelu_grad(x); }));
  g.w_1.noalias() += c.b.transpose() * dhid;
  g.b_1.row(0) += dhid.colwise().sum();
  Mat db = dhid * p.w_1.transpose();
  Mat dx1 = dx2 + layer_norm_backward(c.ln2, p.ln2_g, db, g.ln2_g, g.ln2_b);

  // attention branch
  g.w_o.noalias() += c.o.transpose() * dx1;
  g.b_o.row(0) += dx1.colwise().sum();
  Mat d_o = dx1 * p.w_o.transpose();
  Mat dq(m, d), dk(m, d), dv(m, d);
  for (int h = 0; h < p.n_heads; ++h) {
    const Mat& prob = c.probs[h];
    auto d_oh = d_o.middleCols(h * dh, dh);
    Mat dprob = d_oh * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh) = prob.transpose() * d_oh;
    Vec inner = dprob.cwiseProduct(prob).rowwise().sum();
    Mat ds = prob.cwiseProduct(dprob.colwise() - inner) * scale;
    dq.middleCols(h * dh, dh) = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh) = ds.transpose() * c.q.middleCols(h * dh, dh);
  }
  g.w_q.noalias() += c.a.transpose() * dq;
  g.w_k.noalias() += c.a.transpose() * dk;
  g.w_v.noalias() += c.a.transpose() * dv;
  g.b_q.row(0) += dq.colwise().sum();
  g.b_k.row(0) += dk.colwise().sum();
  g.b_v.row(0) += dv.colwise().sum();
  Mat da = dq * p.w_q.transpose() + dk * p.w_k.transpose() + dv * p.w_v.transpose();
  Mat dx0 = dx1 + layer_norm_backward(c.ln1, p.ln1_g, da, g.ln1_g, g.ln1_b);

  g.cls.row(0) += dx0.row(0);
  return dx0.bottomRows(m - 1);
}

AggregateOutput aggregate_layer(const EncoderLayerParams& params, const std::vector<Mat>& sequences,
                                std::vector<EncoderLayerCache>* caches) {
  AggregateOutput out;
  if (caches) caches->assign(sequences.size(), EncoderLayerCache{});
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    LayerOutput lo = encoder_layer(params, sequences[i], caches ? &(*caches)[i] : nullptr);
    out.next_scale.push_back(std::move(lo.head));
    out.same_scale.push_back(std::move(lo.body));
  }
  return out;
}

AggregationStack AggregationStack::random(int dim, int n_heads, int n_layers, Rng& rng) {
  AggregationStack s;
  for (int i = 0; i < n_layers; ++i) s.layers.push_back(EncoderLayerParams::random(dim, n_heads, rng));
  return s;
}

// ---------------------------------------------------------------------------

const char* to_string(Field f) { return f == Field::product ? "p" : "r"; }
const char* to_string(Modality m) { return m == Modality::text ? "t" : "v"; }

const char* to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::ngram_token: return "ngram_token";
    case FeatureKind::sentence: return "sentence";
    case FeatureKind::ngram_sentence: return "ngram_sentence";
    case FeatureKind::ngram_roi: return "ngram_roi";
    case FeatureKind::image: return "image";
    case FeatureKind::ngram_image: return "ngram_image";
    case FeatureKind::document: return "document";
  }
  return "?";
}

FeatureKind feature_kind_from_string(const std::string& name) {
  for (auto k : {FeatureKind::ngram_token, FeatureKind::sentence, FeatureKind::ngram_sentence,
                 FeatureKind::ngram_roi, FeatureKind::image, FeatureKind::ngram_image,
                 FeatureKind::document})
    if (name == to_string(k)) return k;
  throw std::invalid_argument("unknown feature kind '" + name + "'");
}

int scale_of(FeatureKind k) {
  switch (k) {
    case FeatureKind::ngram_token:
    case FeatureKind::ngram_roi: return 0;
    case FeatureKind::sentence:
    case FeatureKind::image:
    case FeatureKind::ngram_sentence:
    case FeatureKind::ngram_image: return 1;
    case FeatureKind::document: return 2;
  }
  return 0;
}

Mat sinusoidal_encoding(Eigen::Index n, int dim) {
  Mat pe(n, dim);
  for (Eigen::Index pos = 0; pos < n; ++pos)
    for (int i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
      pe(pos, i) = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  return pe;
}

std::vector<FeatureSet> run_stream(const AggregationStack& stack, const std::vector<Mat>& scale0,
                                   Field field, Modality modality, const StreamConfig& cfg, Rng& rng,
                                   StreamCache* cache) {
  if (stack.layers.empty()) throw std::invalid_argument("aggregation stack has no layers");
  const int d = stack.layers.front().dim();
  const bool text = modality == Modality::text;
  const bool use_pe = text && cfg.positional_encoding;

  StreamCache local;
  StreamCache& c = cache ? *cache : local;
  c = StreamCache{};
  c.modality = modality;

  std::vector<Mat> inputs = scale0;
  if (use_pe)
    for (auto& m : inputs) m += cfg.positional_scale * sinusoidal_encoding(m.rows(), d);
  AggregateOutput l1 = aggregate_layer(stack.layers[0], inputs, &c.layer1);

  Eigen::Index total = 0;
  for (const auto& b : l1.same_scale) {
    c.body_rows.push_back(b.rows());
    total += b.rows();
  }
  c.low_scale.resize(total, d);
  Eigen::Index at = 0;
  for (const auto& b : l1.same_scale) {
    c.low_scale.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  Mat heads(static_cast<Eigen::Index>(l1.next_scale.size()), d);
  for (std::size_t i = 0; i < l1.next_scale.size(); ++i)
    heads.row(static_cast<Eigen::Index>(i)) = l1.next_scale[i];

  std::vector<FeatureSet> sets;
  auto emit = [&](FeatureKind kind, Mat v) { sets.push_back({field, modality, kind, std::move(v)}); };

  if (cfg.refine_enabled && total > 0) {
    c.refined = true;
    c.refine = refine(c.low_scale, cfg.refine, rng);
    emit(text ? FeatureKind::ngram_token : FeatureKind::ngram_roi, c.refine.representatives);
  } else {
    emit(text ? FeatureKind::ngram_token : FeatureKind::ngram_roi, c.low_scale);
  }
  emit(text ? FeatureKind::sentence : FeatureKind::image, heads);

  const bool want_layer2 = stack.layers.size() >= 2 && (text || cfg.vision_layer2);
  if (want_layer2) {
    if (heads.rows() > 0) {
      Mat seq = heads;
      if (use_pe) seq += cfg.positional_scale * sinusoidal_encoding(seq.rows(), d);
      c.has_layer2 = true;
      LayerOutput l2 = encoder_layer(stack.layers[1], seq, &c.layer2);
      emit(text ? FeatureKind::ngram_sentence : FeatureKind::ngram_image, std::move(l2.body));
      emit(FeatureKind::document, Mat(l2.head));
    } else {
      emit(text ? FeatureKind::ngram_sentence : FeatureKind::ngram_image, Mat(0, d));
      emit(FeatureKind::document, Mat(0, d));
    }
  }
  return sets;
}

std::vector<Mat> run_stream_backward(const AggregationStack& stack, const StreamCache& c,
                                     const std::vector<Mat>& d_sets, AggregationStack& grads) {
  const std::size_t n_seq = c.layer1.size();
  const int d = stack.layers.front().dim();
  Mat d_heads = n_seq > 0 ? Mat(d_sets.at(1)) : Mat(0, d);
  if (c.has_layer2) {
    Mat d_seq = encoder_layer_backward(stack.layers[1], c.layer2, d_sets.at(3).row(0), d_sets.at(2),
                                       grads.layers[1]);
    d_heads += d_seq;
  }
  Mat d_low = c.refined ? refine_backward(c.refine, d_sets.at(0), c.low_scale.rows()) : d_sets.at(0);

  std::vector<Mat> d_inputs;
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < n_seq; ++i) {
    const Eigen::Index rows = c.body_rows[i];
    d_inputs.push_back(encoder_layer_backward(stack.layers[0], c.layer1[i],
                                              d_heads.row(static_cast<Eigen::Index>(i)),
                                              d_low.middleRows(at, rows), grads.layers[0]));
    at += rows;
  }
  return d_inputs;
}

}  // namespace premise
