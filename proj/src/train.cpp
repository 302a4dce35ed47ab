#include "premise/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace premise {

namespace {

double log_sum_exp(std::span<const double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

std::vector<double> softmax(std::span<const double> x) {
  const double lse = log_sum_exp(x);
  std::vector<double> out;
  for (double v : x) out.push_back(std::exp(v - lse));
  return out;
}

void check_lists(std::span<const double> f, std::span<const double> y) {
  if (f.size() != y.size()) throw std::invalid_argument("predictions and labels differ in length");
  if (f.size() < 2) throw std::invalid_argument("listwise loss needs at least two reviews");
}

}  // namespace

double listwise_loss(std::span<const double> f, std::span<const double> y) {
  check_lists(f, y);
  const double lse = log_sum_exp(f);
  const auto target = softmax(y);
  double loss = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) loss -= target[j] * (f[j] - lse);
  return loss;
}

std::vector<double> listwise_loss_grad(std::span<const double> f, std::span<const double> y) {
  check_lists(f, y);
  auto pf = softmax(f);
  const auto py = softmax(y);
  for (std::size_t j = 0; j < pf.size(); ++j) pf[j] -= py[j];
  return pf;
}

ListwiseBatchLoss batch_loss(const Model& model, const Batch& batch, ModelParams* grads,
                             std::vector<long long>* signature) {
  ListwiseBatchLoss out;
  for (const auto& e : batch.entries) {
    const Product& p = *e.product;
    FieldPass product = encode_field(model, p.sentences, p.images, Field::product, p.id);
    if (signature) append_signature(product, *signature);

    std::vector<const Review*> reviews{e.positive};
    reviews.insert(reviews.end(), e.negatives.begin(), e.negatives.end());
    std::vector<FieldPass> review_passes;
    std::vector<PairPass> pairs;
    std::vector<double> f, y;
    for (const Review* r : reviews) {
      review_passes.push_back(encode_field(model, r->sentences, r->images, Field::review, r->id));
      pairs.push_back(forward_pair(model, product, review_passes.back()));
      if (signature) {
        append_signature(review_passes.back(), *signature);
        append_signature(pairs.back(), *signature);
      }
      f.push_back(pairs.back().f);
      y.push_back(static_cast<double>(r->label));
    }
    const double loss = listwise_loss(f, y);
    out.per_product.push_back(loss);
    out.value += loss;

    if (grads) {
      const auto d_f = listwise_loss_grad(f, y);
      FieldGrad d_product = FieldGrad::zeros_for(product);
      for (std::size_t j = 0; j < reviews.size(); ++j) {
        FieldGrad d_review = FieldGrad::zeros_for(review_passes[j]);
        backward_pair(model, pairs[j], d_f[j], d_product, d_review, *grads);
        encode_field_backward(model, review_passes[j], d_review, *grads);
      }
      encode_field_backward(model, product, d_product, *grads);
    }
  }
  if (grads) apply_fault(model.config.fault, *grads);
  return out;
}

// ---------------------------------------------------------------------------

AdamState AdamState::for_params(const ModelParams& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& st, const AdamConfig& cfg) {
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  std::vector<Mat*> p, m, v;
  std::vector<const Mat*> g;
  std::vector<bool> frozen;
  ModelParams::visit(params, [&](const std::string& group, const std::string&, Mat& x) {
    p.push_back(&x);
    frozen.push_back(group == "embedding" && !params.embedding.trainable);
  });
  ModelParams::visit(grads, [&](const std::string&, const std::string&, const Mat& x) { g.push_back(&x); });
  ModelParams::visit(st.m, [&](const std::string&, const std::string&, Mat& x) { m.push_back(&x); });
  ModelParams::visit(st.v, [&](const std::string&, const std::string&, Mat& x) { v.push_back(&x); });
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (frozen[i]) continue;
    *m[i] = cfg.beta1 * *m[i] + (1.0 - cfg.beta1) * *g[i];
    *v[i] = cfg.beta2 * *v[i] + (1.0 - cfg.beta2) * g[i]->cwiseAbs2();
    *p[i] -= (cfg.lr * (*m[i] / c1).array() / ((*v[i] / c2).array().sqrt() + cfg.eps)).matrix();
  }
}

std::string format_epoch_line(const EpochLog& log) {
  std::ostringstream os;
  os.precision(8);
  os << log.epoch << ',' << log.loss << ',' << log.dev.map << ',' << log.dev.ndcg3 << ',' << log.dev.ndcg5;
  return os.str();
}

TrainResult train(Model model, const Dataset& train_split, const Dataset* dev_split, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  if (cfg.batch_size < 1) throw ConfigError("B", "must be at least 1");
  if (cfg.epochs < 0) throw ConfigError("epochs", "must be non-negative");
  validate(train_split);
  Rng rng(cfg.seed);
  AdamState adam = AdamState::for_params(model.params);
  TrainResult result{model, {}, 0};
  double best_map = -1.0;
  int since_best = 0;

  std::vector<std::size_t> order(train_split.products.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<std::size_t> chunk(order.begin() + start,
                                     order.begin() + std::min(order.size(), start + cfg.batch_size));
      Batch batch = make_batch(train_split, chunk, cfg.n_neg, rng);
      ModelParams grads = model.params.zeros_like();
      ListwiseBatchLoss loss = batch_loss(model, batch, &grads);
      if (!std::isfinite(loss.value)) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << ", batch " << batches << " (products:";
        for (const auto& e : batch.entries) os << ' ' << e.product->id;
        os << ")";
        throw TrainingError(os.str());
      }
      adam_step(model.params, grads, adam, cfg.adam);
      loss_sum += loss.value;
      ++batches;
    }
    EpochLog log;
    log.epoch = epoch;
    log.loss = batches ? loss_sum / batches : 0.0;
    if (dev_split) log.dev = evaluate(model, *dev_split, cfg.metrics);
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    if (!dev_split) {
      result.model = model;
      result.best_epoch = epoch;
      continue;
    }
    if (log.dev.map > best_map) {
      best_map = log.dev.map;
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  if (cfg.epochs == 0) result.model = model;
  return result;
}

// ---------------------------------------------------------------------------

const GroupReport* GradCheckReport::find(const std::string& group) const {
  for (const auto& g : groups)
    if (g.group == group) return &g;
  return nullptr;
}

std::vector<std::string> GradCheckReport::failed_groups() const {
  std::vector<std::string> out;
  for (const auto& g : groups)
    if (!g.passed) out.push_back(g.group);
  return out;
}

namespace {

// Component-level group: "text_stack.0" -> "text_stack".
std::string component(const std::string& group) { return group.substr(0, group.find('.')); }

struct Entry {
  std::size_t matrix;
  Eigen::Index index;
};

}  // namespace

GradCheckReport grad_check(const Model& model, const Batch& batch, const GradCheckOptions& opts) {
  ModelParams analytic = model.params.zeros_like();
  std::vector<long long> base_sig;
  const double base_loss = batch_loss(model, batch, &analytic, &base_sig).value;

  Model probe = model;
  probe.config.fault = GradientFault::none;
  std::vector<Mat*> values;
  std::vector<const Mat*> grads;
  std::vector<std::string> groups;
  ModelParams::visit(probe.params, [&](const std::string& group, const std::string&, Mat& m) {
    if (group == "embedding" && !probe.params.embedding.trainable) return;
    values.push_back(&m);
    groups.push_back(component(group));
  });
  ModelParams::visit(analytic, [&](const std::string& group, const std::string&, const Mat& m) {
    if (group == "embedding" && !probe.params.embedding.trainable) return;
    grads.push_back(&m);
  });

  std::map<std::string, std::vector<Entry>> by_group;
  std::vector<std::string> group_order;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!by_group.count(groups[i])) group_order.push_back(groups[i]);
    auto& list = by_group[groups[i]];
    for (Eigen::Index k = 0; k < values[i]->size(); ++k) list.push_back({i, k});
  }

  Rng rng(opts.seed);
  GradCheckReport report;
  for (const auto& name : group_order) {
    std::vector<Entry> entries = by_group[name];
    if (opts.max_entries_per_group > 0 && static_cast<int>(entries.size()) > opts.max_entries_per_group) {
      // half from entries with a non-zero analytic gradient, the rest uniform
      std::vector<Entry> nonzero, picked;
      for (const auto& e : entries)
        if (grads[e.matrix]->data()[e.index] != 0.0) nonzero.push_back(e);
      std::shuffle(nonzero.begin(), nonzero.end(), rng);
      std::shuffle(entries.begin(), entries.end(), rng);
      const std::size_t half = static_cast<std::size_t>(opts.max_entries_per_group / 2);
      picked.assign(nonzero.begin(), nonzero.begin() + std::min(half, nonzero.size()));
      for (const auto& e : entries) {
        if (picked.size() >= static_cast<std::size_t>(opts.max_entries_per_group)) break;
        picked.push_back(e);
      }
      entries = std::move(picked);
    }
    GroupReport gr;
    gr.group = name;
    for (const auto& e : entries) {
      double& theta = values[e.matrix]->data()[e.index];
      const double saved = theta;
      const double h = opts.step * std::max(1.0, std::abs(saved));
      // Richardson-extrapolated central differences at h and h/2, O(h^4).
      auto central = [&](double step, bool& same) {
        std::vector<long long> sig_plus, sig_minus;
        theta = saved + step;
        const double lp = batch_loss(probe, batch, nullptr, &sig_plus).value;
        theta = saved - step;
        const double lm = batch_loss(probe, batch, nullptr, &sig_minus).value;
        theta = saved;
        same = same && sig_plus == base_sig && sig_minus == base_sig;
        return (lp - lm) / (2.0 * step);
      };
      bool same = true;
      const double coarse = central(h, same);
      const double fine = central(0.5 * h, same);
      if (!same) {
        ++gr.skipped;
        continue;
      }
      const double numeric = (4.0 * fine - coarse) / 3.0;
      const double a = grads[e.matrix]->data()[e.index];
      const double abs_err = std::abs(a - numeric);
      // Below this magnitude the difference quotient is dominated by rounding
      // in the loss itself, so relative error stops being meaningful.
      const double roundoff = 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(base_loss)) / h;
      const double floor = std::max(opts.abs_floor, roundoff / opts.tolerance);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
      gr.worst_rel_error = std::max(gr.worst_rel_error, rel);
      gr.worst_abs_error = std::max(gr.worst_abs_error, abs_err);
      ++gr.checked;
    }
    gr.passed = gr.worst_rel_error < opts.tolerance;
    report.passed = report.passed && gr.passed;
    report.worst_rel_error = std::max(report.worst_rel_error, gr.worst_rel_error);
    report.groups.push_back(gr);
  }
  return report;
}

}  // namespace premise
