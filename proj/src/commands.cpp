#include "premise/commands.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "premise/checkpoint.hpp"

namespace premise {

namespace {

std::filesystem::path split_path(const RunConfig& c, Split s) {
  return std::filesystem::path(c.dataset_dir) / (to_string(s) + ".jsonl");
}

std::filesystem::path ensure_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::filesystem::create_directories(p);
  return p;
}

Dataset load_split(const RunConfig& c, Split s) {
  Dataset ds = load_dataset(split_path(c, s), s);
  ds.split = s;
  return ds;
}

}  // namespace

DatasetSplits cmd_generate(const RunConfig& config, std::ostream& log) {
  Dataset all = generate_synthetic(config.generator, config.train.seed);
  DatasetSplits splits = split_dataset(all, config.train_fraction, config.dev_fraction, config.train.seed);
  ensure_dir(config.dataset_dir);
  save_dataset(splits.train, split_path(config, Split::train));
  save_dataset(splits.dev, split_path(config, Split::dev));
  save_dataset(splits.test, split_path(config, Split::test));
  log << "generated " << all.products.size() << " products, " << all.review_count() << " reviews -> "
      << splits.train.products.size() << "/" << splits.dev.products.size() << "/" << splits.test.products.size()
      << " train/dev/test products in " << config.dataset_dir << "\n";
  return splits;
}

DatasetSplits load_splits(const RunConfig& config) {
  return {load_split(config, Split::train), load_split(config, Split::dev), load_split(config, Split::test)};
}

Model build_model(const RunConfig& config) {
  config.validate();
  Model model = Model::create(config.model);
  if (!config.embedding_file.empty()) {
    EmbeddingTable table = EmbeddingTable::load(config.embedding_file);
    if (table.vocab_size() != config.model.vocab_size || table.dim() != config.model.embed_dim)
      throw ConfigError("embedding_file", "table is " + std::to_string(table.vocab_size()) + "x" +
                                              std::to_string(table.dim()) + ", config expects " +
                                              std::to_string(config.model.vocab_size) + "x" +
                                              std::to_string(config.model.embed_dim));
    table.trainable = config.model.train_embedding;
    model.params.embedding = std::move(table);
  }
  return model;
}

TrainResult cmd_train(const RunConfig& config, std::ostream& log) {
  const DatasetSplits splits = load_splits(config);
  log << "effective C = " << config.effective_centers() << " (K = " << config.model.K << ")\n";
  Model model = build_model(config);
  const auto out = ensure_dir(config.output_dir);
  std::ofstream csv(out / "train_log.csv");
  csv << "epoch,loss,dev_MAP,dev_N3,dev_N5\n";
  TrainResult result = train(model, splits.train, &splits.dev, config.train, [&](const EpochLog& e) {
    csv << format_epoch_line(e) << '\n';
    csv.flush();
    log << "epoch " << format_epoch_line(e) << '\n';
  });
  const std::string text = config.emit();
  save_checkpoint(out / "model.ckpt", result.model, text);
  std::ofstream(out / "config.txt") << text;
  log << "best epoch " << result.best_epoch << ", checkpoint " << (out / "model.ckpt").string() << '\n';
  return result;
}

MetricsReport cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint, Split split,
                       std::ostream& log) {
  const Dataset ds = load_split(config, split);
  const Checkpoint ck = load_checkpoint(checkpoint, config.model);
  const MetricsReport report = evaluate(ck.model, ds, config.train.metrics);
  const auto out = ensure_dir(config.output_dir);
  write_metrics_csv(report, out / "metrics.csv");
  write_metrics_json(report, out / "metrics.json");
  log << to_string(split) << " MAP=" << report.map << " N@3=" << report.ndcg3 << " N@5=" << report.ndcg5 << '\n';
  return report;
}

std::vector<AblationSetting> ablation_settings() {
  const KindMask full = KindMask::defaults();
  return {
      {"full", full},
      {"w/o ngram_token", full.without(FeatureKind::ngram_token)},
      {"w/o sentence", full.without(FeatureKind::sentence)},
      {"w/o ngram_sentence", full.without(FeatureKind::ngram_sentence)},
      {"w/o ngram_roi", full.without(FeatureKind::ngram_roi)},
      {"w/o image", full.without(FeatureKind::image)},
      {"w/o ngram_token & ngram_roi", full.without(FeatureKind::ngram_token).without(FeatureKind::ngram_roi)},
      {"w/o ngram_sentence & image", full.without(FeatureKind::ngram_sentence).without(FeatureKind::image)},
  };
}

std::size_t check_provenance(const Model& model, const Dataset& dataset) {
  std::size_t rows = 0;
  for (const auto& p : dataset.products) {
    const FieldPass product = encode_field(model, p.sentences, p.images, Field::product, p.id);
    for (const auto& r : dataset.reviews(p.id)) {
      const FieldPass review = encode_field(model, r.sentences, r.images, Field::review, r.id);
      const PairFeatures pf = assemble_pair(model, product, review);
      for (int m = 0; m < 4; ++m) {
        if (static_cast<Eigen::Index>(pf.provenance[m].size()) != pf.rows[m].rows())
          throw InvariantError("provenance length mismatch for pair " + p.id + "/" + r.id);
        for (const auto& src : pf.provenance[m]) {
          if (!model.config.kinds.contains(src.kind))
            throw InvariantError(std::string("masked kind ") + to_string(src.kind) + " reached the matching rows of " +
                                 p.id + "/" + r.id);
          ++rows;
        }
      }
    }
  }
  return rows;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& config, std::ostream& log) {
  const DatasetSplits splits = load_splits(config);
  const auto out = ensure_dir(config.output_dir);
  std::vector<AblationRow> rows;
  for (const auto& setting : ablation_settings()) {
    RunConfig c = config;
    c.model.kinds = setting.kinds;
    const TrainResult result = train(build_model(c), splits.train, &splits.dev, c.train);
    AblationRow row{setting, evaluate(result.model, splits.test, c.train.metrics), 0};
    row.rows_checked = check_provenance(result.model, splits.test);
    log << setting.name << ": MAP=" << row.test.map << " N@3=" << row.test.ndcg3 << " N@5=" << row.test.ndcg5
        << " (" << row.rows_checked << " rows checked)\n";
    rows.push_back(std::move(row));
  }
  std::ofstream csv(out / "ablation.csv");
  csv << "setting,kinds,MAP,N@3,N@5,rows_checked\n";
  csv.precision(8);
  for (const auto& r : rows)
    csv << r.setting.name << ",\"" << r.setting.kinds.str() << "\"," << r.test.map << ',' << r.test.ndcg3 << ','
        << r.test.ndcg5 << ',' << r.rows_checked << '\n';
  return rows;
}

std::vector<Workload> bench_workloads(const RunConfig& config) {
  std::vector<double> lengths;
  std::stringstream ss(config.bench_lengths);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size() || !(v >= 1.0)) throw std::invalid_argument(item);
      lengths.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("bench_lengths", "invalid length '" + item + "'");
    }
  }
  if (lengths.empty()) throw ConfigError("bench_lengths", "needs at least one length");
  std::vector<Workload> out;
  for (double l1 : lengths)
    for (double l2 : lengths) {
      Workload w;
      w.l1 = l1;
      w.l2 = l2;
      w.d = config.model.dim;
      w.N = config.model.layers;
      w.k1 = w.k2 = config.bench_k;
      out.push_back(w);
    }
  return out;
}

std::vector<CostReport> cmd_bench(const RunConfig& config, std::ostream& log) {
  const Model model = build_model(config);
  MeasureOptions opts;
  opts.intervals = config.bench_intervals;
  opts.iterations_per_interval = config.bench_iterations;
  opts.seed = config.train.seed;
  const auto rows = measure_counts(model, bench_workloads(config), opts);
  const auto out = ensure_dir(config.output_dir);
  write_cost_csv(rows, out / "bench.csv");
  for (const auto& r : rows)
    log << "l1=" << r.workload.l1 << " l2=" << r.workload.l2 << " C_m/C_f=" << r.ratio
        << " measured=" << r.measured_ratio << '\n';
  Workload base;
  base.d = config.model.dim;
  base.N = config.model.layers;
  base.k1 = base.k2 = config.bench_k;
  if (auto x = solve_crossover(base))
    log << "crossover l1/l2 = " << *x << '\n';
  else
    log << "no crossover: C_m < C_f for every l1/l2 in [1, 1000]\n";
  return rows;
}

void cmd_trace(const RunConfig& config, const std::filesystem::path& checkpoint, const std::string& product_id,
               const std::string& review_id, Split split, std::ostream& out) {
  const Dataset ds = load_split(config, split);
  const Checkpoint ck = load_checkpoint(checkpoint, config.model);
  const Product& p = ds.product(product_id);
  const Review* review = nullptr;
  for (const auto& r : ds.reviews(product_id))
    if (r.id == review_id) review = &r;
  if (!review) throw std::invalid_argument("review " + review_id + " not found under product " + product_id);

  const FieldPass pp = encode_field(ck.model, p.sentences, p.images, Field::product, p.id);
  const FieldPass rp = encode_field(ck.model, review->sentences, review->images, Field::review, review->id);
  const PairPass pair = forward_pair(ck.model, pp, rp);
  std::set<Eigen::Index> selected;
  for (const auto& s : pair.feature.selection)
    if (s.block >= 0) selected.insert(s.flat);
  out.precision(10);
  for (int b = 0; b < 3; ++b) {
    const Mat& m = pair.scores.blocks[b];
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const Eigen::Index flat = pair.scores.offset[b] + i * m.cols() + j;
        out << b << ',' << i << ',' << j << ',' << m(i, j) << ',' << (selected.count(flat) ? 1 : 0) << '\n';
      }
  }
}

}  // namespace premise
