#include "premise/bench.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "premise/match.hpp"
#include "premise/model.hpp"

namespace premise {

void Workload::validate() const {
  if (!(l1 > 0 && l2 > 0 && d > 0)) throw std::invalid_argument("workload sizes must be positive");
  if (N < 1) throw std::invalid_argument("workload needs at least one layer");
  if (!(k1 > 1 && k2 > 1)) throw std::invalid_argument("downscale ratios must exceed 1");
}

double fusion_cost(const Workload& w) {
  w.validate();
  return (2.0 * w.l1 * w.l2 + w.l1 * w.l1 + w.l2 * w.l2) * w.N * w.d;
}

double attention_cost(const Workload& w) {
  w.validate();
  return 2.0 * (w.l1 * w.l1 + w.l2 * w.l2) * w.d;
}

double matching_bound(const Workload& w) {
  w.validate();
  return w.l1 * w.l2 * w.d / (w.k1 * w.k2 * (1.0 - 1.0 / w.k1) * (1.0 - 1.0 / w.k2));
}

double matching_exact(const Workload& w) {
  w.validate();
  double s1 = 0.0, s2 = 0.0;
  for (int i = 1; i <= w.N; ++i) {
    s1 += std::pow(w.k1, -i);
    s2 += std::pow(w.k2, -i);
  }
  return w.l1 * w.l2 * w.d * s1 * s2;
}

CostReport matching_cost(const Workload& w) {
  CostReport r;
  r.workload = w;
  r.fusion = fusion_cost(w);
  r.attention = attention_cost(w);
  r.matching_bound = matching_bound(w);
  r.matching = r.attention + r.matching_bound;
  r.ratio = r.matching / r.fusion;
  return r;
}

std::optional<double> solve_crossover(const Workload& base, double lo, double hi) {
  auto excess = [&](double x) {
    Workload w = base;
    w.l1 = x * base.l2;
    CostReport r = matching_cost(w);
    return r.matching - r.fusion;
  };
  double flo = excess(lo), fhi = excess(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo < 0.0) == (fhi < 0.0)) return std::nullopt;
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = excess(mid);
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

namespace {

Mat gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

Mat stack_sets(const std::vector<FeatureSet>& sets, int d) {
  Eigen::Index n = 0;
  for (const auto& s : sets) n += s.vectors.rows();
  Mat out(n, d);
  Eigen::Index at = 0;
  for (const auto& s : sets) {
    out.middleRows(at, s.vectors.rows()) = s.vectors;
    at += s.vectors.rows();
  }
  return out;
}

}  // namespace

std::vector<CostReport> measure_counts(const Model& model, const std::vector<Workload>& workloads,
                                       const MeasureOptions& opts) {
  std::vector<CostReport> out;
  const int d = model.config.dim;
  Rng rng(opts.seed);
  for (const auto& w : workloads) {
    if (static_cast<int>(w.d) != d) throw std::invalid_argument("workload d must equal the model dimension");
    CostReport r = matching_cost(w);
    const auto l1 = static_cast<Eigen::Index>(std::llround(w.l1));
    const auto l2 = static_cast<Eigen::Index>(std::llround(w.l2));
    const std::vector<Mat> x1{gaussian(l1, d, rng)};
    const std::vector<Mat> x2{gaussian(l2, d, rng)};

    StreamConfig s1 = model.config.stream();
    s1.refine.centers = static_cast<int>(std::ceil(w.l1 / w.k1));
    StreamConfig s2 = s1;
    s2.refine.centers = static_cast<int>(std::ceil(w.l2 / w.k2));
    s2.vision_layer2 = w.N >= 2;

    auto pass = [&]() {
      Rng r1(opts.seed), r2(opts.seed + 1);
      auto a = run_stream(model.params.text_stack, x1, Field::product, Modality::text, s1, r1);
      auto b = run_stream(model.params.vision_stack, x2, Field::product, Modality::vision, s2, r2);
      return cosine_matrix(stack_sets(a, d), stack_sets(b, d));
    };

    OpCounts saved = thread_op_counts();
    reset_thread_op_counts();
    pass();
    const OpCounts counted = thread_op_counts();
    thread_op_counts() = saved;
    thread_op_counts() += counted;

    r.measured = true;
    r.measured_attention = static_cast<double>(counted.attention_macs);
    r.measured_matching = static_cast<double>(counted.cosine_macs);
    r.measured_ratio = (r.measured_attention + r.measured_matching) / r.fusion;

    double total = 0.0;
    for (int i = 0; i < opts.intervals; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int k = 0; k < opts.iterations_per_interval; ++k) pass();
      total += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    const int denom = opts.intervals * opts.iterations_per_interval;
    r.seconds_per_iteration = denom > 0 ? total / denom : 0.0;
    out.push_back(r);
  }
  return out;
}

std::string cost_csv_header() {
  return "l1,l2,d,N,k1,k2,C_f,C_att,C_mm_bound,C_m,ratio,measured_att,measured_mm,measured_ratio,"
         "seconds_per_iteration";
}

std::string cost_csv_row(const CostReport& r) {
  std::ostringstream os;
  os.precision(10);
  const Workload& w = r.workload;
  os << w.l1 << ',' << w.l2 << ',' << w.d << ',' << w.N << ',' << w.k1 << ',' << w.k2 << ',' << r.fusion << ','
     << r.attention << ',' << r.matching_bound << ',' << r.matching << ',' << r.ratio << ',';
  if (r.measured)
    os << r.measured_attention << ',' << r.measured_matching << ',' << r.measured_ratio << ','
       << r.seconds_per_iteration;
  else
    os << ",,,";
  return os.str();
}

void write_cost_csv(const std::vector<CostReport>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << cost_csv_header() << '\n';
  for (const auto& r : rows) out << cost_csv_row(r) << '\n';
}

}  // namespace premise
