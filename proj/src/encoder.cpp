#include "premise/encoder.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace premise {

namespace {

Mat uniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

EmbeddingTable EmbeddingTable::random(int vocab_size, int dim, Rng& rng) {
  return {uniform(vocab_size, dim, 0.1, rng), true};
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::vector<double> row;
    std::string tok;
    while (ss >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(lineno, "not a number: '" + tok + "'");
      }
    }
    if (row.empty()) throw ParseError(lineno, "empty embedding row");
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError(lineno, "expected " + std::to_string(rows.front().size()) + " values");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(0, "embedding file is empty");
  EmbeddingTable table;
  table.rows.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      table.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return table;
}

Mat embed_tokens(const EmbeddingTable& table, std::span<const int> ids) {
  Mat out(static_cast<Eigen::Index>(ids.size()), table.dim());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.vocab_size())
      throw std::out_of_range("token id " + std::to_string(ids[i]) + " at position " +
                              std::to_string(i) + " outside vocabulary of " +
                              std::to_string(table.vocab_size()));
    out.row(static_cast<Eigen::Index>(i)) = table.rows.row(ids[i]);
  }
  return out;
}

void embed_tokens_backward(std::span<const int> ids, const Mat& d_out, Mat& d_rows) {
  for (std::size_t i = 0; i < ids.size(); ++i)
    d_rows.row(ids[i]) += d_out.row(static_cast<Eigen::Index>(i));
}

// ---------------------------------------------------------------------------

GruParams GruParams::random(int input_dim, int hidden_dim, Rng& rng) {
  const double b = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  GruParams p;
  p.w_z = uniform(input_dim, hidden_dim, b, rng);
  p.w_r = uniform(input_dim, hidden_dim, b, rng);
  p.w_n = uniform(input_dim, hidden_dim, b, rng);
  p.u_z = uniform(hidden_dim, hidden_dim, b, rng);
  p.u_r = uniform(hidden_dim, hidden_dim, b, rng);
  p.u_n = uniform(hidden_dim, hidden_dim, b, rng);
  p.b_z = uniform(1, hidden_dim, b, rng);
  p.b_r = uniform(1, hidden_dim, b, rng);
  p.b_n = uniform(1, hidden_dim, b, rng);
  return p;
}

GruParams GruParams::zeros(int input_dim, int hidden_dim) {
  GruParams p;
  p.w_z = p.w_r = p.w_n = Mat::Zero(input_dim, hidden_dim);
  p.u_z = p.u_r = p.u_n = Mat::Zero(hidden_dim, hidden_dim);
  p.b_z = p.b_r = p.b_n = Mat::Zero(1, hidden_dim);
  return p;
}

Mat gru_contextualize(const GruParams& p, const Mat& x, GruCache* cache) {
  if (x.rows() < 1) throw std::invalid_argument("GRU input must have at least one row");
  if (x.cols() != p.input_dim()) throw std::invalid_argument("GRU input dimension mismatch");
  if (!x.allFinite()) throw std::domain_error("non-finite GRU input");
  const Eigen::Index l = x.rows();
  const int d = p.hidden_dim();

  // input contributions for all steps at once
  Mat xz = (x * p.w_z).rowwise() + p.b_z.row(0);
  Mat xr = (x * p.w_r).rowwise() + p.b_r.row(0);
  Mat xn = (x * p.w_n).rowwise() + p.b_n.row(0);

  Mat h = Mat::Zero(l + 1, d);
  Mat z(l, d), r(l, d), n(l, d);
  for (Eigen::Index t = 0; t < l; ++t) {
    RowVec prev = h.row(t);
    RowVec zt = (xz.row(t) + prev * p.u_z).unaryExpr([](double v) { return sigmoid(v); });
    RowVec rt = (xr.row(t) + prev * p.u_r).unaryExpr([](double v) { return sigmoid(v); });
    RowVec nt = (xn.row(t) + prev.cwiseProduct(rt) * p.u_n).array().tanh().matrix();
    h.row(t + 1) = (RowVec::Ones(d) - zt).cwiseProduct(nt) + zt.cwiseProduct(prev);
    z.row(t) = zt;
    r.row(t) = rt;
    n.row(t) = nt;
  }
  Mat out = h.bottomRows(l);
  if (cache) *cache = GruCache{x, std::move(h), std::move(z), std::move(r), std::move(n)};
  return out;
}

Mat gru_backward(const GruParams& p, const GruCache& c, const Mat& d_out, GruParams& g) {
  const Eigen::Index l = c.x.rows();
  const int d = p.hidden_dim();
  Mat dx = Mat::Zero(l, p.input_dim());
  RowVec dh_next = RowVec::Zero(d);
  for (Eigen::Index t = l - 1; t >= 0; --t) {
    RowVec dh = d_out.row(t) + dh_next;
    RowVec prev = c.h.row(t);
    RowVec zt = c.z.row(t), rt = c.r.row(t), nt = c.n.row(t);

    RowVec dn = dh.cwiseProduct(RowVec::Ones(d) - zt);
    RowVec dz = dh.cwiseProduct(prev - nt);
    RowVec dprev = dh.cwiseProduct(zt);

    RowVec da_n = dn.cwiseProduct((RowVec::Ones(d) - nt.cwiseAbs2()));
    RowVec rh = rt.cwiseProduct(prev);
    RowVec d_rh = da_n * p.u_n.transpose();
    RowVec dr = d_rh.cwiseProduct(prev);
    dprev += d_rh.cwiseProduct(rt);

    RowVec da_z = dz.cwiseProduct(zt.cwiseProduct(RowVec::Ones(d) - zt));
    RowVec da_r = dr.cwiseProduct(rt.cwiseProduct(RowVec::Ones(d) - rt));

    auto xt = c.x.row(t);
    g.w_z.noalias() += xt.transpose() * da_z;
    g.w_r.noalias() += xt.transpose() * da_r;
    g.w_n.noalias() += xt.transpose() * da_n;
    g.u_z.noalias() += prev.transpose() * da_z;
    g.u_r.noalias() += prev.transpose() * da_r;
    g.u_n.noalias() += rh.transpose() * da_n;
    g.b_z.row(0) += da_z;
    g.b_r.row(0) += da_r;
    g.b_n.row(0) += da_n;

    dprev.noalias() += da_z * p.u_z.transpose();
    dprev.noalias() += da_r * p.u_r.transpose();
    dx.row(t) = da_z * p.w_z.transpose() + da_r * p.w_r.transpose() + da_n * p.w_n.transpose();
    dh_next = dprev;
  }
  return dx;
}

// ---------------------------------------------------------------------------

VisualProjection VisualProjection::random(int region_dim, int dim, Rng& rng) {
  const double b = 1.0 / std::sqrt(static_cast<double>(region_dim));
  return {uniform(dim, region_dim, b, rng), uniform(1, dim, b, rng)};
}

Mat project_visual(const VisualProjection& proj, const Mat& regions) {
  if (regions.cols() != proj.weight.cols())
    throw std::invalid_argument("region dimension " + std::to_string(regions.cols()) +
                                " does not match projection input " +
                                std::to_string(proj.weight.cols()));
  Mat out = regions * proj.weight.transpose();
  out.rowwise() += proj.bias.row(0);
  return out;
}

Mat project_visual_backward(const VisualProjection& proj, const Mat& regions, const Mat& d_out,
                            VisualProjection& grads) {
  grads.weight.noalias() += d_out.transpose() * regions;
  grads.bias.row(0) += d_out.colwise().sum();
  return d_out * proj.weight;
}

}  // namespace premise
