#include "premise/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace premise {

namespace {

constexpr char kMagic[8] = {'P', 'R', 'E', 'M', 'C', 'K', 'P', 'T'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const std::uint64_t n = get_u64(in);
  if (n > (1u << 26)) throw std::runtime_error("checkpoint string length is implausible");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return s;
}

std::ifstream open_and_check(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || !std::equal(magic, magic + 8, kMagic))
    throw std::runtime_error(path.string() + " is not a checkpoint");
  const auto version = get_u64(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint version " + std::to_string(version) + " is not supported");
  return in;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const std::string& config_text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, 8);
  put_u64(out, kCheckpointVersion);
  put_string(out, config_text);
  std::uint64_t count = 0;
  ModelParams::visit(model.params, [&](const std::string&, const std::string&, const Mat&) { ++count; });
  put_u64(out, count);
  ModelParams::visit(model.params, [&](const std::string& group, const std::string& name, const Mat& m) {
    put_string(out, group + "/" + name);
    put_u64(out, static_cast<std::uint64_t>(m.rows()));
    put_u64(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) put_u64(out, std::bit_cast<std::uint64_t>(m(i, j)));
  });
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

std::string read_checkpoint_config(const std::filesystem::path& path) {
  auto in = open_and_check(path);
  return get_string(in);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& config) {
  auto in = open_and_check(path);
  Checkpoint ck;
  ck.config_text = get_string(in);
  ck.model = Model::create(config);
  const std::uint64_t count = get_u64(in);
  std::uint64_t seen = 0;
  ModelParams::visit(ck.model.params, [&](const std::string& group, const std::string& name, Mat& m) {
    if (seen++ >= count) throw std::runtime_error("checkpoint has fewer tensors than the model");
    const std::string expected = group + "/" + name;
    const std::string got = get_string(in);
    if (got != expected) throw std::runtime_error("checkpoint tensor '" + got + "' where '" + expected + "' expected");
    const auto rows = get_u64(in), cols = get_u64(in);
    if (rows != static_cast<std::uint64_t>(m.rows()) || cols != static_cast<std::uint64_t>(m.cols()))
      throw std::runtime_error("checkpoint tensor '" + got + "' has shape " + std::to_string(rows) + "x" +
                               std::to_string(cols) + ", model expects " + std::to_string(m.rows()) + "x" +
                               std::to_string(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = std::bit_cast<double>(get_u64(in));
  });
  if (seen != count) throw std::runtime_error("checkpoint has more tensors than the model");
  return ck;
}

}  // namespace premise
