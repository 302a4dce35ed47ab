#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace premise {

// Rows are representation vectors throughout; biases are 1 x n matrices.
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// Stable 64-bit FNV-1a, used to derive per-instance random streams.
std::uint64_t fnv1a(std::string_view data, std::uint64_t basis = 14695981039346656037ULL);
std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag);

bool all_finite(const Mat& m);

// Multiply-accumulate counters for the dominant kernels. One instance per thread.
struct OpCounts {
  std::uint64_t attention_macs = 0;
  std::uint64_t cosine_macs = 0;

  OpCounts& operator+=(const OpCounts& o) {
    attention_macs += o.attention_macs;
    cosine_macs += o.cosine_macs;
    return *this;
  }
};

OpCounts& thread_op_counts();
void reset_thread_op_counts();

}  // namespace premise
