#include "premise/common.hpp"

namespace premise {

std::uint64_t fnv1a(std::string_view data, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = fnv1a(tag, 14695981039346656037ULL ^ (seed * 0x9E3779B97F4A7C15ULL));
  // splitmix64 finalizer
  h ^= h >> 30;
  h *= 0xBF58476D1CE4E5B9ULL;
  h ^= h >> 27;
  h *= 0x94D049BB133111EBULL;
  h ^= h >> 31;
  return h;
}

bool all_finite(const Mat& m) { return m.allFinite(); }

OpCounts& thread_op_counts() {
  thread_local OpCounts counts;
  return counts;
}

void reset_thread_op_counts() { thread_op_counts() = OpCounts{}; }

}  // namespace premise
