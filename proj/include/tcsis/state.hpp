#pragma once

#include <cstdint>
#include <vector>

#include "tcsis/errors.hpp"

namespace tcsis {

inline constexpr std::uint64_t kDefaultStateCap = 1ull << 20;

// A point x in {0,...,V-1}^d.
struct SequenceState {
  std::vector<std::uint8_t> tokens;
  int vocab = 2;

  int dim() const { return static_cast<int>(tokens.size()); }

  bool operator==(const SequenceState&) const = default;
};

inline SequenceState flipped(const SequenceState& x, int site, int token) {
  SequenceState y = x;
  y.tokens[static_cast<std::size_t>(site)] = static_cast<std::uint8_t>(token);
  return y;
}

inline SequenceState inverted(const SequenceState& x) {
  SequenceState y = x;
  for (auto& t : y.tokens) t = static_cast<std::uint8_t>(x.vocab - 1 - t);
  return y;
}

inline int hamming_distance(const SequenceState& a, const SequenceState& b) {
  int k = 0;
  for (std::size_t i = 0; i < a.tokens.size(); ++i) {
    k += a.tokens[i] != b.tokens[i];
  }
  return k;
}

// Number of states V^d, or throws capacity_error if it exceeds cap.
inline std::uint64_t checked_state_count(int dim, int vocab,
                                         std::uint64_t cap = kDefaultStateCap) {
  std::uint64_t n = 1;
  for (int i = 0; i < dim; ++i) {
    if (n > cap / static_cast<std::uint64_t>(vocab)) {
      throw capacity_error("state space larger than cap " + std::to_string(cap));
    }
    n *= static_cast<std::uint64_t>(vocab);
  }
  if (n > cap) {
    throw capacity_error("state space larger than cap " + std::to_string(cap));
  }
  return n;
}

// Lexicographic rank with tokens[0] most significant.
inline std::uint64_t state_rank(const SequenceState& x) {
  std::uint64_t r = 0;
  for (std::uint8_t t : x.tokens) {
    r = r * static_cast<std::uint64_t>(x.vocab) + t;
  }
  return r;
}

inline SequenceState state_from_rank(std::uint64_t rank, int dim, int vocab) {
  SequenceState x;
  x.vocab = vocab;
  x.tokens.assign(static_cast<std::size_t>(dim), 0);
  for (int i = dim - 1; i >= 0; --i) {
    x.tokens[static_cast<std::size_t>(i)] =
        static_cast<std::uint8_t>(rank % static_cast<std::uint64_t>(vocab));
    rank /= static_cast<std::uint64_t>(vocab);
  }
  return x;
}

// Every state exactly once, in lexicographic token order.
inline std::vector<SequenceState> enumerate_states(
    int dim, int vocab, std::uint64_t cap = kDefaultStateCap) {
  const std::uint64_t n = checked_state_count(dim, vocab, cap);
  std::vector<SequenceState> out;
  out.reserve(n);
  for (std::uint64_t r = 0; r < n; ++r) {
    out.push_back(state_from_rank(r, dim, vocab));
  }
  return out;
}

// d x V grid of values keyed by (site, token); row-major.
struct ScoreGrid {
  int d = 0;
  int vocab = 0;
  std::vector<double> values;

  ScoreGrid() = default;
  ScoreGrid(int d_, int vocab_)
      : d(d_), vocab(vocab_),
        values(static_cast<std::size_t>(d_) * static_cast<std::size_t>(vocab_),
               0.0) {}

  double at(int site, int token) const {
    return values[static_cast<std::size_t>(site) * vocab + token];
  }
  double& at(int site, int token) {
    return values[static_cast<std::size_t>(site) * vocab + token];
  }
};

}  // namespace tcsis
