#pragma once

#include <cstdint>

#include "fraft/crypto.hpp"

namespace fraft {

// Term t's only eligible candidate.
inline NodeId round_robin_candidate(std::uint64_t term, std::uint64_t n) { return term % n; }

struct Ratio {
  std::uint64_t num = 0;
  std::uint64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

// Expected number of round-robin rounds until the designated candidate is
// fresh enough to win: (n+1)/(f+2) with n = 2f+1, always below 2.
Ratio expected_election_rounds(std::uint64_t n);

// One draw of the round-robin geometry: given freshness ranks 1..n in
// `permutation` (rank <= f+1 can win), returns the 1-based position of the
// first electable candidate.
std::uint64_t rounds_until_electable(std::span<const std::uint32_t> permutation, std::uint64_t f);

}  // namespace fraft
