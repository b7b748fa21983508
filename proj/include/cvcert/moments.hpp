#pragma once

#include <string>
#include <utility>
#include <vector>

namespace cvcert {

// Address of one moment-tensor entry. Second and higher moments are lists of
// quadrature-index pairs (1-based, q_j = 2j-1, p_j = 2j); first moments are a
// single index. Canonical form: each pair sorted, then the pair list sorted,
// which quotients out the within-pair symmetry and the slot ordering that the
// symmetric-ordering value does not depend on.
struct MomentKey {
  std::vector<std::pair<int, int>> pairs;
  int single = 0;

  bool first_moment() const { return single != 0; }
  int order() const { return static_cast<int>(pairs.size()); }

  static MomentKey first(int index);
  static MomentKey product(std::vector<std::pair<int, int>> raw_pairs);

  bool operator==(const MomentKey& o) const { return single == o.single && pairs == o.pairs; }
  bool operator<(const MomentKey& o) const {
    if (single != o.single) return single < o.single;
    return pairs < o.pairs;
  }

  std::string str() const;
};

// Per-mode exponent profile (q-power, p-power) of a moment key: the monomial
// a homodyne estimator actually measures. Slot structure is forgotten.
std::vector<std::pair<int, int>> weyl_profile(const MomentKey& key, int m);

}  // namespace cvcert
