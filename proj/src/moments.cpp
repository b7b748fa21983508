#include "cvcert/moments.hpp"

#include <algorithm>
#include <stdexcept>

namespace cvcert {

MomentKey MomentKey::first(int index) {
  if (index < 1) throw std::invalid_argument("MomentKey::first: index must be 1-based");
  MomentKey key;
  key.single = index;
  return key;
}

MomentKey MomentKey::product(std::vector<std::pair<int, int>> raw_pairs) {
  if (raw_pairs.empty()) throw std::invalid_argument("MomentKey::product: empty pair list");
  for (auto& pr : raw_pairs) {
    if (pr.first < 1 || pr.second < 1) throw std::invalid_argument("MomentKey::product: 1-based indices required");
    if (pr.first > pr.second) std::swap(pr.first, pr.second);
  }
  std::sort(raw_pairs.begin(), raw_pairs.end());
  MomentKey key;
  key.pairs = std::move(raw_pairs);
  return key;
}

std::string MomentKey::str() const {
  if (first_moment()) return "g[" + std::to_string(single) + "]";
  std::string out = "G[";
  for (const auto& pr : pairs) {
    out += "(" + std::to_string(pr.first) + "," + std::to_string(pr.second) + ")";
  }
  return out + "]";
}

std::vector<std::pair<int, int>> weyl_profile(const MomentKey& key, int m) {
  std::vector<std::pair<int, int>> ab(static_cast<size_t>(m), {0, 0});
  const auto bump = [&](int index) {
    const int mode = (index - 1) / 2;
    if (mode >= m) throw std::out_of_range("weyl_profile: index beyond mode count");
    if (index % 2 == 1) {
      ++ab[static_cast<size_t>(mode)].first;
    } else {
      ++ab[static_cast<size_t>(mode)].second;
    }
  };
  if (key.first_moment()) {
    bump(key.single);
  } else {
    for (const auto& pr : key.pairs) {
      bump(pr.first);
      bump(pr.second);
    }
  }
  return ab;
}

}  // namespace cvcert
