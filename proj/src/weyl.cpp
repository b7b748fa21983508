#include "cvcert/weyl.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace cvcert {

CMat annihilation_op(int cutoff) {
  CMat a = CMat::Zero(cutoff + 1, cutoff + 1);
  for (int n = 1; n <= cutoff; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

CMat creation_op(int cutoff) { return annihilation_op(cutoff).adjoint(); }

CMat number_op(int cutoff) {
  CMat n = CMat::Zero(cutoff + 1, cutoff + 1);
  for (int k = 0; k <= cutoff; ++k) n(k, k) = k;
  return n;
}

CMat q_op(int cutoff) {
  const CMat a = annihilation_op(cutoff);
  return 0.5 * (a + a.adjoint());
}

CMat p_op(int cutoff) {
  const CMat a = annihilation_op(cutoff);
  return std::complex<double>(0.0, -0.5) * (a - a.adjoint());
}

CMat rotated_quadrature_op(int cutoff, double theta) {
  return std::cos(theta) * q_op(cutoff) + std::sin(theta) * p_op(cutoff);
}

namespace {

void orderings_rec(int a, int b, std::vector<int>& word, std::vector<std::vector<int>>& out) {
  if (a == 0 && b == 0) {
    out.push_back(word);
    return;
  }
  if (a > 0) {
    word.push_back(0);
    orderings_rec(a - 1, b, word, out);
    word.pop_back();
  }
  if (b > 0) {
    word.push_back(1);
    orderings_rec(a, b - 1, word, out);
    word.pop_back();
  }
}

}  // namespace

CMat weyl_monomial(int a, int b, int cutoff) {
  if (a < 0 || b < 0 || a + b > 8) throw std::invalid_argument("weyl_monomial: degree out of range");

  static std::map<std::tuple<int, int, int>, CMat> cache;
  static std::mutex cache_mutex;
  const auto key = std::make_tuple(a, b, cutoff);
  {
    std::lock_guard<std::mutex> lock(cache_mutex);
    const auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }

  const CMat q = q_op(cutoff);
  const CMat p = p_op(cutoff);
  std::vector<std::vector<int>> words;
  std::vector<int> scratch;
  orderings_rec(a, b, scratch, words);

  CMat sum = CMat::Zero(cutoff + 1, cutoff + 1);
  for (const auto& word : words) {
    CMat prod = CMat::Identity(cutoff + 1, cutoff + 1);
    for (int letter : word) prod = prod * (letter == 0 ? q : p);
    sum += prod;
  }
  sum /= static_cast<double>(words.size());

  std::lock_guard<std::mutex> lock(cache_mutex);
  return cache.emplace(key, std::move(sum)).first->second;
}

const std::vector<double>& weyl_angle_dictionary() {
  static const std::vector<double> angles = {
      0.0, M_PI / 2, M_PI / 4, 3 * M_PI / 4, M_PI / 8, 3 * M_PI / 8, 5 * M_PI / 8};
  return angles;
}

std::vector<WeylTerm> weyl_expansion(int a, int b) {
  if (a < 0 || b < 0 || a + b < 1 || a + b > 6) {
    throw std::invalid_argument("weyl_expansion: degree out of range");
  }
  if (b == 0) return {{0.0, 1.0}};
  if (a == 0) return {{M_PI / 2, 1.0}};

  // In Weyl symbols, (cos t q + sin t p)^D = sum_k binom(D,k) c^(D-k) s^k q^(D-k) p^k,
  // so D+1 distinct angles determine the monomial coefficients by a linear solve.
  const int D = a + b;
  const auto& dict = weyl_angle_dictionary();
  if (static_cast<size_t>(D + 1) > dict.size()) {
    throw std::invalid_argument("weyl_expansion: angle dictionary too small");
  }

  std::vector<double> binom(static_cast<size_t>(D) + 1, 1.0);
  for (int k = 1; k <= D; ++k) binom[static_cast<size_t>(k)] = binom[static_cast<size_t>(k - 1)] * (D - k + 1) / k;

  Mat M(D + 1, D + 1);
  for (int i = 0; i <= D; ++i) {
    const double c = std::cos(dict[static_cast<size_t>(i)]);
    const double s = std::sin(dict[static_cast<size_t>(i)]);
    for (int k = 0; k <= D; ++k) {
      M(i, k) = binom[static_cast<size_t>(k)] * std::pow(c, D - k) * std::pow(s, k);
    }
  }
  Vec target = Vec::Zero(D + 1);
  target(b) = 1.0;
  const Vec lambda = M.transpose().fullPivLu().solve(target);

  std::vector<WeylTerm> terms;
  for (int i = 0; i <= D; ++i) {
    if (std::abs(lambda(i)) > kSparsityThreshold) {
      terms.push_back({dict[static_cast<size_t>(i)], lambda(i)});
    }
  }
  return terms;
}

}  // namespace cvcert
