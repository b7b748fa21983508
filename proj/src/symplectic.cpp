#include "cvcert/symplectic.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cvcert/rng.hpp"

namespace cvcert {

using nlohmann::json;

Mat symplectic_form(int m) {
  Mat omega = Mat::Zero(2 * m, 2 * m);
  for (int j = 0; j < m; ++j) {
    omega(2 * j, 2 * j + 1) = 1.0;
    omega(2 * j + 1, 2 * j) = -1.0;
  }
  return omega;
}

double symplectic_defect(const Mat& S) {
  const int m = static_cast<int>(S.rows()) / 2;
  const Mat omega = symplectic_form(m);
  return (S.transpose() * omega * S - omega).cwiseAbs().maxCoeff();
}

Mat symplectic_inverse(const Mat& S) {
  const int m = static_cast<int>(S.rows()) / 2;
  const Mat omega = symplectic_form(m);
  // Omega^{-1} = -Omega = Omega^T.
  return omega.transpose() * S.transpose() * omega;
}

Mat SymplecticTransform::D() const {
  const int m = modes();
  Mat d = Mat::Zero(2 * m, 2 * m);
  for (int j = 0; j < m; ++j) {
    d(2 * j, 2 * j) = s(j);
    d(2 * j + 1, 2 * j + 1) = 1.0 / s(j);
  }
  return d;
}

Mat SymplecticTransform::S() const { return O * D() * Oprime; }

bool SymplecticTransform::passive(double tol) const {
  return (s.array() - 1.0).abs().maxCoeff() <= tol && x.cwiseAbs().maxCoeff() <= tol;
}

SymplecticTransform SymplecticTransform::identity(int m) {
  SymplecticTransform t;
  t.O = Mat::Identity(2 * m, 2 * m);
  t.s = Vec::Ones(m);
  t.Oprime = Mat::Identity(2 * m, 2 * m);
  t.x = Vec::Zero(2 * m);
  return t;
}

AffineMap compose_symplectic(const SymplecticTransform& t) {
  const Mat S = t.S();
  const double defect = symplectic_defect(S);
  if (defect > 1e-10) {
    throw std::invalid_argument("compose_symplectic: non-symplectic input, ||S^T Omega S - Omega|| = " +
                                std::to_string(defect));
  }
  AffineMap map;
  map.S = S;
  map.Sinv = symplectic_inverse(S);
  map.x = t.x;
  return map;
}

int mode_range(const Mat& O) {
  const int m = static_cast<int>(O.rows()) / 2;
  int d = 1;
  for (int out = 0; out < m; ++out) {
    int coupled = 0;
    for (int in = 0; in < m; ++in) {
      const double v = O.block<2, 2>(2 * out, 2 * in).cwiseAbs().maxCoeff();
      if (v > kSparsityThreshold) ++coupled;
    }
    d = std::max(d, coupled);
  }
  return d;
}

int NetworkSpec::total_photons() const { return std::accumulate(nvec.begin(), nvec.end(), 0); }

bool NetworkSpec::gaussian_class() const { return total_photons() == 0; }

int NetworkSpec::mode_range() const { return cvcert::mode_range(transform.O); }

int NetworkSpec::kappa() const {
  const int d = mode_range();
  return 2 * std::min(d * d, m);
}

NetworkSpec NetworkSpec::vacuum(int m) {
  NetworkSpec net;
  net.m = m;
  net.nvec.assign(m, 0);
  net.transform = SymplecticTransform::identity(m);
  return net;
}

namespace {

json matrix_to_json(const Mat& a) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
    rows.push_back(row);
  }
  return rows;
}

Mat matrix_from_json(const json& rows) {
  const auto r = rows.size();
  const auto c = rows.empty() ? 0 : rows.at(0).size();
  Mat a(r, c);
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) a(i, j) = rows.at(i).at(j).get<double>();
  return a;
}

}  // namespace

std::string NetworkSpec::to_json() const {
  json doc;
  doc["m"] = m;
  doc["nvec"] = nvec;
  doc["O"] = matrix_to_json(transform.O);
  doc["D"] = std::vector<double>(transform.s.data(), transform.s.data() + transform.s.size());
  doc["Oprime"] = matrix_to_json(transform.Oprime);
  doc["x"] = std::vector<double>(transform.x.data(), transform.x.data() + transform.x.size());
  return doc.dump(2);
}

NetworkSpec NetworkSpec::from_json(const std::string& text) {
  const json doc = json::parse(text);
  NetworkSpec net;
  net.m = doc.at("m").get<int>();
  net.nvec = doc.at("nvec").get<std::vector<int>>();
  net.transform.O = matrix_from_json(doc.at("O"));
  const auto s = doc.at("D").get<std::vector<double>>();
  net.transform.s = Eigen::Map<const Vec>(s.data(), static_cast<Eigen::Index>(s.size()));
  net.transform.Oprime = matrix_from_json(doc.at("Oprime"));
  const auto x = doc.at("x").get<std::vector<double>>();
  net.transform.x = Eigen::Map<const Vec>(x.data(), static_cast<Eigen::Index>(x.size()));
  if (net.m <= 0 || static_cast<int>(net.nvec.size()) != net.m ||
      net.transform.O.rows() != 2 * net.m || net.transform.Oprime.rows() != 2 * net.m ||
      static_cast<int>(s.size()) != net.m || static_cast<int>(x.size()) != 2 * net.m) {
    throw std::invalid_argument("NetworkSpec::from_json: inconsistent dimensions");
  }
  if (symplectic_defect(net.transform.S()) > 1e-10) {
    throw std::invalid_argument("NetworkSpec::from_json: transform fails the symplectic invariant");
  }
  return net;
}

Mat projector(const NetworkSpec& network, int j) {
  if (j < 1 || j > network.m) throw std::out_of_range("projector: mode index out of range");
  const Mat& O = network.transform.O;
  const Vec a = O.col(2 * (j - 1));
  const Vec b = O.col(2 * (j - 1) + 1);
  return a * a.transpose() + b * b.transpose();
}

Mat beamsplitter(int m, int i, int j, double theta) {
  if (i < 1 || j < 1 || i > m || j > m || i == j) {
    throw std::invalid_argument("beamsplitter: bad mode pair");
  }
  Mat O = Mat::Identity(2 * m, 2 * m);
  const double c = std::cos(theta), s = std::sin(theta);
  const int a = 2 * (i - 1), b = 2 * (j - 1);
  for (int k = 0; k < 2; ++k) {
    O(a + k, a + k) = c;
    O(b + k, b + k) = c;
    O(a + k, b + k) = -s;
    O(b + k, a + k) = s;
  }
  return O;
}

Mat phase_shifter(int m, int j, double theta) {
  if (j < 1 || j > m) throw std::invalid_argument("phase_shifter: bad mode index");
  Mat O = Mat::Identity(2 * m, 2 * m);
  const double c = std::cos(theta), s = std::sin(theta);
  const int a = 2 * (j - 1);
  O(a, a) = c;
  O(a, a + 1) = -s;
  O(a + 1, a) = s;
  O(a + 1, a + 1) = c;
  return O;
}

CMat unitary_from_passive(const Mat& O) {
  const int m = static_cast<int>(O.rows()) / 2;
  CMat W(m, m);
  for (int k = 0; k < m; ++k)
    for (int j = 0; j < m; ++j)
      W(k, j) = std::complex<double>(O(2 * k, 2 * j), O(2 * k + 1, 2 * j));
  return W;
}

Mat passive_from_unitary(const CMat& W) {
  const int m = static_cast<int>(W.rows());
  Mat O(2 * m, 2 * m);
  for (int k = 0; k < m; ++k)
    for (int j = 0; j < m; ++j) {
      const double re = W(k, j).real(), im = W(k, j).imag();
      O(2 * k, 2 * j) = re;
      O(2 * k, 2 * j + 1) = -im;
      O(2 * k + 1, 2 * j) = im;
      O(2 * k + 1, 2 * j + 1) = re;
    }
  return O;
}

SymplecticTransform random_passive(int m, int depth, uint64_t seed) {
  Rng rng(seed);
  Mat O = Mat::Identity(2 * m, 2 * m);
  for (int layer = 0; layer < depth; ++layer) {
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 1);
    for (int i = m - 1; i > 0; --i) {
      std::swap(order[i], order[static_cast<int>(rng.next_below(static_cast<uint64_t>(i) + 1))]);
    }
    for (int i = 0; i + 1 < m; i += 2) {
      const double theta = rng.next_double() * 2.0 * M_PI;
      O = beamsplitter(m, std::min(order[i], order[i + 1]), std::max(order[i], order[i + 1]), theta) * O;
    }
    for (int j = 1; j <= m; ++j) {
      O = phase_shifter(m, j, rng.next_double() * 2.0 * M_PI) * O;
    }
  }
  SymplecticTransform t = SymplecticTransform::identity(m);
  t.O = O;
  return t;
}

SymplecticTransform random_symplectic(int m, int depth, double s_max, uint64_t seed) {
  SymplecticTransform t;
  t.O = random_passive(m, depth, Rng::derive(seed, 1)).O;
  t.Oprime = random_passive(m, depth, Rng::derive(seed, 2)).O;
  Rng rng(Rng::derive(seed, 3));
  t.s = Vec::Ones(m);
  for (int j = 0; j < m; ++j) t.s(j) = 1.0 + (s_max - 1.0) * rng.next_double();
  t.x = Vec::Zero(2 * m);
  return t;
}

}  // namespace cvcert
