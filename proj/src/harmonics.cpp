#include "nkspec/harmonics.hpp"

#include "nkspec/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace nkspec {

namespace {

void check_dim(int d) {
  if (d < 2) throw ConfigError("sphere dimension must be at least 2, got " + std::to_string(d));
}

}  // namespace

double log_surface_area(int d) {
  check_dim(d);
  return std::log(2.0) + 0.5 * d * std::log(std::numbers::pi) - std::lgamma(0.5 * d);
}

double surface_area(int d) { return std::exp(log_surface_area(d)); }

BigInt harmonic_count(int d, int r) {
  check_dim(d);
  if (r < 0) return 0;
  if (r == 0) return 1;
  // (2r + d - 2)/r * C(r + d - 3, r - 1)
  BigInt binom = 1;
  for (int i = 1; i <= r - 1; ++i) binom = binom * (d - 2 + i) / i;
  return binom * (2 * r + d - 2) / r;
}

double harmonic_count_double(int d, int r) { return harmonic_count(d, r).convert_to<double>(); }

std::vector<double> gegenbauer_all(int d, int R, double t) {
  check_dim(d);
  std::vector<double> P(static_cast<std::size_t>(std::max(R, 0)) + 1);
  P[0] = 1.0;
  if (R >= 1) P[1] = t;
  for (int r = 1; r < R; ++r)
    P[r + 1] = ((2.0 * r + d - 2) * t * P[r] - r * P[r - 1]) / (r + d - 2.0);
  return P;
}

double gegenbauer_eval(int d, int r, double t) {
  if (r < 0) throw ConfigError("negative Gegenbauer degree");
  return gegenbauer_all(d, r, t)[r];
}

double gegenbauer_leading_coefficient(int d, int r) {
  check_dim(d);
  double lc = 1.0;
  for (int k = 1; k < r; ++k) lc *= (2.0 * k + d - 2) / (k + d - 2.0);
  return lc;
}

std::vector<double> gegenbauer_rodrigues(int d, int r) {
  check_dim(d);
  if (r < 0) throw ConfigError("negative Gegenbauer degree");
  // P_r = (-1)^r R (1-t^2)^{-a+r} d^r/dt^r (1-t^2)^a with a = r + (d-3)/2.
  // Writing d^j/dt^j (1-t^2)^a = q_j(t) (1-t^2)^{a-j} gives
  // q_{j+1} = q_j' (1 - t^2) - 2 (a - j) t q_j.
  const double a = r + (d - 3) / 2.0;
  std::vector<double> q{1.0};
  for (int j = 0; j < r; ++j) {
    std::vector<double> next(q.size() + 1, 0.0);
    for (std::size_t k = 1; k < q.size(); ++k) {
      const double dk = k * q[k];
      next[k - 1] += dk;
      next[k + 1] -= dk;
    }
    for (std::size_t k = 0; k < q.size(); ++k) next[k + 1] -= 2.0 * (a - j) * q[k];
    q = std::move(next);
  }
  const double logR = std::lgamma((d - 1) / 2.0) - r * std::log(2.0) - std::lgamma(r + (d - 1) / 2.0);
  const double scale = (r % 2 ? -1.0 : 1.0) * std::exp(logR);
  for (double& c : q) c *= scale;
  return q;
}

Quadrature gauss_gegenbauer(int d, int n) {
  check_dim(d);
  if (n < 1) throw ConfigError("quadrature needs at least one node");
  const double lambda = (d - 2) / 2.0;
  const double beta = (d - 3) / 2.0;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    double b2;
    if (lambda == 0.0) b2 = k == 1 ? 0.5 : 0.25;  // Chebyshev first kind
    else b2 = k * (k + 2 * lambda - 1) / (4.0 * (k + lambda) * (k + lambda - 1));
    J(k, k - 1) = J(k - 1, k) = std::sqrt(b2);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  const double mu0 = std::sqrt(std::numbers::pi) * std::exp(std::lgamma(beta + 1) - std::lgamma(beta + 1.5));
  Quadrature q;
  q.nodes.resize(n);
  q.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    q.nodes[i] = es.eigenvalues()(i);
    const double v = es.eigenvectors()(0, i);
    q.weights[i] = mu0 * v * v;
  }
  return q;
}

double gegenbauer_inner(int d, int r, int s, int n) {
  const Quadrature q = gauss_gegenbauer(d, n);
  double acc = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i)
    acc += q.weights[i] * gegenbauer_eval(d, r, q.nodes[i]) * gegenbauer_eval(d, s, q.nodes[i]);
  return acc;
}

double gegenbauer_norm_squared(int d, int r) {
  check_dim(d);
  const double ratio = d == 2 ? std::numbers::pi : std::exp(log_surface_area(d) - log_surface_area(d - 1));
  return ratio / harmonic_count_double(d, r);
}

std::vector<double> real_harmonic_basis(int d, int r, const double* xi) {
  if (r < 0) throw ConfigError("negative harmonic degree");
  if (d == 2) {
    const double th = std::atan2(xi[1], xi[0]);
    if (r == 0) return {1.0};
    return {std::sqrt(2.0) * std::cos(r * th), std::sqrt(2.0) * std::sin(r * th)};
  }
  if (d == 3) {
    const double z = std::clamp(xi[2], -1.0, 1.0);
    const double ph = std::atan2(xi[1], xi[0]);
    std::vector<double> out;
    out.reserve(2 * r + 1);
    for (int m = 0; m <= r; ++m) {
      // Orthonormal w.r.t. the uniform probability measure on S^2.
      double lf = std::lgamma(r - m + 1.0) - std::lgamma(r + m + 1.0);
      double norm = std::sqrt((2.0 * r + 1) * std::exp(lf));
      // std::assoc_legendre omits the Condon-Shortley phase; the sign is
      // irrelevant for orthonormality.
      double P = std::assoc_legendre(r, m, z);
      if (m == 0) {
        out.push_back(norm * P);
      } else {
        out.push_back(std::sqrt(2.0) * norm * P * std::cos(m * ph));
        out.push_back(std::sqrt(2.0) * norm * P * std::sin(m * ph));
      }
    }
    return out;
  }
  throw ConfigError("explicit harmonic basis is only available for d = 2 and d = 3");
}

double addition_theorem_check(int d, int r, int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  auto unit = [&] {
    std::vector<double> v(d);
    double n = 0.0;
    for (double& x : v) {
      x = normal(rng);
      n += x * x;
    }
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
  };
  const double N = harmonic_count_double(d, r);
  double worst = 0.0;
  for (int i = 0; i < trials; ++i) {
    auto a = unit(), b = unit();
    auto Ya = real_harmonic_basis(d, r, a.data());
    auto Yb = real_harmonic_basis(d, r, b.data());
    double sum = 0.0, dot = 0.0;
    for (std::size_t l = 0; l < Ya.size(); ++l) sum += Ya[l] * Yb[l];
    for (int k = 0; k < d; ++k) dot += a[k] * b[k];
    worst = std::max(worst, std::abs(gegenbauer_eval(d, r, dot) - sum / N));
  }
  return worst;
}

double zonal_harmonic(int d, int r, const double* e, const double* xi) {
  double dot = 0.0;
  for (int k = 0; k < d; ++k) dot += e[k] * xi[k];
  return std::sqrt(harmonic_count_double(d, r)) * gegenbauer_eval(d, r, dot / std::sqrt(static_cast<double>(d)));
}

}  // namespace nkspec
