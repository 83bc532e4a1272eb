#include "doctest.h"

#include "nkspec/harmonics.hpp"
#include "nkspec/kernel.hpp"
#include "nkspec/regression.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

using namespace nkspec;

namespace {

// Closed-form recursion for a depth-L MLP: hidden layers compose the dual,
// the NTK accumulates phi'(K) (K + Theta), the identity output adds K.
KernelPair mlp_oracle(const Dual& phi, int depth, double t) {
  double K = t, T = 0.0;
  for (int l = 0; l < depth; ++l) {
    const double a = K;
    K = phi.eval(a);
    T = phi.deriv(a) * (a + T);
  }
  return {K, K + T};
}

std::vector<double> random_corr(std::size_t n, std::mt19937_64& g) {
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  std::vector<double> t(n);
  for (double& x : t) x = u(g);
  return t;
}

}  // namespace

TEST_CASE("MLP kernels match the closed-form recursion") {
  const Dual phi = Dual::gaussian(1.0);
  for (int depth : {1, 2, 4}) {
    const ArchDag g = mlp_family(2, depth, phi);
    for (double t : {-0.7, 0.0, 0.3, 1.0}) {
      const auto o = mlp_oracle(phi, depth, t);
      CHECK(nngp_eval(g, {t}) == doctest::Approx(o.nngp).epsilon(1e-14));
      CHECK(ntk_eval(g, {t}) == doctest::Approx(o.ntk).epsilon(1e-14));
    }
  }
}

TEST_CASE("kernels are normalized on the diagonal") {
  const Dual phi = Dual::centered_exp(1.0);
  for (const ArchDag& g : {hr_cnn(2, phi), d_cnn(2, phi), s_cnn(2, phi)}) {
    std::vector<double> ones(g.inputs().size(), 1.0);
    CHECK(nngp_eval(g, ones) == doctest::Approx(1.0).epsilon(1e-13));
  }
}

TEST_CASE("a tree kernel is symmetric under swapping sibling subtrees") {
  const ArchDag g = hr_cnn(2, Dual::gaussian(1.0));
  std::mt19937_64 rng(3);
  auto t = random_corr(g.inputs().size(), rng);
  auto s = t;
  std::swap(s[0], s[1]);  // two inputs of one first-layer filter
  CHECK(ntk_eval(g, t) == doctest::Approx(ntk_eval(g, s)).epsilon(1e-14));
}

TEST_CASE("kernel matrices") {
  const ArchDag g = hr_cnn(2, Dual::gaussian(1.0));
  const PointMatrix X = sample_inputs(30, 8, 2, 5), Y = sample_inputs(7, 8, 2, 6);
  const Eigen::MatrixXd S = kernel_matrix(g, KernelKind::ntk, X, X, true, 1);
  const Eigen::MatrixXd F = kernel_matrix(g, KernelKind::ntk, X, X, false, 1);
  CHECK((S - F).cwiseAbs().maxCoeff() == 0.0);
  CHECK((S - S.transpose()).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::MatrixXd T3 = kernel_matrix(g, KernelKind::ntk, X, Y, false, 3);
  const Eigen::MatrixXd T1 = kernel_matrix(g, KernelKind::ntk, X, Y, false, 1);
  CHECK((T3 - T1).cwiseAbs().maxCoeff() == 0.0);

  // one entry by hand: per-patch correlations
  std::vector<double> t;
  for (int v : g.inputs()) {
    const auto& n = g.node(v);
    double d = 0.0;
    for (int c = 0; c < n.dim; ++c) d += X(2, n.input_offset + c) * Y(4, n.input_offset + c);
    t.push_back(d / n.dim);
  }
  CHECK(T1(2, 4) == doctest::Approx(ntk_eval(g, t)).epsilon(1e-13));

  Eigen::MatrixXd Kn, Kt;
  kernel_matrix_both(g, X, Y, false, 2, &Kn, &Kt);
  CHECK((Kt - T1).cwiseAbs().maxCoeff() == 0.0);
  CHECK((Kn - kernel_matrix(g, KernelKind::nngp, X, Y, false, 1)).cwiseAbs().maxCoeff() == 0.0);
  // a Gram matrix is positive semidefinite
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  CHECK(es.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("points off the product of spheres are rejected") {
  const ArchDag g = hr_cnn(2, Dual::gaussian(1.0));
  PointMatrix X = sample_inputs(4, 8, 2, 1);
  CHECK_NOTHROW(check_on_spheres(g, X));
  X(1, 3) *= 1.5;
  CHECK_THROWS(check_on_spheres(g, X));
}

TEST_CASE("binary kernel matrix round trip") {
  Eigen::MatrixXd M(3, 5);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) M(i, j) = std::sin(1.0 + i * 5 + j);
  const auto path = (std::filesystem::temp_directory_path() / "nkspec_test_matrix.bin").string();
  write_kernel_matrix(path, M);
  const Eigen::MatrixXd R = read_kernel_matrix(path);
  CHECK(R.rows() == 3);
  CHECK(R.cols() == 5);
  CHECK((R - M).cwiseAbs().maxCoeff() == 0.0);
  CHECK(std::filesystem::file_size(path) == 4 + 4 + 8 + 15 * 8);
  std::filesystem::remove(path);
}

TEST_CASE("jet derivatives match finite differences") {
  const Dual phi = Dual::centered_exp(1.0);
  const ArchDag g = hr_cnn(2, phi);
  const std::size_t n = g.inputs().size();
  const int a = g.inputs()[0], b = g.inputs()[1], c = g.inputs()[5];
  auto f = [&](KernelKind kind, double x, double y) {
    std::vector<double> t(n, 0.0);
    t[0] = x;
    t[g.input_position(c)] = y;
    return kind == KernelKind::nngp ? nngp_eval(g, t) : ntk_eval(g, t);
  };
  for (KernelKind kind : {KernelKind::nngp, KernelKind::ntk}) {
    const double h = 1e-3;
    // first derivative in one variable
    const double d1 = (f(kind, h, 0) - f(kind, -h, 0)) / (2 * h);
    CHECK(derivative_at_zero(g, kind, {{a, 1}}) == doctest::Approx(d1).epsilon(1e-5));
    // mixed derivative in two variables
    const double d11 = (f(kind, h, h) - f(kind, h, -h) - f(kind, -h, h) + f(kind, -h, -h)) / (4 * h * h);
    CHECK(derivative_at_zero(g, kind, {{a, 1}, {c, 1}}) == doctest::Approx(d11).epsilon(1e-5));
    // second derivative
    const double d2 = (f(kind, h, 0) - 2 * f(kind, 0, 0) + f(kind, -h, 0)) / (h * h);
    CHECK(derivative_at_zero(g, kind, {{a, 2}}) == doctest::Approx(d2).epsilon(1e-5));
    // Taylor coefficient = derivative / r!
    CHECK(taylor_coefficient(g, kind, {{a, 2}, {b, 1}}) ==
          doctest::Approx(derivative_at_zero(g, kind, {{a, 2}, {b, 1}}) / 2.0));
  }
}

TEST_CASE("identity-dual MLP has eigencoefficient exactly t") {
  const ArchDag g = mlp_family(3, 2, Dual::identity());
  const int v = g.inputs()[0];
  CHECK(derivative_at_zero(g, KernelKind::nngp, {{v, 1}}) == doctest::Approx(1.0));
  CHECK(derivative_at_zero(g, KernelKind::nngp, {{v, 2}}) == 0.0);
  // the jet eigenvalue is E[t P_1(t)] = 1/d
  const auto e = eigenvalue_estimate(g, KernelKind::nngp, {{v, 1}}, EigenMethod::jet);
  CHECK(e.value == doctest::Approx(1.0 / 81));
}

TEST_CASE("Monte Carlo eigenvalues agree with quadrature on a single-node MLP") {
  // Funk-Hecke: lambda_r = |S_{d-2}|/|S_{d-1}| int K(t) P_r(t) (1-t^2)^{(d-3)/2} dt
  const Dual phi = Dual::gaussian(1.0);
  const ArchDag g = mlp_family(2, 2, phi);  // d = 16
  const int d = 16, v = g.inputs()[0];
  const auto q = gauss_gegenbauer(d, 60);
  for (int r = 1; r <= 3; ++r) {
    double lam = 0.0, w = 0.0;
    for (std::size_t i = 0; i < q.nodes.size(); ++i) {
      lam += q.weights[i] * ntk_eval(g, {q.nodes[i]}) * gegenbauer_eval(d, r, q.nodes[i]);
      w += q.weights[i];
    }
    lam /= w;
    const auto mc = eigenvalue_estimate(g, KernelKind::ntk, {{v, r}}, EigenMethod::monte_carlo, 400000, 9);
    CHECK(std::abs(mc.value - lam) < 4.0 * mc.std_error + 1e-12);
    CHECK(mc.std_error < 0.1 * lam);
    // the jet value is the leading term of the same integral
    const auto jet = eigenvalue_estimate(g, KernelKind::ntk, {{v, r}}, EigenMethod::jet);
    CHECK(jet.value > 0.0);
    CHECK(jet.value < lam * 1.0001);
  }
}

TEST_CASE("Gegenbauer moments") {
  // E[t^r P_r(t)] by quadrature
  for (int d : {3, 16, 81}) {
    const auto q = gauss_gegenbauer(d, 40);
    for (int r = 0; r <= 5; ++r) {
      double m = 0.0, w = 0.0;
      for (std::size_t i = 0; i < q.nodes.size(); ++i) {
        m += q.weights[i] * std::pow(q.nodes[i], r) * gegenbauer_eval(d, r, q.nodes[i]);
        w += q.weights[i];
      }
      CHECK(moment_against_gegenbauer(d, r) == doctest::Approx(m / w).epsilon(1e-10));
    }
  }
}

TEST_CASE("GAP and flatten jet eigenvalues agree on pen-local modes") {
  const Dual phi = Dual::gaussian(1.0);
  const ArchDag flat = hr_cnn(2, phi, Readout::flatten, false);
  const ArchDag gap = hr_cnn(2, phi, Readout::gap, false);
  const MultiIndex rf{{flat.inputs()[0], 1}, {flat.inputs()[1], 1}};
  const MultiIndex rg{{gap.inputs()[0], 1}, {gap.inputs()[1], 1}};
  const double a = eigenvalue_estimate(flat, KernelKind::ntk, rf, EigenMethod::jet).value;
  const double b = eigenvalue_estimate(gap, KernelKind::ntk, rg, EigenMethod::jet).value;
  CHECK(b == doctest::Approx(a).epsilon(1e-6));
}
