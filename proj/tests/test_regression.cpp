#include "doctest.h"

#include "nkspec/error.hpp"
#include "nkspec/regression.hpp"

#include <cmath>

using namespace nkspec;

TEST_CASE("sampled inputs lie on the product of spheres") {
  const PointMatrix X = sample_inputs(100, 8, 3, 1);
  CHECK(X.cols() == 24);
  for (int i = 0; i < 100; ++i)
    for (int j = 0; j < 8; ++j) CHECK(X.row(i).segment(3 * j, 3).squaredNorm() == doctest::Approx(3.0).epsilon(1e-12));
  CHECK((sample_inputs(100, 8, 3, 1) - X).cwiseAbs().maxCoeff() == 0.0);
  CHECK((sample_inputs(100, 8, 3, 2) - X).cwiseAbs().maxCoeff() > 0.0);
  // prefixes: a longer sample starts with the shorter one
  CHECK((sample_inputs(150, 8, 3, 1).topRows(100) - X).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("kernel solve matches a reference factorization") {
  const ArchDag g = hr_cnn(2, Dual::gaussian(1.0));
  const PointMatrix X = sample_inputs(60, 8, 2, 3);
  Eigen::MatrixXd K = kernel_matrix(g, KernelKind::ntk, X, X, true);
  Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(60, -1.0, 1.0);
  FitOptions opt;
  SolveInfo info;
  Eigen::MatrixXd work = K;
  const Eigen::VectorXd a = solve_kernel_system(work, y, opt, &info);
  Eigen::MatrixXd Kj = K;
  Kj.diagonal().array() += info.jitter;
  const Eigen::VectorXd ref = Kj.ldlt().solve(y);
  CHECK((a - ref).norm() <= 1e-8 * ref.norm());
  CHECK(info.jitter == doctest::Approx(1e-8 * K.trace() / 60));

  // conjugate gradients above the dense limit
  FitOptions cg = opt;
  cg.dense_limit = 10;
  cg.cg_tolerance = 1e-12;
  Eigen::MatrixXd work2 = K;
  SolveInfo info2;
  const Eigen::VectorXd b = solve_kernel_system(work2, y, cg, &info2);
  CHECK(info2.conjugate_gradient);
  CHECK((b - ref).norm() <= 1e-5 * ref.norm());
}

TEST_CASE("interpolation recovers a function in the span of the kernel") {
  const ArchDag g = mlp_family(2, 1, Dual::gaussian(1.0));
  const PointMatrix X = sample_inputs(40, 1, 16, 3);
  const PointMatrix T = sample_inputs(10, 1, 16, 4);
  std::vector<double> y(40);
  for (int i = 0; i < 40; ++i) y[i] = X(i, 0);
  const auto fit = fit_predict(g, KernelKind::ntk, X, y, X);
  for (int i = 0; i < 40; ++i) CHECK(fit.predictions[i] == doctest::Approx(y[i]).epsilon(1e-4).scale(1.0));
  CHECK(fit.train_mse < 1e-8);
}

TEST_CASE("residual decomposition") {
  // f_hat = 0.5 Y_0 + 1.0 Y_1 on orthogonal test vectors
  const std::vector<double> y0 = {1, -1, 1, -1}, y1 = {1, 1, -1, -1};
  std::vector<double> pred(4);
  for (int i = 0; i < 4; ++i) pred[i] = 0.5 * y0[i] + y1[i];
  const auto r = residual_decomposition(pred, {y0, y1});
  CHECK(r[0].c_hat == doctest::Approx(0.5));
  CHECK(r[0].norm_sq_test == doctest::Approx(1.0));
  CHECK(r[0].residual == doctest::Approx(0.125));
  CHECK(r[0].normalized() == doctest::Approx(0.25));
  CHECK(r[1].residual == doctest::Approx(0.0));
  // the zero predictor leaves half of every norm
  const auto z = residual_decomposition({0, 0, 0, 0}, {y0});
  CHECK(z[0].residual == doctest::Approx(0.5));
  CHECK(z[0].normalized() == doctest::Approx(1.0));
}

TEST_CASE("gradient flow") {
  CHECK(gradient_flow_residual(0.0, 10.0) == 1.0);
  CHECK(gradient_flow_residual(2.0, 0.5) == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("learning curves") {
  const ArchDag g = hr_cnn(2, Dual::gaussian(1.0));
  CurveSpec s;
  s.dag = &g;
  s.p = 2;
  s.m_schedule = {16, 48};
  s.m_test = 200;
  s.m_normalize = 2000;
  s.seeds = {1, 2};
  s.mode_ids = {"Y1", "Y2", "Y3"};
  const auto rows = learning_curve(s);
  CHECK(rows.size() == 2 * 3 * 2);
  for (const auto& r : rows) {
    CHECK(r.seconds == 0.0);
    CHECK(r.residual >= 0.0);
  }
  CHECK(csv_header().find("residual") != std::string::npos);

  s.fit.threads = 3;
  const auto again = learning_curve(s);
  REQUIRE(again.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(csv_row(again[i]) == csv_row(rows[i]));

  // the linear mode is learned first
  const auto st = curve_stats(rows);
  CHECK(st.at({"arch", "flatten", 48, "Y1"}).mean < st.at({"arch", "flatten", 48, "Y3"}).mean);

  s.fit.mem_cap = 1000;
  CHECK_THROWS_AS(learning_curve(s), ResourceError);
}

TEST_CASE("GAP comparison needs symmetric targets") {
  const ArchDag f = hr_cnn(2, Dual::gaussian(1.0), Readout::flatten, false);
  const ArchDag g = hr_cnn(2, Dual::gaussian(1.0), Readout::gap, false);
  CurveSpec s;
  s.dag = &f;
  s.p = 2;
  s.m_schedule = {16};
  s.m_test = 50;
  s.m_normalize = 500;
  s.seeds = {1};
  s.mode_ids = {"Y1"};
  CHECK_THROWS_AS(gap_vs_flatten(s, g, "gap"), ConfigError);
  s.coefficients = CoefficientMode::constant;
  CHECK(gap_vs_flatten(s, g, "gap").size() == 2);
}

TEST_CASE("Welch standard error") {
  CurveStat a{1.0, 0.3, 3}, b{0.5, 0.4, 3};
  CHECK(welch_se(a, b) == doctest::Approx(std::sqrt(0.09 / 3 + 0.16 / 3)));
}
