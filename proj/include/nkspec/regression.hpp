#pragma once

#include "nkspec/arch.hpp"
#include "nkspec/eigenfunctions.hpp"
#include "nkspec/kernel.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace nkspec {

// m points on the product of `patches` spheres of radius sqrt(p) in R^p;
// patch j occupies coordinates [j p, (j + 1) p).
PointMatrix sample_inputs(std::size_t m, int patches, int p, std::uint64_t seed);

struct FitOptions {
  double jitter_scale = 1e-8;       // jitter = jitter_scale * trace(K) / m
  int max_retries = 3;              // each retry multiplies the jitter by 10
  std::size_t dense_limit = 20000;  // conjugate gradients above this size
  double cg_tolerance = 1e-8;
  int threads = 1;
  std::size_t mem_cap = std::size_t(4) << 30;  // bytes
};

struct SolveInfo {
  double jitter = 0.0;
  int retries = 0;
  bool conjugate_gradient = false;
};

// Solves (K + jitter I) a = y.  K is overwritten by its factor; pass a copy
// if it is needed afterwards.  Throws NumericalError when every retry fails.
Eigen::VectorXd solve_kernel_system(Eigen::MatrixXd& K, const Eigen::VectorXd& y, const FitOptions& opt,
                                    SolveInfo* info = nullptr);

struct FitResult {
  std::vector<double> predictions;
  double train_mse = 0.0;
  SolveInfo solve;
};

FitResult fit_predict(const ArchDag& dag, KernelKind kind, const PointMatrix& train,
                      const std::vector<double>& labels, const PointMatrix& test, const FitOptions& opt = {});

struct ModeResidual {
  double c_hat = 0.0;         // (1/m) sum f_hat(x) Y_i(x)
  double norm_sq_test = 0.0;  // (1/m) sum Y_i(x)^2
  double residual = 0.0;      // (c_hat - 1)^2 * norm_sq_test / 2
  double normalized() const { return norm_sq_test > 0.0 ? 2.0 * residual / norm_sq_test : 0.0; }
};

// mode_values[i][j] = Y_i(x_j) on the test points.
std::vector<ModeResidual> residual_decomposition(const std::vector<double>& predictions,
                                                 const std::vector<std::vector<double>>& mode_values);

// Residual factor exp(-lambda t) of one mode under gradient flow.
double gradient_flow_residual(double lambda, double t);

struct CurveSpec {
  std::string run_id = "run";
  std::string arch_name = "arch";
  const ArchDag* dag = nullptr;
  KernelKind kind = KernelKind::ntk;
  int p = 3;
  std::vector<std::size_t> m_schedule;
  std::size_t m_test = 4000;
  std::size_t m_normalize = 20000;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<std::string> mode_ids;  // empty: all catalogue modes
  CoefficientMode coefficients = CoefficientMode::random;
  bool project = true;
  bool timing = false;  // record wall-clock seconds (otherwise 0)
  FitOptions fit;
};

struct CurveRow {
  std::string run_id;
  std::string arch;
  std::string kernel_kind;
  std::string readout;
  std::size_t m_train = 0;
  std::string mode_id;
  std::string L_index;
  std::uint64_t seed = 0;
  double residual = 0.0;
  double train_mse = 0.0;
  double seconds = 0.0;
  double norm_sq_test = 0.0;  // not part of the CSV
};

// One fit per (m, seed); the training sets for smaller m are prefixes of the
// largest one, and the kernel matrix is computed once per seed.
std::vector<CurveRow> learning_curve(const CurveSpec& spec);

// Paired GAP and flatten curves on translation-symmetric targets.
std::vector<CurveRow> gap_vs_flatten(const CurveSpec& flatten, const ArchDag& gap_dag, const std::string& gap_name);

// Peak bytes learning_curve needs for a schedule.
std::size_t curve_memory_bytes(const std::vector<std::size_t>& m_schedule, std::size_t m_test);

std::string csv_header();
std::string csv_row(const CurveRow& r);

struct CurveStat {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation over seeds
  int n = 0;
};

// Key: (arch, readout, m, mode).  Values use the normalized residual.
using CurveKey = std::tuple<std::string, std::string, std::size_t, std::string>;
std::map<CurveKey, CurveStat> curve_stats(const std::vector<CurveRow>& rows);

// Welch standard error of the difference of two means.
double welch_se(const CurveStat& a, const CurveStat& b);

}  // namespace nkspec
