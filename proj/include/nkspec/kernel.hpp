#pragma once

#include "nkspec/arch.hpp"
#include "nkspec/jet.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace nkspec {

enum class KernelKind { nngp, ntk };

KernelKind parse_kernel_kind(const std::string& s);
std::string to_string(KernelKind k);

// Row-major point cloud, one point per row.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Sparse map input-node id -> degree.
using MultiIndex = std::map<int, int>;

struct KernelPair {
  double nngp = 0.0;
  double ntk = 0.0;
};

// Compiled form of the NNGP/NTK recursions on one DAG.  Evaluation is
// re-entrant: every call takes caller-owned scratch.
class KernelEvaluator {
 public:
  explicit KernelEvaluator(const ArchDag& dag);

  const ArchDag& dag() const { return *dag_; }
  std::size_t scratch_size() const { return dag_->size(); }

  // t holds one correlation per input position (dag.inputs() order).
  // Fills K and Theta for every node; returns the output values.
  KernelPair eval(const double* t, double* K, double* T) const;

  // GAP readout: tpair[(u * w + v) * s + j] is the correlation between input j
  // of pen subtree u of x and input j of pen subtree v of x'.
  KernelPair eval_gap(const double* tpair, double* K, double* T) const;

  bool has_gap() const { return gap_ >= 0; }
  int gap_window() const { return static_cast<int>(pens_.size()); }
  int pen_inputs() const { return pen_inputs_; }

  // Recomputes the listed nodes (topological order) from their children.
  void recompute(const std::vector<int>& nodes, double* K, double* T) const;

 private:
  void eval_node(int u, double* K, double* T) const;

  const ArchDag* dag_;
  std::vector<int> order_;  // non-input nodes, children first
  std::vector<double> inv_deg_;
  int gap_ = -1;
  std::vector<int> pens_;
  std::vector<std::vector<int>> pen_order_;   // non-input nodes of each pen subtree
  std::vector<std::vector<int>> pen_inputs_of_;  // input ids of each pen subtree in offset order
  int pen_inputs_ = 0;
  std::vector<int> above_gap_;  // gap node and the chain above it
};

double nngp_eval(const ArchDag& dag, const std::vector<double>& t);
double ntk_eval(const ArchDag& dag, const std::vector<double>& t);

// T[u][v] is the correlation vector between pen subtree u of x and v of x'.
using PairCorrelations = std::vector<std::vector<std::vector<double>>>;
double nngp_gap_eval(const ArchDag& dag, const PairCorrelations& T);
double ntk_gap_eval(const ArchDag& dag, const PairCorrelations& T);

struct KernelMatrixMeta {
  std::string dual;
  KernelKind kind = KernelKind::ntk;
  Readout readout = Readout::flatten;
};

// Entry (i, j) = kernel at the patchwise correlations of (X_i, Y_j).  When
// `symmetric` is set, Y must be X and only the lower triangle is evaluated,
// then mirrored.  Deterministic for any thread count.
Eigen::MatrixXd kernel_matrix(const ArchDag& dag, KernelKind kind, const PointMatrix& X,
                              const PointMatrix& Y, bool symmetric, int threads = 1);

// Both kinds in one sweep (the recursion computes them together).
void kernel_matrix_both(const ArchDag& dag, const PointMatrix& X, const PointMatrix& Y, bool symmetric,
                        int threads, Eigen::MatrixXd* nngp, Eigen::MatrixXd* ntk);

// Throws ConfigError when some input block is off its sphere.
void check_on_spheres(const ArchDag& dag, const PointMatrix& X, double rel_tol = 1e-6);

// Binary persistence: "NKRM", u32 version, u64 rows, then row-major f64,
// all little-endian.  Columns follow from the file size.
void write_kernel_matrix(const std::string& path, const Eigen::MatrixXd& M);
Eigen::MatrixXd read_kernel_matrix(const std::string& path);

// Mixed derivative d^r K(0) (or Theta) with all non-support correlations at 0.
double derivative_at_zero(const ArchDag& dag, KernelKind kind, const MultiIndex& r);

// Taylor coefficient of x^r (derivative / r!).  For GAP DAGs this is the
// coefficient in the correlations that pair each support input of x with the
// same position of x' shifted by `shift` pen subtrees.
double taylor_coefficient(const ArchDag& dag, KernelKind kind, const MultiIndex& r, int shift = 0);

enum class EigenMethod { jet, monte_carlo };

struct EigenEstimate {
  double value = 0.0;
  double std_error = 0.0;  // zero for the jet method
};

// Leading-order E[t^r P_r(t)] for a single sphere of dimension d.
double moment_against_gegenbauer(int d, int r);

// Eigenvalue of the normalized product harmonics of multi-index r.  For GAP
// DAGs, the eigenvalue on the symmetrized harmonic.
EigenEstimate eigenvalue_estimate(const ArchDag& dag, KernelKind kind, const MultiIndex& r, EigenMethod method,
                                  std::size_t samples = 100000, std::uint64_t seed = 1);

}  // namespace nkspec
