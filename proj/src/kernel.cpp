#include "nkspec/kernel.hpp"

#include "nkspec/error.hpp"
#include "nkspec/harmonics.hpp"
#include "nkspec/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace nkspec {

KernelKind parse_kernel_kind(const std::string& s) {
  if (s == "nngp") return KernelKind::nngp;
  if (s == "ntk") return KernelKind::ntk;
  throw ConfigError("unknown kernel kind '" + s + "' (valid: nngp, ntk)");
}

std::string to_string(KernelKind k) { return k == KernelKind::nngp ? "nngp" : "ntk"; }

// ---------------------------------------------------------------------------
// Recursion evaluator

KernelEvaluator::KernelEvaluator(const ArchDag& dag) : dag_(&dag) {
  inv_deg_.assign(dag.size(), 0.0);
  for (int u : dag.topo_order()) {
    const auto& n = dag.node(u);
    if (n.kind == NodeKind::input) continue;
    order_.push_back(u);
    inv_deg_[u] = 1.0 / static_cast<double>(n.children.size());
  }
  gap_ = dag.gap_node();
  if (gap_ < 0) return;

  pens_ = dag.node(gap_).children;
  std::vector<int> owner(dag.size(), -1);
  for (std::size_t i = 0; i < pens_.size(); ++i) {
    // Collect the subtree below each pen node.
    std::vector<int> stack{pens_[i]};
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      owner[u] = static_cast<int>(i);
      for (int c : dag.node(u).children) stack.push_back(c);
    }
  }
  pen_order_.resize(pens_.size());
  pen_inputs_of_.resize(pens_.size());
  for (int u : dag.topo_order()) {
    if (owner[u] < 0) continue;
    if (dag.node(u).kind == NodeKind::input) pen_inputs_of_[owner[u]].push_back(u);
    else pen_order_[owner[u]].push_back(u);
  }
  for (auto& ins : pen_inputs_of_) {
    std::sort(ins.begin(), ins.end(),
              [&](int a, int b) { return dag.node(a).input_offset < dag.node(b).input_offset; });
  }
  pen_inputs_ = static_cast<int>(pen_inputs_of_[0].size());
  for (std::size_t i = 0; i < pens_.size(); ++i) {
    if (static_cast<int>(pen_inputs_of_[i].size()) != pen_inputs_)
      throw ConfigError("GAP readout needs isomorphic pen subtrees");
    for (int j = 0; j < pen_inputs_; ++j)
      if (dag.node(pen_inputs_of_[i][j]).dim != dag.node(pen_inputs_of_[0][j]).dim)
        throw ConfigError("GAP readout needs isomorphic pen subtrees");
  }
  bool above = false;
  for (int u : order_) {
    if (u == gap_) above = true;
    if (above && u != gap_) above_gap_.push_back(u);
  }
}

void KernelEvaluator::eval_node(int u, double* K, double* T) const {
  const auto& n = dag_->node(u);
  double a = 0.0, b = 0.0;
  for (int c : n.children) {
    a += K[c];
    b += K[c] + T[c];
  }
  a *= inv_deg_[u];
  b *= inv_deg_[u];
  if (n.activation.is_identity()) {
    K[u] = a;
    T[u] = b;
  } else {
    double v, s;
    n.activation.eval_both(a, v, s);
    K[u] = v;
    T[u] = s * b;
  }
}

KernelPair KernelEvaluator::eval(const double* t, double* K, double* T) const {
  if (gap_ >= 0) throw ConfigError("GAP DAG needs pair correlations (eval_gap)");
  const auto& ins = dag_->inputs();
  for (std::size_t i = 0; i < ins.size(); ++i) {
    K[ins[i]] = t[i];
    T[ins[i]] = 0.0;
  }
  for (int u : order_) eval_node(u, K, T);
  const int o = dag_->output();
  return {K[o], T[o]};
}

void KernelEvaluator::recompute(const std::vector<int>& nodes, double* K, double* T) const {
  for (int u : nodes) eval_node(u, K, T);
}

KernelPair KernelEvaluator::eval_gap(const double* tpair, double* K, double* T) const {
  if (gap_ < 0) throw ConfigError("flatten DAG passed to the GAP evaluator");
  const int w = static_cast<int>(pens_.size());
  const int s = pen_inputs_;
  double a = 0.0, b = 0.0;
  for (int u = 0; u < w; ++u) {
    const auto& ins = pen_inputs_of_[u];
    for (int v = 0; v < w; ++v) {
      const double* tt = tpair + (static_cast<std::size_t>(u) * w + v) * s;
      for (int j = 0; j < s; ++j) {
        K[ins[j]] = tt[j];
        T[ins[j]] = 0.0;
      }
      for (int x : pen_order_[u]) eval_node(x, K, T);
      a += K[pens_[u]];
      b += K[pens_[u]] + T[pens_[u]];
    }
  }
  const double inv = 1.0 / (static_cast<double>(w) * w);
  a *= inv;
  b *= inv;
  const auto& g = dag_->node(gap_);
  if (g.activation.is_identity()) {
    K[gap_] = a;
    T[gap_] = b;
  } else {
    double v, sl;
    g.activation.eval_both(a, v, sl);
    K[gap_] = v;
    T[gap_] = sl * b;
  }
  for (int u : above_gap_) eval_node(u, K, T);
  const int o = dag_->output();
  return {K[o], T[o]};
}

namespace {

KernelPair eval_flat(const ArchDag& dag, const std::vector<double>& t) {
  if (t.size() != dag.inputs().size())
    throw ConfigError("correlation vector has " + std::to_string(t.size()) + " entries, DAG has " +
                      std::to_string(dag.inputs().size()) + " inputs");
  KernelEvaluator ev(dag);
  std::vector<double> K(dag.size()), T(dag.size());
  return ev.eval(t.data(), K.data(), T.data());
}

KernelPair eval_pairs(const ArchDag& dag, const PairCorrelations& Tc) {
  KernelEvaluator ev(dag);
  const int w = ev.gap_window(), s = ev.pen_inputs();
  if (static_cast<int>(Tc.size()) != w) throw ConfigError("pair correlation matrix must be w x w");
  std::vector<double> flat(static_cast<std::size_t>(w) * w * s);
  for (int u = 0; u < w; ++u) {
    if (static_cast<int>(Tc[u].size()) != w) throw ConfigError("pair correlation matrix must be w x w");
    for (int v = 0; v < w; ++v) {
      if (static_cast<int>(Tc[u][v].size()) != s) throw ConfigError("pair correlation vector has wrong length");
      std::copy(Tc[u][v].begin(), Tc[u][v].end(), flat.begin() + (static_cast<std::size_t>(u) * w + v) * s);
    }
  }
  std::vector<double> K(dag.size()), T(dag.size());
  return ev.eval_gap(flat.data(), K.data(), T.data());
}

}  // namespace

double nngp_eval(const ArchDag& dag, const std::vector<double>& t) { return eval_flat(dag, t).nngp; }
double ntk_eval(const ArchDag& dag, const std::vector<double>& t) { return eval_flat(dag, t).ntk; }
double nngp_gap_eval(const ArchDag& dag, const PairCorrelations& T) { return eval_pairs(dag, T).nngp; }
double ntk_gap_eval(const ArchDag& dag, const PairCorrelations& T) { return eval_pairs(dag, T).ntk; }

// ---------------------------------------------------------------------------
// Kernel matrices

void check_on_spheres(const ArchDag& dag, const PointMatrix& X, double rel_tol) {
  if (X.cols() != dag.reference_dim())
    throw ConfigError("points have dimension " + std::to_string(X.cols()) + ", DAG expects " +
                      std::to_string(dag.reference_dim()));
  for (int v : dag.inputs()) {
    const auto& n = dag.node(v);
    const double r = std::sqrt(static_cast<double>(n.dim));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      double nr = X.row(i).segment(n.input_offset, n.dim).norm();
      if (std::abs(nr - r) > rel_tol * r)
        throw ConfigError("point " + std::to_string(i) + " is off the sphere of input node " + std::to_string(v));
    }
  }
}

namespace {

struct Block {
  int offset;
  int dim;
  double inv_dim;
};

inline double dot(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void kernel_matrix_both(const ArchDag& dag, const PointMatrix& X, const PointMatrix& Y, bool symmetric,
                        int threads, Eigen::MatrixXd* nngp, Eigen::MatrixXd* ntk) {
  check_on_spheres(dag, X);
  if (!symmetric) check_on_spheres(dag, Y);
  const PointMatrix& Yr = symmetric ? X : Y;
  const Eigen::Index m = X.rows(), n = Yr.rows();
  if (nngp) nngp->resize(m, n);
  if (ntk) ntk->resize(m, n);

  KernelEvaluator ev(dag);
  std::vector<Block> blocks;
  for (int v : dag.inputs()) {
    const auto& nd = dag.node(v);
    blocks.push_back({nd.input_offset, nd.dim, 1.0 / nd.dim});
  }
  const bool gap = ev.has_gap();
  const int w = gap ? ev.gap_window() : 1;
  const int s = gap ? ev.pen_inputs() : static_cast<int>(blocks.size());
  const std::size_t tlen = gap ? static_cast<std::size_t>(w) * w * s : blocks.size();
  const int T = std::max(1, threads);
  std::vector<std::vector<double>> scratch(T, std::vector<double>(2 * dag.size() + tlen));

  auto row = [&](std::size_t ii, int tid) {
    const Eigen::Index i = static_cast<Eigen::Index>(ii);
    double* K = scratch[tid].data();
    double* Th = K + dag.size();
    double* t = Th + dag.size();
    const double* xi = X.row(i).data();
    const Eigen::Index jend = symmetric ? i + 1 : n;
    for (Eigen::Index j = 0; j < jend; ++j) {
      const double* yj = Yr.row(j).data();
      KernelPair kp;
      if (!gap) {
        for (std::size_t b = 0; b < blocks.size(); ++b)
          t[b] = dot(xi + blocks[b].offset, yj + blocks[b].offset, blocks[b].dim) * blocks[b].inv_dim;
        kp = ev.eval(t, K, Th);
      } else {
        for (int u = 0; u < w; ++u)
          for (int v = 0; v < w; ++v)
            for (int q = 0; q < s; ++q) {
              const Block& bu = blocks[static_cast<std::size_t>(u) * s + q];
              const Block& bv = blocks[static_cast<std::size_t>(v) * s + q];
              t[(static_cast<std::size_t>(u) * w + v) * s + q] =
                  dot(xi + bu.offset, yj + bv.offset, bu.dim) * bu.inv_dim;
            }
        kp = ev.eval_gap(t, K, Th);
      }
      if (nngp) {
        (*nngp)(i, j) = kp.nngp;
        if (symmetric) (*nngp)(j, i) = kp.nngp;
      }
      if (ntk) {
        (*ntk)(i, j) = kp.ntk;
        if (symmetric) (*ntk)(j, i) = kp.ntk;
      }
    }
  };
  parallel_for(static_cast<std::size_t>(m), T, row);
}

Eigen::MatrixXd kernel_matrix(const ArchDag& dag, KernelKind kind, const PointMatrix& X, const PointMatrix& Y,
                              bool symmetric, int threads) {
  Eigen::MatrixXd M;
  if (kind == KernelKind::nngp) kernel_matrix_both(dag, X, Y, symmetric, threads, &M, nullptr);
  else kernel_matrix_both(dag, X, Y, symmetric, threads, nullptr, &M);
  return M;
}

namespace {

template <class U>
void put_le(std::ofstream& out, U v) {
  unsigned char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <class U>
U get_le(std::ifstream& in) {
  unsigned char b[sizeof(U)];
  in.read(reinterpret_cast<char*>(b), sizeof(U));
  if (!in) throw ConfigError("truncated kernel matrix file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_kernel_matrix(const std::string& path, const Eigen::MatrixXd& M) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out.write("NKRM", 4);
  put_le<std::uint32_t>(out, 1u);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(M.rows()));
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(M(i, j)));
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

Eigen::MatrixXd read_kernel_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  const auto bytes = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "NKRM", 4) != 0) throw ConfigError("'" + path + "' is not a kernel matrix file");
  const auto version = get_le<std::uint32_t>(in);
  if (version != 1u) throw ConfigError("unsupported kernel matrix version " + std::to_string(version));
  const auto rows = get_le<std::uint64_t>(in);
  const std::uint64_t payload = bytes - 16;
  if (rows == 0 || payload % (8 * rows) != 0) throw ConfigError("kernel matrix payload size mismatch");
  const std::uint64_t cols = payload / (8 * rows);
  Eigen::MatrixXd M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j) M(i, j) = std::bit_cast<double>(get_le<std::uint64_t>(in));
  return M;
}

// ---------------------------------------------------------------------------
// Jets

namespace {

struct Support {
  std::vector<int> nodes;    // support input ids, ascending
  std::vector<int> degrees;  // matching r_v
  int total = 0;
};

Support make_support(const ArchDag& dag, const MultiIndex& r) {
  Support s;
  for (const auto& [v, deg] : r) {
    if (deg < 0) throw ConfigError("negative degree in multi-index");
    if (deg == 0) continue;
    if (dag.node(v).kind != NodeKind::input)
      throw ConfigError("multi-index refers to non-input node " + std::to_string(v));
    s.nodes.push_back(v);
    s.degrees.push_back(deg);
    s.total += deg;
  }
  if (s.nodes.size() > 6) throw ConfigError("support of the multi-index exceeds 6 nodes");
  if (s.total > 12) throw ConfigError("multi-index degree exceeds 12");
  return s;
}

struct JetPair {
  Jet K;
  Jet T;
};

// Applies one node of the recursion to jets of its children.
JetPair apply_node(const NodeRecord& n, const Jet& A, const Jet& B, bool want_ntk) {
  if (n.activation.is_identity()) return {A, B};
  const int top = A.total_cap();
  auto series = n.activation.series_at(A.value(), top + 1);
  JetPair out;
  out.K = A.compose(series);
  if (want_ntk) {
    std::vector<double> dser(top + 1);
    for (int j = 0; j <= top; ++j) dser[j] = (j + 1) * series[j + 1];
    out.T = A.compose(dser) * B;
  } else {
    out.T = Jet::constant(A, 0.0);
  }
  return out;
}

// Propagates jets through the listed nodes.  Inactive nodes (no support
// below) keep their scalar values from K0/T0.
class JetPropagator {
 public:
  JetPropagator(const ArchDag& dag, const Jet& shape, bool want_ntk)
      : dag_(dag), shape_(shape), ntk_(want_ntk), jets_(dag.size()), active_(dag.size(), 0) {}

  void set_input(int v, const Jet& j) {
    jets_[v] = {j, Jet::constant(shape_, 0.0)};
    active_[v] = 1;
  }
  void clear_input(int v) { active_[v] = 0; }
  bool active(int u) const { return active_[u] != 0; }
  const JetPair& jet(int u) const { return jets_[u]; }
  void set(int u, JetPair jp) {
    jets_[u] = std::move(jp);
    active_[u] = 1;
  }

  void run(const std::vector<int>& nodes, const std::vector<double>& K0, const std::vector<double>& T0) {
    for (int u : nodes) {
      const auto& n = dag_.node(u);
      bool any = false;
      for (int c : n.children) any |= active_[c] != 0;
      if (!any) {
        active_[u] = 0;
        continue;
      }
      Jet A = Jet::constant(shape_, 0.0), B = Jet::constant(shape_, 0.0);
      double ca = 0.0, cb = 0.0;
      for (int c : n.children) {
        if (active_[c]) {
          A += jets_[c].K;
          B += jets_[c].K;
          B += jets_[c].T;
        } else {
          ca += K0[c];
          cb += K0[c] + T0[c];
        }
      }
      A += Jet::constant(shape_, ca);
      B += Jet::constant(shape_, cb);
      const double inv = 1.0 / static_cast<double>(n.children.size());
      A *= inv;
      B *= inv;
      jets_[u] = apply_node(n, A, B, ntk_);
      active_[u] = 1;
    }
  }

 private:
  const ArchDag& dag_;
  Jet shape_;
  bool ntk_;
  std::vector<JetPair> jets_;
  std::vector<char> active_;
};

double pick(const JetPair& jp, KernelKind kind, const std::vector<int>& e) {
  return kind == KernelKind::nngp ? jp.K.coefficient(e) : jp.T.coefficient(e);
}

}  // namespace

double taylor_coefficient(const ArchDag& dag, KernelKind kind, const MultiIndex& r, [[maybe_unused]] int shift) {
  // Cyclic symmetry of the pen subtrees makes the coefficient independent of shift.
  const Support sup = make_support(dag, r);
  if (sup.nodes.empty()) throw ConfigError("multi-index must be nonzero");
  Jet shape(sup.degrees, sup.total);
  const bool want_ntk = kind == KernelKind::ntk;
  KernelEvaluator ev(dag);
  std::vector<double> K0(dag.size()), T0(dag.size());

  if (!ev.has_gap()) {
    std::vector<double> zeros(dag.inputs().size(), 0.0);
    ev.eval(zeros.data(), K0.data(), T0.data());
    JetPropagator jp(dag, shape, want_ntk);
    for (std::size_t i = 0; i < sup.nodes.size(); ++i) jp.set_input(sup.nodes[i], Jet::variable(shape, static_cast<int>(i)));
    std::vector<int> order;
    for (int u : dag.topo_order())
      if (dag.node(u).kind != NodeKind::input) order.push_back(u);
    jp.run(order, K0, T0);
    return jp.active(dag.output()) ? pick(jp.jet(dag.output()), kind, sup.degrees) : 0.0;
  }

  // GAP: pair (u, v) carries variables only when v = u + shift (mod w).
  const int w = ev.gap_window();
  const int gap = dag.gap_node();
  const auto& pens = dag.node(gap).children;
  {
    std::vector<double> zeros(static_cast<std::size_t>(w) * w * ev.pen_inputs(), 0.0);
    ev.eval_gap(zeros.data(), K0.data(), T0.data());
  }
  // Pen subtree index of every support input and its node lists.
  std::vector<int> owner(dag.size(), -1);
  std::vector<std::vector<int>> pen_nodes(w);
  for (int i = 0; i < w; ++i) {
    std::vector<int> stack{pens[i]};
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      owner[u] = i;
      for (int c : dag.node(u).children) stack.push_back(c);
    }
  }
  for (int u : dag.topo_order())
    if (owner[u] >= 0 && dag.node(u).kind != NodeKind::input) pen_nodes[owner[u]].push_back(u);

  Jet A = Jet::constant(shape, 0.0), B = Jet::constant(shape, 0.0);
  double ca = 0.0, cb = 0.0;
  const double Kp0 = K0[pens[0]], Tp0 = T0[pens[0]];
  for (int u = 0; u < w; ++u) {
    JetPropagator jp(dag, shape, want_ntk);
    bool any = false;
    for (std::size_t i = 0; i < sup.nodes.size(); ++i) {
      if (owner[sup.nodes[i]] == u) {
        jp.set_input(sup.nodes[i], Jet::variable(shape, static_cast<int>(i)));
        any = true;
      }
    }
    // Pairs (u, v') with v' != u + shift carry no variables: constant K_pen(0).
    ca += (w - 1) * Kp0;
    cb += (w - 1) * (Kp0 + Tp0);
    if (!any) {
      ca += Kp0;
      cb += Kp0 + Tp0;
      continue;
    }
    jp.run(pen_nodes[u], K0, T0);
    const JetPair& top = jp.jet(pens[u]);
    A += top.K;
    B += top.K;
    B += top.T;
  }
  A += Jet::constant(shape, ca);
  B += Jet::constant(shape, cb);
  const double inv = 1.0 / (static_cast<double>(w) * w);
  A *= inv;
  B *= inv;
  JetPair cur = apply_node(dag.node(gap), A, B, want_ntk);
  int node = gap;
  while (node != dag.output()) {
    node = dag.node(node).parents[0];
    const auto& n = dag.node(node);
    cur = apply_node(n, cur.K, cur.K + cur.T, want_ntk);
  }
  return pick(cur, kind, sup.degrees);
}

double derivative_at_zero(const ArchDag& dag, KernelKind kind, const MultiIndex& r) {
  double c = taylor_coefficient(dag, kind, r, 0);
  double fact = 1.0;
  for (const auto& [v, deg] : r)
    for (int i = 2; i <= deg; ++i) fact *= i;
  return c * fact;
}

// ---------------------------------------------------------------------------
// Eigenvalues

double moment_against_gegenbauer(int d, int r) {
  return 1.0 / (harmonic_count_double(d, r) * gegenbauer_leading_coefficient(d, r));
}

namespace {

EigenEstimate eigen_jet(const ArchDag& dag, KernelKind kind, const MultiIndex& r) {
  double factor = 1.0;
  for (const auto& [v, deg] : r)
    if (deg > 0) factor *= moment_against_gegenbauer(dag.node(v).dim, deg);
  double coef = 0.0;
  if (dag.gap_node() < 0) {
    coef = taylor_coefficient(dag, kind, r, 0);
  } else {
    const int w = static_cast<int>(dag.node(dag.gap_node()).children.size());
    for (int s = 0; s < w; ++s) coef += taylor_coefficient(dag, kind, r, s);
  }
  return {coef * factor, 0.0};
}

// Samples the correlation <xi, eta>/d of two independent uniform points on
// S^{d-1}: t = 2B - 1 with B ~ Beta((d-1)/2, (d-1)/2).
class CorrelationSampler {
 public:
  explicit CorrelationSampler(int d) : g_((d - 1) / 2.0, 1.0) {}
  template <class Rng>
  double operator()(Rng& rng) {
    double a = g_(rng), b = g_(rng);
    return (a - b) / (a + b);
  }

 private:
  std::gamma_distribution<double> g_;
};

EigenEstimate eigen_mc_flat(const ArchDag& dag, KernelKind kind, const MultiIndex& r, std::size_t samples,
                            std::uint64_t seed) {
  const Support sup = make_support(dag, r);
  KernelEvaluator ev(dag);
  const auto& ins = dag.inputs();
  std::vector<CorrelationSampler> samplers;
  for (int v : ins) samplers.emplace_back(dag.node(v).dim);
  std::vector<int> sup_pos;
  for (int v : sup.nodes) sup_pos.push_back(dag.input_position(v));

  // Nodes to recompute when a subset of support inputs is zeroed.
  const std::size_t S = sup.nodes.size();
  std::vector<std::vector<int>> recompute(std::size_t(1) << S);
  for (std::size_t mask = 1; mask < recompute.size(); ++mask) {
    std::vector<int> seeds;
    for (std::size_t i = 0; i < S; ++i)
      if (mask & (std::size_t(1) << i)) seeds.push_back(sup.nodes[i]);
    auto anc = ancestors(dag, seeds);
    for (int u : dag.topo_order())
      if (anc.count(u) && dag.node(u).kind != NodeKind::input) recompute[mask].push_back(u);
  }

  std::mt19937_64 rng(seed);
  std::vector<double> t(ins.size()), K(dag.size()), T(dag.size()), K2(dag.size()), T2(dag.size());
  double mean = 0.0, m2 = 0.0;
  for (std::size_t n = 0; n < samples; ++n) {
    for (std::size_t i = 0; i < ins.size(); ++i) t[i] = samplers[i](rng);
    double weight = 1.0;
    for (std::size_t i = 0; i < S; ++i) weight *= gegenbauer_eval(dag.node(sup.nodes[i]).dim, sup.degrees[i], t[sup_pos[i]]);
    KernelPair base = ev.eval(t.data(), K.data(), T.data());
    double acc = kind == KernelKind::nngp ? base.nngp : base.ntk;
    // Inclusion-exclusion over zeroed support inputs: each correction term
    // has zero mean against the weight, so the estimator stays unbiased.
    for (std::size_t mask = 1; mask < recompute.size(); ++mask) {
      K2 = K;
      T2 = T;
      for (std::size_t i = 0; i < S; ++i)
        if (mask & (std::size_t(1) << i)) K2[sup.nodes[i]] = 0.0;
      ev.recompute(recompute[mask], K2.data(), T2.data());
      const int o = dag.output();
      const double val = kind == KernelKind::nngp ? K2[o] : T2[o];
      acc += (std::popcount(mask) % 2 ? -1.0 : 1.0) * val;
    }
    const double x = weight * acc;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n + 1);
    m2 += delta * (x - mean);
  }
  const double var = samples > 1 ? m2 / static_cast<double>(samples - 1) : 0.0;
  return {mean, std::sqrt(var / static_cast<double>(samples))};
}

// Point-space estimator for GAP DAGs: E[K(x, x') f(x) f(x')] with f the
// symmetrized product of zonal harmonics along the first axis of each patch.
EigenEstimate eigen_mc_gap(const ArchDag& dag, KernelKind kind, const MultiIndex& r, std::size_t samples,
                           std::uint64_t seed) {
  const Support sup = make_support(dag, r);
  KernelEvaluator ev(dag);
  const int w = ev.gap_window(), s = ev.pen_inputs();
  const auto& ins = dag.inputs();
  const int d = dag.reference_dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  PointMatrix P(2, d);
  std::vector<double> tp(static_cast<std::size_t>(w) * w * s), K(dag.size()), T(dag.size());

  auto sample_point = [&](int row) {
    for (int v : ins) {
      const auto& n = dag.node(v);
      double nr = 0.0;
      for (int c = 0; c < n.dim; ++c) {
        double g = normal(rng);
        P(row, n.input_offset + c) = g;
        nr += g * g;
      }
      const double scale = std::sqrt(n.dim / nr);
      for (int c = 0; c < n.dim; ++c) P(row, n.input_offset + c) *= scale;
    }
  };
  auto sym_f = [&](int row) {
    double total = 0.0;
    for (int sh = 0; sh < w; ++sh) {
      double prod = 1.0;
      for (std::size_t i = 0; i < sup.nodes.size(); ++i) {
        const int pos = dag.input_position(sup.nodes[i]);
        const int moved = ins[(pos + sh * s) % static_cast<int>(ins.size())];
        const auto& n = dag.node(moved);
        const double N = harmonic_count_double(n.dim, sup.degrees[i]);
        prod *= std::sqrt(N) * gegenbauer_eval(n.dim, sup.degrees[i], P(row, n.input_offset) / std::sqrt(n.dim));
      }
      total += prod;
    }
    return total / std::sqrt(static_cast<double>(w));
  };

  double mean = 0.0, m2 = 0.0;
  for (std::size_t n = 0; n < samples; ++n) {
    sample_point(0);
    sample_point(1);
    for (int u = 0; u < w; ++u)
      for (int v = 0; v < w; ++v)
        for (int q = 0; q < s; ++q) {
          const auto& bu = dag.node(ins[u * s + q]);
          const auto& bv = dag.node(ins[v * s + q]);
          tp[(static_cast<std::size_t>(u) * w + v) * s + q] =
              P.row(0).segment(bu.input_offset, bu.dim).dot(P.row(1).segment(bv.input_offset, bv.dim)) / bu.dim;
        }
    KernelPair kp = ev.eval_gap(tp.data(), K.data(), T.data());
    const double x = (kind == KernelKind::nngp ? kp.nngp : kp.ntk) * sym_f(0) * sym_f(1);
    const double delta = x - mean;
    mean += delta / static_cast<double>(n + 1);
    m2 += delta * (x - mean);
  }
  const double var = samples > 1 ? m2 / static_cast<double>(samples - 1) : 0.0;
  return {mean, std::sqrt(var / static_cast<double>(samples))};
}

}  // namespace

EigenEstimate eigenvalue_estimate(const ArchDag& dag, KernelKind kind, const MultiIndex& r, EigenMethod method,
                                  std::size_t samples, std::uint64_t seed) {
  bool nonzero = false;
  for (const auto& [v, deg] : r) nonzero |= deg > 0;
  if (!nonzero) throw ConfigError("eigenvalue_estimate needs a nonzero multi-index");
  if (method == EigenMethod::jet) return eigen_jet(dag, kind, r);
  if (samples < 2) throw ConfigError("Monte Carlo estimate needs at least 2 samples");
  if (dag.gap_node() >= 0) return eigen_mc_gap(dag, kind, r, samples, seed);
  return eigen_mc_flat(dag, kind, r, samples, seed);
}

}  // namespace nkspec
