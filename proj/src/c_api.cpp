#include "nkspec/nkspec.h"

#include "nkspec/arch.hpp"
#include "nkspec/dual.hpp"
#include "nkspec/eigenfunctions.hpp"
#include "nkspec/error.hpp"
#include "nkspec/indices.hpp"
#include "nkspec/kernel.hpp"
#include "nkspec/random.hpp"
#include "nkspec/regression.hpp"

#include <cstdlib>
#include <cstring>
#include <new>
#include <sstream>
#include <string>

using namespace nkspec;

struct nks_dual {
  Dual d;
};
struct nks_arch {
  ArchDag dag;
};
struct nks_modes {
  std::vector<Eigenfunction> f;
};
struct nks_table {
  std::vector<CurveRow> rows;
};

namespace {

thread_local std::string g_error;

int fail(int code, const std::string& msg) {
  g_error = msg;
  return code;
}

template <class F>
int guarded(F&& body) {
  g_error.clear();
  try {
    body();
    return NKS_OK;
  } catch (const ConfigError& e) {
    return fail(NKS_CONFIG, e.what());
  } catch (const ResourceError& e) {
    return fail(NKS_RESOURCE, e.what());
  } catch (const NumericalError& e) {
    return fail(NKS_NUMERICAL, e.what());
  } catch (const std::bad_alloc&) {
    return fail(NKS_RESOURCE, "out of memory");
  } catch (const std::invalid_argument& e) {
    return fail(NKS_CONFIG, e.what());
  } catch (const std::out_of_range& e) {
    return fail(NKS_INVALID, e.what());
  } catch (const std::exception& e) {
    return fail(NKS_INTERNAL, e.what());
  } catch (...) {
    return fail(NKS_INTERNAL, "unknown exception");
  }
}

struct Invalid : std::out_of_range {
  using std::out_of_range::out_of_range;
};

void require(bool ok, const char* what) {
  if (!ok) throw Invalid(what);
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

KernelKind kind_of(int k) {
  require(k == NKS_NNGP || k == NKS_NTK, "kernel kind must be NKS_NNGP or NKS_NTK");
  return k == NKS_NNGP ? KernelKind::nngp : KernelKind::ntk;
}

Readout readout_of(int r) {
  require(r == NKS_FLATTEN || r == NKS_GAP, "readout must be NKS_FLATTEN or NKS_GAP");
  return r == NKS_GAP ? Readout::gap : Readout::flatten;
}

MultiIndex multi_index(const ArchDag& dag, const int* nodes, const int* degrees, std::size_t k) {
  require(k == 0 || (nodes && degrees), "null multi-index arrays");
  MultiIndex r;
  for (std::size_t i = 0; i < k; ++i) {
    require(nodes[i] >= 0 && static_cast<std::size_t>(nodes[i]) < dag.size() && dag.input_position(nodes[i]) >= 0,
            "multi-index node is not an input node");
    require(degrees[i] >= 0, "negative degree");
    if (degrees[i] > 0) r[nodes[i]] += degrees[i];
  }
  return r;
}

std::vector<std::string> split_ids(const char* ids) {
  std::vector<std::string> out;
  if (!ids) return out;
  std::stringstream ss(ids);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    auto b = tok.find_first_not_of(" \t");
    auto e = tok.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(tok.substr(b, e - b + 1));
  }
  return out;
}

PointMatrix points(const double* X, std::size_t rows, int dim) {
  require(X != nullptr, "null point array");
  return Eigen::Map<const PointMatrix>(X, static_cast<Eigen::Index>(rows), dim);
}

std::string representative_text(const ArchDag& dag, const MultiIndex& r) {
  std::string s;
  for (const auto& [v, deg] : r) {
    if (!s.empty()) s += ' ';
    s += std::to_string(dag.node(v).input_offset) + '^' + std::to_string(deg);
  }
  return s;
}

std::string class_csv_line(const IndexClass& c) {
  return (c.learnable ? to_string(c.L) : std::string("inf")) + ',' + std::to_string(c.degree) + ',' +
         std::to_string(c.support_size) + ',' + c.patterns.str();
}

CurveSpec curve_spec(const nks_arch* a, const nks_curve_spec* s) {
  require(a && s, "null argument");
  require(s->m_schedule && s->m_count > 0, "empty training-size schedule");
  require(s->seeds && s->seed_count > 0, "no seeds");
  CurveSpec c;
  c.run_id = s->run_id ? s->run_id : "run";
  c.arch_name = s->arch_name ? s->arch_name : "arch";
  c.dag = &a->dag;
  c.kind = kind_of(s->kind);
  c.p = s->p;
  c.m_schedule.assign(s->m_schedule, s->m_schedule + s->m_count);
  c.m_test = s->m_test;
  c.m_normalize = s->m_normalize;
  c.seeds.assign(s->seeds, s->seeds + s->seed_count);
  c.mode_ids = split_ids(s->mode_ids);
  c.coefficients = s->constant_coefficients ? CoefficientMode::constant : CoefficientMode::random;
  c.project = s->project != 0;
  c.timing = s->timing != 0;
  c.fit.threads = s->threads > 0 ? s->threads : 1;
  if (s->mem_cap > 0) c.fit.mem_cap = s->mem_cap;
  if (s->jitter_scale > 0.0) c.fit.jitter_scale = s->jitter_scale;
  return c;
}

}  // namespace

extern "C" {

const char* nks_last_error(void) { return g_error.c_str(); }

void nks_string_free(char* s) { std::free(s); }

int nks_dual_parse(const char* spec, nks_dual** out) {
  return guarded([&] {
    require(spec && out, "null argument");
    *out = new nks_dual{Dual::parse(spec)};
  });
}

void nks_dual_free(nks_dual* d) { delete d; }

int nks_dual_eval(const nks_dual* d, double t, double* value, double* derivative) {
  return guarded([&] {
    require(d && value, "null argument");
    require(t >= -1.0 && t <= 1.0, "correlation outside [-1, 1]");
    double v = 0.0, s = 0.0;
    d->d.eval_both(t, v, s);
    *value = v;
    if (derivative) *derivative = s;
  });
}

int nks_dual_class(const nks_dual* d, char** out) {
  return guarded([&] {
    require(d && out, "null argument");
    const auto& c = d->d.classification();
    std::string s = to_string(c.cls);
    if (c.cls == DualClass::poly_admissible) s += ":" + std::to_string(c.J);
    *out = dup(s);
  });
}

int nks_arch_family(const char* family, int p, int depth, const nks_dual* act, int readout, int act_after_readout,
                    nks_arch** out) {
  return guarded([&] {
    require(family && act && out, "null argument");
    if (p < 2) throw ConfigError("family patch size p must be at least 2");
    const std::string f = family;
    const Readout ro = readout_of(readout);
    if (ro == Readout::gap && f != "hr_cnn") throw ConfigError("GAP readout is only built for hr_cnn");
    ArchDag dag;
    if (f == "hr_cnn") {
      dag = hr_cnn(p, act->d, ro, act_after_readout != 0);
    } else if (f == "d_cnn") {
      dag = d_cnn(p, act->d);
    } else if (f == "mlp") {
      if (depth < 1) throw ConfigError("mlp depth must be at least 1");
      dag = mlp_family(p, depth, act->d);
    } else if (f == "s_cnn") {
      dag = s_cnn(p, act->d);
    } else {
      throw ConfigError("unknown family '" + f + "'");
    }
    *out = new nks_arch{std::move(dag)};
  });
}

int nks_arch_dcnn(int p, int k, int L, int w, const char* alpha_p, const char* alpha_k, const char* alpha_w,
                  const nks_dual* act, int readout, int act_after_readout, nks_arch** out) {
  return guarded([&] {
    require(act && out, "null argument");
    DcnnSpec s;
    s.p = p;
    s.k = k;
    s.L = L;
    s.w = w;
    s.readout = readout_of(readout);
    s.act_after_readout = act_after_readout != 0;
    if (alpha_p) s.alpha_p = parse_rational(alpha_p);
    if (alpha_k) s.alpha_k = parse_rational(alpha_k);
    if (alpha_w) s.alpha_w = parse_rational(alpha_w);
    s.activation = act->d;
    *out = new nks_arch{build_dcnn(s)};
  });
}

int nks_arch_parse_text(const char* text, nks_arch** out) {
  return guarded([&] {
    require(text && out, "null argument");
    *out = new nks_arch{parse_arch_text(text)};
  });
}

void nks_arch_free(nks_arch* a) { delete a; }

int nks_arch_to_text(const nks_arch* a, char** out) {
  return guarded([&] {
    require(a && out, "null argument");
    *out = dup(to_text(a->dag));
  });
}

int nks_arch_describe(const nks_arch* a, char** out) {
  return guarded([&] {
    require(a && out, "null argument");
    *out = dup(architecture_string(a->dag));
  });
}

int nks_arch_reference_dim(const nks_arch* a, int* out) {
  return guarded([&] {
    require(a && out, "null argument");
    *out = a->dag.reference_dim();
  });
}

int nks_arch_readout(const nks_arch* a, int* out) {
  return guarded([&] {
    require(a && out, "null argument");
    *out = a->dag.readout() == Readout::gap ? NKS_GAP : NKS_FLATTEN;
  });
}

int nks_arch_num_inputs(const nks_arch* a, size_t* out) {
  return guarded([&] {
    require(a && out, "null argument");
    *out = a->dag.inputs().size();
  });
}

int nks_arch_input_id(const nks_arch* a, size_t i, int* out) {
  return guarded([&] {
    require(a && out, "null argument");
    require(i < a->dag.inputs().size(), "input position out of range");
    *out = a->dag.inputs()[i];
  });
}

int nks_arch_validate(const nks_arch* a, double c, double C, char** report, int* all_passed) {
  return guarded([&] {
    require(a && report, "null argument");
    ValidationParams vp;
    vp.c = c;
    vp.C = C;
    const auto rep = validate_assumptions(a->dag, vp);
    *report = dup(rep.to_string());
    if (all_passed) *all_passed = rep.all_passed() ? 1 : 0;
  });
}

int nks_kernel_eval(const nks_arch* a, int kind, const double* t, size_t n, double* out) {
  return guarded([&] {
    require(a && t && out, "null argument");
    require(a->dag.readout() == Readout::flatten, "pointwise evaluation needs a flatten readout");
    require(n == a->dag.inputs().size(), "one correlation per input node expected");
    for (size_t i = 0; i < n; ++i) require(t[i] >= -1.0 && t[i] <= 1.0, "correlation outside [-1, 1]");
    std::vector<double> tv(t, t + n);
    *out = kind_of(kind) == KernelKind::nngp ? nngp_eval(a->dag, tv) : ntk_eval(a->dag, tv);
  });
}

int nks_kernel_matrix(const nks_arch* a, int kind, const double* X, size_t m, const double* Y, size_t n,
                      int threads, double* out) {
  return guarded([&] {
    require(a && out, "null argument");
    const int dim = a->dag.reference_dim();
    const PointMatrix PX = points(X, m, dim);
    const bool sym = (Y == nullptr);
    const PointMatrix PY = sym ? PX : points(Y, n, dim);
    check_on_spheres(a->dag, PX);
    if (!sym) check_on_spheres(a->dag, PY);
    const Eigen::MatrixXd K = kernel_matrix(a->dag, kind_of(kind), PX, PY, sym, threads);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out, K.rows(), K.cols()) = K;
  });
}

int nks_write_kernel_matrix(const char* path, const double* M, size_t rows, size_t cols) {
  return guarded([&] {
    require(path && M, "null argument");
    Eigen::MatrixXd K = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        M, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    write_kernel_matrix(path, K);
  });
}

int nks_derivative_at_zero(const nks_arch* a, int kind, const int* nodes, const int* degrees, size_t k,
                           double* out) {
  return guarded([&] {
    require(a && out, "null argument");
    *out = derivative_at_zero(a->dag, kind_of(kind), multi_index(a->dag, nodes, degrees, k));
  });
}

int nks_eigenvalue(const nks_arch* a, int kind, const int* nodes, const int* degrees, size_t k, int method,
                   size_t samples, uint64_t seed, double* value, double* std_error) {
  return guarded([&] {
    require(a && value, "null argument");
    require(method == NKS_METHOD_JET || method == NKS_METHOD_MONTE_CARLO, "unknown eigenvalue method");
    const auto e = eigenvalue_estimate(a->dag, kind_of(kind), multi_index(a->dag, nodes, degrees, k),
                                       method == NKS_METHOD_JET ? EigenMethod::jet : EigenMethod::monte_carlo,
                                       samples, seed);
    *value = e.value;
    if (std_error) *std_error = e.std_error;
  });
}

int nks_index_triple(const nks_arch* a, const int* nodes, const int* degrees, size_t k, int* finite, char** S,
                     char** F, char** L) {
  return guarded([&] {
    require(a && finite && S && F && L, "null argument");
    const auto t = index_triple(a->dag, multi_index(a->dag, nodes, degrees, k));
    *finite = t.finite ? 1 : 0;
    *S = dup(t.finite ? to_string(t.S) : "inf");
    *F = dup(t.finite ? to_string(t.F) : "inf");
    *L = dup(t.finite ? to_string(t.L) : "inf");
  });
}

int nks_learning_sequence(const nks_arch* a, int max_degree, const char* max_L, char** csv) {
  return guarded([&] {
    require(a && csv, "null argument");
    std::optional<Rational> cap;
    if (max_L && *max_L) cap = parse_rational(max_L);
    const auto seq = learning_sequence(a->dag, max_degree, cap);
    std::string s = "L,degree,support_size,patterns,dimension,representative\n";
    for (const auto& e : seq)
      for (const auto& c : e.classes)
        s += class_csv_line(c) + ',' + c.dimension.str() + ',' + representative_text(a->dag, c.representative) +
             '\n';
    *csv = dup(s);
  });
}

int nks_eigenspace_dimension(const nks_arch* a, const char* L_target, int max_degree, char** out) {
  return guarded([&] {
    require(a && L_target && out, "null argument");
    *out = dup(eigenspace_dimension(a->dag, parse_rational(L_target), max_degree).str());
  });
}

int nks_budget_partition(const nks_arch* a, const char* budget, int max_degree, char** csv) {
  return guarded([&] {
    require(a && budget && csv, "null argument");
    const auto part = budget_partition(a->dag, parse_rational(budget), max_degree);
    std::string s = "side,L,degree,support_size,patterns\n";
    for (const auto& c : part.learnable) s += "learnable," + class_csv_line(c) + '\n';
    for (const auto& c : part.unlearnable) s += "unlearnable," + class_csv_line(c) + '\n';
    *csv = dup(s);
  });
}

int nks_mode_ids(char** out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    std::string s;
    for (const auto& id : appendix_ids()) s += (s.empty() ? "" : ",") + id;
    *out = dup(s);
  });
}

int nks_mode_degree(const char* id, int* out) {
  return guarded([&] {
    require(id && out, "null argument");
    *out = appendix_degree(id);
  });
}

int nks_mode_multi_index(const char* id, int p, const nks_arch* a, int* nodes, int* degrees, size_t cap, size_t* k) {
  return guarded([&] {
    require(id && a && k, "null argument");
    if (a->dag.reference_dim() != p * p * p * p)
      throw ConfigError("architecture reference dimension is not p^4");
    const auto f = build_appendix_eigenfunction(id, p, 1, CoefficientMode::constant, true);
    const MultiIndex r = pattern_multi_index(f.pattern, p, a->dag);
    *k = r.size();
    require(r.size() <= cap || (nodes == nullptr && degrees == nullptr), "multi-index buffer too small");
    if (!nodes || !degrees) return;
    size_t i = 0;
    for (const auto& [v, deg] : r) {
      nodes[i] = v;
      degrees[i] = deg;
      ++i;
    }
  });
}

int nks_modes_build(int p, uint64_t seed, int constant_coefficients, int project, size_t n_normalize,
                    const char* ids, nks_modes** out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    require(p >= 2, "p must be at least 2");
    require(n_normalize > 0, "normalization sample must be non-empty");
    const PointMatrix Z = sample_inputs(n_normalize, p * p * p, p, derive_seed(seed, SeedStream::normalize));
    auto fs = build_appendix_eigenfunctions(p, derive_seed(seed, SeedStream::coefficients),
                                            constant_coefficients ? CoefficientMode::constant : CoefficientMode::random,
                                            project != 0, Z, split_ids(ids));
    *out = new nks_modes{std::move(fs)};
  });
}

void nks_modes_free(nks_modes* m) { delete m; }

int nks_modes_count(const nks_modes* m, size_t* out) {
  return guarded([&] {
    require(m && out, "null argument");
    *out = m->f.size();
  });
}

int nks_modes_json(const nks_modes* m, size_t i, char** out) {
  return guarded([&] {
    require(m && out, "null argument");
    require(i < m->f.size(), "mode index out of range");
    *out = dup(to_json(m->f[i]));
  });
}

int nks_modes_eval(const nks_modes* m, size_t i, const double* X, size_t rows, double* out) {
  return guarded([&] {
    require(m && out, "null argument");
    require(i < m->f.size(), "mode index out of range");
    const int p = m->f[i].p;
    const PointMatrix P = points(X, rows, p * p * p * p);
    const auto v = m->f[i].eval_batch(P);
    std::copy(v.begin(), v.end(), out);
  });
}

int nks_sample_inputs(size_t m, int patches, int p, uint64_t seed, double* out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    require(patches >= 1 && p >= 1, "patches and p must be positive");
    const PointMatrix X = sample_inputs(m, patches, p, seed);
    std::copy(X.data(), X.data() + X.size(), out);
  });
}

int nks_gradient_flow_residual(double lambda, double t, double* out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    *out = gradient_flow_residual(lambda, t);
  });
}

void nks_curve_spec_init(nks_curve_spec* s) {
  if (!s) return;
  *s = nks_curve_spec{};
  s->run_id = "run";
  s->arch_name = "arch";
  s->kind = NKS_NTK;
  s->p = 3;
  s->m_test = 4000;
  s->m_normalize = 20000;
  s->project = 1;
  s->threads = 1;
  s->jitter_scale = 1e-8;
}

int nks_learning_curve(const nks_arch* a, const nks_curve_spec* spec, nks_table** out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    const CurveSpec c = curve_spec(a, spec);
    *out = new nks_table{learning_curve(c)};
  });
}

int nks_gap_vs_flatten(const nks_arch* flatten, const nks_arch* gap, const char* gap_name,
                       const nks_curve_spec* spec, nks_table** out) {
  return guarded([&] {
    require(gap && gap_name && out, "null argument");
    const CurveSpec c = curve_spec(flatten, spec);
    *out = new nks_table{gap_vs_flatten(c, gap->dag, gap_name)};
  });
}

void nks_table_free(nks_table* t) { delete t; }

int nks_table_size(const nks_table* t, size_t* out) {
  return guarded([&] {
    require(t && out, "null argument");
    *out = t->rows.size();
  });
}

int nks_table_row(const nks_table* t, size_t i, nks_curve_row* out) {
  return guarded([&] {
    require(t && out, "null argument");
    require(i < t->rows.size(), "row index out of range");
    const CurveRow& r = t->rows[i];
    out->run_id = r.run_id.c_str();
    out->arch = r.arch.c_str();
    out->kernel_kind = r.kernel_kind.c_str();
    out->readout = r.readout.c_str();
    out->m_train = r.m_train;
    out->mode_id = r.mode_id.c_str();
    out->L_index = r.L_index.c_str();
    out->seed = r.seed;
    out->residual = r.residual;
    out->normalized_residual = r.norm_sq_test > 0.0 ? 2.0 * r.residual / r.norm_sq_test : 0.0;
    out->train_mse = r.train_mse;
    out->seconds = r.seconds;
  });
}

int nks_table_csv(const nks_table* t, char** out) {
  return guarded([&] {
    require(t && out, "null argument");
    std::string s = csv_header() + '\n';
    for (const auto& r : t->rows) s += csv_row(r) + '\n';
    *out = dup(s);
  });
}

}  // extern "C"
