#include "nkspec/regression.hpp"

#include "nkspec/error.hpp"
#include "nkspec/indices.hpp"
#include "nkspec/random.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>

namespace nkspec {

PointMatrix sample_inputs(std::size_t m, int patches, int p, std::uint64_t seed) {
  if (m < 1) throw ConfigError("sample size must be positive");
  if (patches < 1 || p < 1) throw ConfigError("patch layout must be positive");
  PointMatrix X(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(patches) * p);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const double radius = std::sqrt(static_cast<double>(p));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (int j = 0; j < patches; ++j) {
      auto seg = X.row(i).segment(static_cast<Eigen::Index>(j) * p, p);
      double nr;
      do {
        for (int c = 0; c < p; ++c) seg(c) = normal(rng);
        nr = seg.norm();
      } while (nr == 0.0);
      seg *= radius / nr;
    }
  }
  return X;
}

namespace {

Eigen::VectorXd conjugate_gradient(const Eigen::MatrixXd& K, double jitter, const Eigen::VectorXd& y, double tol,
                                   bool& converged) {
  const Eigen::Index n = y.size();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n), r = y, p = r, Ap(n);
  double rs = r.squaredNorm();
  const double target = tol * tol * y.squaredNorm();
  converged = rs <= target;
  for (Eigen::Index it = 0; it < 10 * n && !converged; ++it) {
    Ap.noalias() = K.selfadjointView<Eigen::Upper>() * p;
    Ap += jitter * p;
    const double alpha = rs / p.dot(Ap);
    x += alpha * p;
    r -= alpha * Ap;
    const double rs_new = r.squaredNorm();
    converged = rs_new <= target;
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  return x;
}

}  // namespace

Eigen::VectorXd solve_kernel_system(Eigen::MatrixXd& K, const Eigen::VectorXd& y, const FitOptions& opt,
                                    SolveInfo* info) {
  const Eigen::Index m = K.rows();
  if (K.cols() != m || y.size() != m) throw ConfigError("kernel system has mismatched sizes");
  const double base = opt.jitter_scale * K.trace() / static_cast<double>(m);
  SolveInfo local;
  SolveInfo& si = info ? *info : local;
  si = {};
  if (static_cast<std::size_t>(m) > opt.dense_limit) {
    si.conjugate_gradient = true;
    double jitter = base;
    for (int attempt = 0; attempt <= opt.max_retries; ++attempt, jitter *= 10.0) {
      bool ok = false;
      Eigen::VectorXd a = conjugate_gradient(K, jitter, y, opt.cg_tolerance, ok);
      si.jitter = jitter;
      si.retries = attempt;
      if (ok && a.allFinite()) return a;
    }
    throw NumericalError("conjugate gradients did not converge after " + std::to_string(opt.max_retries) + " retries");
  }
  const Eigen::VectorXd diag = K.diagonal();
  double jitter = base;
  for (int attempt = 0; attempt <= opt.max_retries; ++attempt, jitter *= 10.0) {
    if (attempt > 0) K.triangularView<Eigen::StrictlyLower>() = K.triangularView<Eigen::StrictlyUpper>().transpose();
    K.diagonal() = diag.array() + jitter;
    Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>, Eigen::Lower> llt(K);
    si.jitter = jitter;
    si.retries = attempt;
    if (llt.info() == Eigen::Success) {
      Eigen::VectorXd a = llt.solve(y);
      if (a.allFinite()) return a;
    }
  }
  throw NumericalError("Cholesky factorization failed after " + std::to_string(opt.max_retries) +
                       " jitter increases");
}

FitResult fit_predict(const ArchDag& dag, KernelKind kind, const PointMatrix& train,
                      const std::vector<double>& labels, const PointMatrix& test, const FitOptions& opt) {
  if (labels.size() != static_cast<std::size_t>(train.rows()))
    throw ConfigError("label count does not match the training set");
  const std::size_t need = static_cast<std::size_t>(train.rows()) * (train.rows() + test.rows()) * 8;
  if (need > opt.mem_cap)
    throw ResourceError("kernel matrices need " + std::to_string(need) + " bytes, cap is " + std::to_string(opt.mem_cap));
  Eigen::MatrixXd K = kernel_matrix(dag, kind, train, train, true, opt.threads);
  Eigen::MatrixXd Kt = kernel_matrix(dag, kind, test, train, false, opt.threads);
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(labels.data(), static_cast<Eigen::Index>(labels.size()));
  FitResult res;
  Eigen::VectorXd a = solve_kernel_system(K, y, opt, &res.solve);
  Eigen::VectorXd pred = Kt * a;
  res.predictions.assign(pred.data(), pred.data() + pred.size());
  res.train_mse = (res.solve.jitter * a).squaredNorm() / static_cast<double>(a.size());
  return res;
}

std::vector<ModeResidual> residual_decomposition(const std::vector<double>& predictions,
                                                 const std::vector<std::vector<double>>& mode_values) {
  std::vector<ModeResidual> out;
  const double m = static_cast<double>(predictions.size());
  if (predictions.empty()) throw ConfigError("residual decomposition needs test points");
  for (const auto& y : mode_values) {
    if (y.size() != predictions.size()) throw ConfigError("mode values and predictions differ in length");
    ModeResidual r;
    double c = 0.0, ss = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
      c += predictions[j] * y[j];
      ss += y[j] * y[j];
    }
    r.c_hat = c / m;
    r.norm_sq_test = ss / m;
    r.residual = 0.5 * (r.c_hat - 1.0) * (r.c_hat - 1.0) * r.norm_sq_test;
    out.push_back(r);
  }
  return out;
}

double gradient_flow_residual(double lambda, double t) {
  if (lambda < 0.0 || t < 0.0) throw ConfigError("gradient flow needs lambda >= 0 and t >= 0");
  return std::exp(-lambda * t);
}

std::size_t curve_memory_bytes(const std::vector<std::size_t>& m_schedule, std::size_t m_test) {
  if (m_schedule.empty()) return 0;
  std::vector<std::size_t> s(m_schedule);
  std::sort(s.begin(), s.end());
  const std::size_t top = s.back();
  const std::size_t second = s.size() > 1 ? s[s.size() - 2] : 0;
  return 8 * (top * top + m_test * top + second * second);
}

namespace {

std::string L_string(const ArchDag& dag, const Eigenfunction& f) {
  IndexTriple t = index_triple(dag, pattern_multi_index(f, dag));
  return t.finite ? to_string(t.L) : "inf";
}

}  // namespace

std::vector<CurveRow> learning_curve(const CurveSpec& spec) {
  if (!spec.dag) throw ConfigError("learning curve needs an architecture");
  const ArchDag& dag = *spec.dag;
  if (spec.m_schedule.empty()) throw ConfigError("empty m schedule");
  for (std::size_t i = 1; i < spec.m_schedule.size(); ++i)
    if (spec.m_schedule[i] <= spec.m_schedule[i - 1]) throw ConfigError("m schedule must be increasing");
  if (spec.seeds.empty()) throw ConfigError("at least one seed is required");
  if (dag.readout() == Readout::gap && spec.coefficients != CoefficientMode::constant)
    throw ConfigError("GAP readout needs translation-symmetric targets (constant coefficients)");
  const std::size_t need = curve_memory_bytes(spec.m_schedule, spec.m_test);
  if (need > spec.fit.mem_cap)
    throw ResourceError("schedule needs " + std::to_string(need) + " bytes of kernel storage, cap is " +
                        std::to_string(spec.fit.mem_cap));
  const int p = spec.p;
  const int patches = p * p * p;
  const std::size_t top = spec.m_schedule.back();
  std::vector<CurveRow> rows;

  for (std::uint64_t seed : spec.seeds) {
    const PointMatrix norm_pts = sample_inputs(spec.m_normalize, patches, p, derive_seed(seed, SeedStream::normalize));
    const auto modes = build_appendix_eigenfunctions(p, derive_seed(seed, SeedStream::coefficients), spec.coefficients,
                                                     spec.project, norm_pts, spec.mode_ids);
    const PointMatrix train = sample_inputs(top, patches, p, derive_seed(seed, SeedStream::train));
    const PointMatrix test = sample_inputs(spec.m_test, patches, p, derive_seed(seed, SeedStream::test));

    Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(top));
    std::vector<std::vector<double>> mode_test;
    std::vector<std::string> Ls;
    for (const auto& f : modes) {
      auto v = f.eval_batch(train, spec.fit.threads);
      for (std::size_t i = 0; i < top; ++i) y(static_cast<Eigen::Index>(i)) += v[i];
      mode_test.push_back(f.eval_batch(test, spec.fit.threads));
      Ls.push_back(L_string(dag, f));
    }

    auto t0 = std::chrono::steady_clock::now();
    Eigen::MatrixXd K = kernel_matrix(dag, spec.kind, train, train, true, spec.fit.threads);
    const Eigen::MatrixXd Kt = kernel_matrix(dag, spec.kind, test, train, false, spec.fit.threads);
    const double kernel_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    for (std::size_t m : spec.m_schedule) {
      auto t1 = std::chrono::steady_clock::now();
      const auto mi = static_cast<Eigen::Index>(m);
      SolveInfo si;
      Eigen::VectorXd a;
      if (m == top) {
        a = solve_kernel_system(K, y, spec.fit, &si);
      } else {
        Eigen::MatrixXd Km = K.topLeftCorner(mi, mi);
        a = solve_kernel_system(Km, y.head(mi), spec.fit, &si);
      }
      Eigen::VectorXd pred = Kt.leftCols(mi) * a;
      std::vector<double> pv(pred.data(), pred.data() + pred.size());
      const double train_mse = (si.jitter * a).squaredNorm() / static_cast<double>(m);
      const auto res = residual_decomposition(pv, mode_test);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count() +
                          (m == spec.m_schedule.front() ? kernel_seconds : 0.0);
      for (std::size_t i = 0; i < modes.size(); ++i) {
        CurveRow r;
        r.run_id = spec.run_id;
        r.arch = spec.arch_name;
        r.kernel_kind = to_string(spec.kind);
        r.readout = dag.readout() == Readout::gap ? "gap" : "flatten";
        r.m_train = m;
        r.mode_id = modes[i].id;
        r.L_index = Ls[i];
        r.seed = seed;
        r.residual = res[i].residual;
        r.norm_sq_test = res[i].norm_sq_test;
        r.train_mse = train_mse;
        r.seconds = spec.timing ? secs : 0.0;
        rows.push_back(std::move(r));
      }
    }
  }
  return rows;
}

std::vector<CurveRow> gap_vs_flatten(const CurveSpec& flatten, const ArchDag& gap_dag, const std::string& gap_name) {
  if (flatten.coefficients != CoefficientMode::constant)
    throw ConfigError("GAP comparison needs translation-symmetric targets (constant coefficients)");
  if (gap_dag.readout() != Readout::gap) throw ConfigError("second architecture must use a GAP readout");
  auto rows = learning_curve(flatten);
  CurveSpec g = flatten;
  g.dag = &gap_dag;
  g.arch_name = gap_name;
  auto more = learning_curve(g);
  rows.insert(rows.end(), more.begin(), more.end());
  return rows;
}

std::string csv_header() {
  return "run_id,arch,kernel_kind,readout,m_train,mode_id,L_index,seed,residual,train_mse,seconds";
}

std::string csv_row(const CurveRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%s,%s,%s,%zu,%s,%s,%llu,%.12e,%.12e,%.3f", r.run_id.c_str(), r.arch.c_str(),
                r.kernel_kind.c_str(), r.readout.c_str(), r.m_train, r.mode_id.c_str(), r.L_index.c_str(),
                static_cast<unsigned long long>(r.seed), r.residual, r.train_mse, r.seconds);
  return buf;
}

std::map<CurveKey, CurveStat> curve_stats(const std::vector<CurveRow>& rows) {
  std::map<CurveKey, std::vector<double>> vals;
  for (const auto& r : rows) {
    const double nrm = r.norm_sq_test > 0.0 ? 2.0 * r.residual / r.norm_sq_test : 0.0;
    vals[{r.arch, r.readout, r.m_train, r.mode_id}].push_back(nrm);
  }
  std::map<CurveKey, CurveStat> out;
  for (const auto& [k, v] : vals) {
    CurveStat s;
    s.n = static_cast<int>(v.size());
    for (double x : v) s.mean += x;
    s.mean /= s.n;
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = s.n > 1 ? std::sqrt(ss / (s.n - 1)) : 0.0;
    out[k] = s;
  }
  return out;
}

double welch_se(const CurveStat& a, const CurveStat& b) {
  const double va = a.n > 0 ? a.sd * a.sd / a.n : 0.0;
  const double vb = b.n > 0 ? b.sd * b.sd / b.n : 0.0;
  return std::sqrt(va + vb);
}

}  // namespace nkspec
