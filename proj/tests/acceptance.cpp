// End-to-end acceptance run: one PASS/FAIL line per criterion.
// Usage: nkspec_acceptance [criterion numbers...]   (default: all)

#include "nkspec/eigenfunctions.hpp"
#include "nkspec/error.hpp"
#include "nkspec/harmonics.hpp"
#include "nkspec/indices.hpp"
#include "nkspec/kernel.hpp"
#include "nkspec/regression.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdarg>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifndef NKSPEC_CLI_PATH
#define NKSPEC_CLI_PATH "nkspec-cli"
#endif

using namespace nkspec;
namespace fs = std::filesystem;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

struct Outcome {
  bool pass = true;
  std::string summary;
};

void detail(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
void detail(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  std::printf("    ");
  std::vprintf(fmt, ap);
  std::printf("\n");
  va_end(ap);
  std::fflush(stdout);
}

std::string fstr(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
std::string fstr(const char* fmt, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  va_end(ap);
  return buf;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

MultiIndex mode_multi_index(const std::string& id, int p, const ArchDag& g) {
  const auto f = build_appendix_eigenfunction(id, p, 1, CoefficientMode::constant, true);
  return pattern_multi_index(f.pattern, p, g);
}

std::string rstr(const Rational& q) { return to_string(q); }

// ---- 1 ---------------------------------------------------------------------

Outcome index_tables() {
  Outcome o;
  struct Row {
    const char* id;
    Rational mlp_s, mlp_f, dc_s, dc_f, hr_s, hr_f;
  };
  // Reference values (MLP, CNN(p^2)^{x2}, CNN(p)^{x4}).
  const std::vector<Row> table = {
      {"Y1", 0, 1, Rational(1, 2), Rational(1, 2), Rational(3, 4), Rational(1, 4)},
      {"Y2", 0, 2, Rational(1, 2), Rational(2, 2), Rational(3, 4), Rational(2, 4)},
      {"Y3", 0, 2, Rational(1, 2), Rational(2, 2), Rational(4, 4), Rational(2, 4)},
      {"Y4", 0, 3, Rational(1, 2), Rational(3, 2), Rational(4, 4), Rational(3, 4)},
      {"Y5star", 0, 5, Rational(1, 2), Rational(5, 2), Rational(3, 4), Rational(5, 4)},
      {"Y5", 0, 2, Rational(2, 2), Rational(2, 2), Rational(6, 4), Rational(2, 4)},
      {"Y6", 0, 4, Rational(1, 2), Rational(4, 2), Rational(5, 4), Rational(4, 4)},
      {"Y7", 0, 4, Rational(1, 2), Rational(4, 2), Rational(6, 4), Rational(4, 4)},
  };
  const int p = 4;
  const Dual act = Dual::gaussian(1.0);
  const ArchDag mlp = mlp_family(p, 4, act), dc = d_cnn(p, act), hr = hr_cnn(p, act);
  int ok = 0, total = 0;
  auto cmp = [&](const char* id, const char* arch, const ArchDag& g, const Rational& S, const Rational& F) {
    const auto t = index_triple(g, mode_multi_index(id, p, g));
    ++total;
    if (t.finite && t.S == S && t.F == F) {
      ++ok;
    } else {
      o.pass = false;
      detail("%s under %s: computed S = %s, F = %s; expected S = %s, F = %s", id, arch, rstr(t.S).c_str(), rstr(t.F).c_str(),
             rstr(S).c_str(), rstr(F).c_str());
    }
  };
  for (const auto& r : table) {
    cmp(r.id, "MLP", mlp, r.mlp_s, r.mlp_f);
    cmp(r.id, "CNN(p^2)^2", dc, r.dc_s, r.dc_f);
    cmp(r.id, "CNN(p)^4", hr, r.hr_s, r.hr_f);
  }
  // Spatial index of the neighbour product Y2 under the three architectures.
  const Rational fig[3] = {0, Rational(1, 2), Rational(3, 4)};
  const ArchDag* gs[3] = {&mlp, &dc, &hr};
  int fig_ok = 0;
  for (int i = 0; i < 3; ++i) {
    const auto t = index_triple(*gs[i], mode_multi_index("Y2", p, *gs[i]));
    if (t.S == fig[i]) ++fig_ok;
    else o.pass = false;
  }
  o.summary = fstr("%d/%d table pairs, %d/3 Y2 spatial indices", ok, total, fig_ok);
  return o;
}

// ---- 2 ---------------------------------------------------------------------

Outcome harmonics() {
  Outcome o;
  double worst = 0.0;
  for (int d : {3, 10, 81})
    for (int r = 0; r <= 6; ++r)
      for (int s = 0; s <= 6; ++s) {
        const double v = gegenbauer_inner(d, r, s, 200);
        const double ref = r == s ? gegenbauer_norm_squared(d, r) : 0.0;
        const double scale = gegenbauer_norm_squared(d, std::max(r, s));
        worst = std::max(worst, std::abs(v - ref) / (r == s ? ref : scale));
      }
  double add = 0.0;
  for (int r = 0; r <= 4; ++r) add = std::max(add, addition_theorem_check(3, r, 200));
  bool counts = true;
  for (int r = 0; r <= 10; ++r) counts = counts && harmonic_count(3, r) == 2 * r + 1;
  o.pass = worst <= 1e-8 && add < 1e-10 && counts;
  o.summary = fstr("orthogonality rel err %.1e, addition theorem %.1e, N(3,r) %s", worst, add,
                   counts ? "exact" : "WRONG");
  return o;
}

// ---- 3 ---------------------------------------------------------------------

// Tensor-product central differences for per-variable orders <= 3.
double mixed_difference(const std::function<double(const std::vector<double>&)>& f, std::size_t n,
                        const std::vector<std::pair<std::size_t, int>>& r, double h) {
  static const std::vector<std::vector<std::pair<int, double>>> stencil = {
      {{0, 1.0}},
      {{1, 0.5}, {-1, -0.5}},
      {{1, 1.0}, {0, -2.0}, {-1, 1.0}},
      {{2, 0.5}, {1, -1.0}, {-1, 1.0}, {-2, -0.5}},
  };
  double total = 0.0;
  std::vector<std::size_t> idx(r.size(), 0);
  while (true) {
    std::vector<double> t(n, 0.0);
    double w = 1.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      const auto& st = stencil[r[i].second][idx[i]];
      t[r[i].first] = st.first * h;
      w *= st.second / std::pow(h, r[i].second);
    }
    total += w * f(t);
    std::size_t i = 0;
    while (i < r.size() && ++idx[i] == stencil[r[i].second].size()) idx[i++] = 0;
    if (i == r.size()) break;
  }
  return total;
}

Outcome derivative_scaling() {
  Outcome o;
  const Dual act = Dual::centered_exp(1.0);
  // (input positions as functions of p, degrees)
  struct Spec {
    const char* name;
    std::function<std::vector<std::pair<int, int>>(int)> nodes;
  };
  const std::vector<Spec> specs = {
      {"{a}", [](int) { return std::vector<std::pair<int, int>>{{0, 1}}; }},
      {"{a^2}", [](int) { return std::vector<std::pair<int, int>>{{0, 2}}; }},
      {"{a^3}", [](int) { return std::vector<std::pair<int, int>>{{0, 3}}; }},
      {"{a,b}", [](int) { return std::vector<std::pair<int, int>>{{0, 1}, {1, 1}}; }},
      {"{a^2,c}", [](int p) { return std::vector<std::pair<int, int>>{{0, 2}, {p, 1}}; }},
      {"{a,e}", [](int p) { return std::vector<std::pair<int, int>>{{0, 1}, {p * p, 1}}; }},
      {"{a,b,c}", [](int p) { return std::vector<std::pair<int, int>>{{0, 1}, {1, 1}, {p, 1}}; }},
      {"{a,c,e}", [](int p) { return std::vector<std::pair<int, int>>{{0, 1}, {p, 1}, {p * p, 1}}; }},
  };
  int slopes_ok = 0, slopes_total = 0;
  double worst_slope = 0.0;
  for (KernelKind kind : {KernelKind::nngp, KernelKind::ntk}) {
    for (const auto& sp : specs) {
      std::vector<double> lx, ly;
      std::optional<Rational> S;
      bool constant_S = true;
      for (int p : {2, 3, 4, 5}) {
        const ArchDag g = hr_cnn(p, act);
        MultiIndex r;
        for (auto [pos, deg] : sp.nodes(p)) {
          r[g.inputs()[pos]] = deg;
        }
        const Rational s = index_triple(g, r).S;
        if (S && *S != s) constant_S = false;
        S = s;
        lx.push_back(std::log(std::pow(p, 4.0)));
        ly.push_back(std::log(std::abs(derivative_at_zero(g, kind, r))));
      }
      const double sl = slope(lx, ly);
      const double err = std::abs(sl + to_double(*S));
      worst_slope = std::max(worst_slope, err);
      ++slopes_total;
      if (err <= 0.3 && constant_S) ++slopes_ok;
      else o.pass = false;
      detail("%s %-8s S=%s slope %.3f", to_string(kind).c_str(), sp.name, rstr(*S).c_str(), sl);
    }
  }
  // Jets against Richardson-extrapolated finite differences at p = 2.
  const ArchDag g = hr_cnn(2, act);
  const std::size_t n = g.inputs().size();
  double worst_fd = 0.0;
  for (KernelKind kind : {KernelKind::nngp, KernelKind::ntk}) {
    auto f = [&](const std::vector<double>& t) { return kind == KernelKind::nngp ? nngp_eval(g, t) : ntk_eval(g, t); };
    for (const auto& sp : specs) {
      std::vector<std::pair<std::size_t, int>> r;
      MultiIndex mi;
      for (auto [pos, deg] : sp.nodes(2)) {
        r.emplace_back(static_cast<std::size_t>(pos), deg);
        mi[g.inputs()[pos]] = deg;
      }
      const double h = 0.02;
      const double a = mixed_difference(f, n, r, h), b = mixed_difference(f, n, r, h / 2);
      const double fd = (4.0 * b - a) / 3.0;
      const double jet = derivative_at_zero(g, kind, mi);
      worst_fd = std::max(worst_fd, std::abs(jet - fd) / std::abs(jet));
    }
  }
  if (worst_fd > 1e-4) o.pass = false;
  o.summary = fstr("%d/%d slopes within 0.3 of -S (worst %.3f), jet vs finite differences rel %.1e", slopes_ok,
                   slopes_total, worst_slope, worst_fd);
  return o;
}

// ---- 4 ---------------------------------------------------------------------

struct EigenRow {
  std::string id;
  int p;
  Rational L;
  EigenEstimate jet, mc;
};

std::vector<EigenRow> eigen_rows(KernelKind kind, const Dual& act, const std::vector<int>& ps, std::size_t samples) {
  std::vector<EigenRow> rows;
  for (int p : ps) {
    const ArchDag g = hr_cnn(p, act);
    for (const auto& id : appendix_ids()) {
      MultiIndex r;
      try {
        r = mode_multi_index(id, p, g);
      } catch (const ConfigError&) {
        continue;  // needs three distinct coordinates per patch
      }
      EigenRow e{id, p, index_triple(g, r).L, {}, {}};
      e.jet = eigenvalue_estimate(g, kind, r, EigenMethod::jet);
      if (samples > 0)
        e.mc = eigenvalue_estimate(g, kind, r, EigenMethod::monte_carlo, samples, 1000 + 10 * p + rows.size());
      rows.push_back(e);
    }
  }
  return rows;
}

Outcome eigenvalue_scaling() {
  Outcome o;
  const Dual act = Dual::centered_exp(1.0);
  int slope_ok = 0, slope_total = 0, agree = 0, agree_total = 0, mc_slope_ok = 0;
  double worst = 0.0;
  for (KernelKind kind : {KernelKind::nngp, KernelKind::ntk}) {
    const auto rows = eigen_rows(kind, act, {2, 3, 4, 5}, 100000);
    for (const auto& id : appendix_ids()) {
      std::vector<double> lx, lj, lm;
      Rational L;
      for (const auto& e : rows) {
        if (e.id != id) continue;
        L = e.L;
        lx.push_back(std::log(std::pow(e.p, 4.0)));
        lj.push_back(std::log(e.jet.value));
        lm.push_back(std::log(std::max(e.mc.value, 1e-300)));
        const double z = std::abs(e.mc.value - e.jet.value) / e.mc.std_error;
        ++agree_total;
        if (z <= 3.0) ++agree;
        worst = std::max(worst, e.jet.value / e.mc.value);
        detail("%s %-6s p=%d L=%-4s jet %.4e  mc %.4e +- %.1e  (%.1f sigma)", to_string(kind).c_str(), id.c_str(), e.p,
               rstr(L).c_str(), e.jet.value, e.mc.value, e.mc.std_error, z);
      }
      const double sj = slope(lx, lj), sm = slope(lx, lm);
      ++slope_total;
      if (std::abs(sj + to_double(L)) <= 0.3) ++slope_ok;
      if (std::abs(sm + to_double(L)) <= 0.3) ++mc_slope_ok;
      detail("%s %-6s slope jet %.3f  mc %.3f  target %.3f", to_string(kind).c_str(), id.c_str(), sj, sm,
             -to_double(L));
    }
  }
  o.pass = slope_ok == slope_total && agree == agree_total;
  o.summary = fstr("jet slopes %d/%d within 0.3 of -L; jet within 3 sigma of Monte Carlo %d/%d; Monte Carlo slopes "
                   "%d/%d within 0.3",
                   slope_ok, slope_total, agree, agree_total, mc_slope_ok, slope_total);
  return o;
}

// ---- 5 ---------------------------------------------------------------------

Outcome spectral_learnability() {
  Outcome o;
  const int p = 4;
  const double d = 256.0;
  const auto rows = eigen_rows(KernelKind::ntk, Dual::centered_exp(1.0), {p}, 400000);
  // Mid-points of the gaps between consecutive learning indices (multiples of
  // 1/4 from 1 on), plus one exponent below and one above all modes.
  std::vector<double> rs = {0.5};
  for (int k = 4; k < 12; ++k) rs.push_back((k + 0.5) / 4.0);
  rs.push_back(3.25);
  int good = 0;
  for (double r : rs) {
    const double t = std::pow(d, r);
    int below = 0, below_ok = 0, above = 0, above_ok = 0;
    for (const auto& e : rows) {
      // an estimate below zero is noise around a vanishing eigenvalue
      const double L = to_double(e.L), res = gradient_flow_residual(std::max(e.mc.value, 0.0), t);
      if (L < r - 0.1) {
        ++below;
        below_ok += res < 0.01;
      } else if (L > r + 0.1) {
        ++above;
        above_ok += res > 0.9;
      }
    }
    const bool ok = below_ok == below && above_ok == above;
    good += ok;
    detail("r=%.3f: learned %d/%d, unlearned %d/%d", r, below_ok, below, above_ok, above);
  }
  for (const auto& e : rows)
    detail("%-6s L=%-4s lambda %.4e +- %.1e  lambda d^L %.3f", e.id.c_str(), rstr(e.L).c_str(), e.mc.value,
           e.mc.std_error, e.mc.value * std::pow(d, to_double(e.L)));
  o.pass = good == static_cast<int>(rs.size());
  o.summary = fstr("%d/%zu exponents r separate learned from unlearned modes at d = 256", good, rs.size());
  return o;
}

// ---- 6 and 8 -----------------------------------------------------------------

const std::vector<std::size_t> kSchedule = {81, 243, 729, 1135, 2187, 6561, 15000};

struct CurveRun {
  std::vector<CurveRow> rows;
  std::map<CurveKey, CurveStat> stats;
  double seconds = 0.0;
};

CurveRun run_curves(const ArchDag& g, const std::string& name, const std::vector<std::size_t>& schedule,
                    std::size_t m_test, const std::vector<std::string>& modes, CoefficientMode coef, int threads) {
  CurveSpec s;
  s.run_id = "acceptance";
  s.arch_name = name;
  s.dag = &g;
  s.kind = KernelKind::ntk;
  s.p = 3;
  s.m_schedule = schedule;
  s.m_test = m_test;
  s.seeds = {1, 2, 3};
  s.mode_ids = modes;
  s.coefficients = coef;
  s.timing = true;
  s.fit.threads = threads;
  Timer t;
  CurveRun run;
  run.rows = learning_curve(s);
  run.stats = curve_stats(run.rows);
  run.seconds = t.seconds();
  return run;
}

std::map<std::string, Rational> mode_L(const ArchDag& g, int p) {
  std::map<std::string, Rational> L;
  for (const auto& id : appendix_ids()) L[id] = index_triple(g, mode_multi_index(id, p, g)).L;
  return L;
}

void append_csv(const std::string& path, const std::vector<CurveRow>& rows) {
  const bool fresh = !fs::exists(path);
  std::ofstream f(path, std::ios::app);
  if (fresh) f << csv_header() << "\n";
  for (const auto& r : rows) f << csv_row(r) << "\n";
}

int threads() { return std::max(1u, std::thread::hardware_concurrency()); }

std::optional<CurveRun> g_mlp4;

Outcome desk_scale_curves() {
  Outcome o;
  const Dual act = Dual::gaussian(1.0);
  const ArchDag hr = hr_cnn(3, act), mlp = mlp_family(3, 4, act);
  const auto& modes = appendix_ids();
  Timer total;
  const CurveRun a = run_curves(hr, "hr_cnn", kSchedule, 4000, modes, CoefficientMode::random, threads());
  detail("CNN(p)^4 curves: %.0f s", a.seconds);
  g_mlp4 = run_curves(mlp, "mlp4", kSchedule, 4000, modes, CoefficientMode::random, threads());
  detail("MLP curves: %.0f s", g_mlp4->seconds);
  append_csv("acceptance_curves.csv", a.rows);
  append_csv("acceptance_curves.csv", g_mlp4->rows);
  const auto Lhr = mode_L(hr, 3), Lmlp = mode_L(mlp, 3);

  // (a) first m with mean normalized residual below 0.25, ordered by L.
  std::map<std::string, double> first;
  for (const auto& id : modes) {
    first[id] = std::numeric_limits<double>::infinity();
    for (std::size_t m : kSchedule) {
      const auto& st = a.stats.at({"hr_cnn", "flatten", m, id});
      detail("hr %-6s L=%-4s m=%5zu residual %.4f +- %.4f", id.c_str(), rstr(Lhr.at(id)).c_str(), m, st.mean, st.sd);
      if (st.mean < 0.25 && std::isinf(first[id])) first[id] = static_cast<double>(m);
    }
  }
  bool ok_a = true;
  for (const auto& x : modes)
    for (const auto& y : modes)
      if (Lhr.at(x) < Lhr.at(y) && first[x] > first[y]) {
        ok_a = false;
        detail("(a) %s (L=%s) first below 0.25 at %g, after %s (L=%s) at %g", x.c_str(), rstr(Lhr.at(x)).c_str(),
               first[x], y.c_str(), rstr(Lhr.at(y)).c_str(), first[y]);
      }

  // (b) MLP: equal-L modes overlap within 2 sigma; Y5star stays above 0.8.
  bool ok_b = true;
  int pairs = 0, pairs_ok = 0;
  for (std::size_t m : kSchedule) {
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const auto& si = g_mlp4->stats.at({"mlp4", "flatten", m, modes[i]});
      detail("mlp %-6s L=%-4s m=%5zu residual %.4f +- %.4f", modes[i].c_str(), rstr(Lmlp.at(modes[i])).c_str(), m,
             si.mean, si.sd);
      for (std::size_t j = i + 1; j < modes.size(); ++j) {
        if (Lmlp.at(modes[i]) != Lmlp.at(modes[j])) continue;
        const auto& sj = g_mlp4->stats.at({"mlp4", "flatten", m, modes[j]});
        const double se = welch_se(si, sj), diff = std::abs(si.mean - sj.mean);
        ++pairs;
        if (diff <= 2.0 * se) {
          ++pairs_ok;
        } else {
          ok_b = false;
          detail("(b) m=%zu %s vs %s differ by %.4f (2 sigma = %.4f)", m, modes[i].c_str(), modes[j].c_str(), diff,
                 2.0 * se);
        }
      }
    }
    const auto& s5 = g_mlp4->stats.at({"mlp4", "flatten", m, "Y5star"});
    if (!(s5.mean > 0.8)) {
      ok_b = false;
      detail("(b) Y5star residual %.4f at m=%zu", s5.mean, m);
    }
  }

  // (c) total residual at m = d^1.6 against the total norm of modes with L > 1.6.
  double total_res = 0.0, unlearned = 0.0, norm = 0.0;
  for (const auto& r : a.rows) {
    if (r.m_train != 1135) continue;
    total_res += 2.0 * r.residual / 3.0;  // (c_hat - 1)^2 ||Y||^2, averaged over 3 seeds
    norm += r.norm_sq_test / 3.0;
    if (to_double(Lhr.at(r.mode_id)) > 1.6) unlearned += r.norm_sq_test / 3.0;
  }
  const bool ok_c = std::abs(total_res - unlearned) <= 0.15 * norm;
  detail("(c) m=1135: total residual %.4f, norm above L=1.6 %.4f, tolerance %.4f", total_res, unlearned, 0.15 * norm);

  const double secs = total.seconds();
  const double budget = 30.0 * 60.0 * std::max(1.0, 8.0 / threads());
  o.pass = ok_a && ok_b && ok_c && secs <= budget;
  o.summary = fstr("(a) %s, (b) %s (%d/%d equal-L pairs overlap), (c) %s; %.0f s of %.0f s budget at %d threads",
                   ok_a ? "ok" : "FAIL", ok_b ? "ok" : "FAIL", pairs_ok, pairs, ok_c ? "ok" : "FAIL", secs, budget,
                   threads());
  return o;
}

Outcome depth_invariance() {
  Outcome o;
  const Dual act = Dual::gaussian(1.0);
  const ArchDag m1 = mlp_family(3, 1, act), m4 = mlp_family(3, 4, act);
  Timer t;
  const auto s1 = learning_sequence(m1, 6), s4 = learning_sequence(m4, 6);
  bool same = s1.size() == s4.size();
  for (std::size_t i = 0; same && i < s1.size(); ++i) {
    same = s1[i].L == s4[i].L && s1[i].classes.size() == s4[i].classes.size();
    for (std::size_t j = 0; same && j < s1[i].classes.size(); ++j) {
      const auto &a = s1[i].classes[j], &b = s4[i].classes[j];
      same = a.degree == b.degree && a.support_size == b.support_size && a.patterns == b.patterns &&
             a.dimension == b.dimension && a.S == b.S && a.F == b.F;
    }
  }
  if (!g_mlp4) g_mlp4 = run_curves(m4, "mlp4", kSchedule, 4000, appendix_ids(), CoefficientMode::random, threads());
  const CurveRun d1 = run_curves(m1, "mlp1", kSchedule, 4000, appendix_ids(), CoefficientMode::random, threads());
  append_csv("acceptance_curves.csv", d1.rows);
  int pairs = 0, ok = 0;
  for (std::size_t m : kSchedule)
    for (const auto& id : appendix_ids()) {
      const auto& a = d1.stats.at({"mlp1", "flatten", m, id});
      const auto& b = g_mlp4->stats.at({"mlp4", "flatten", m, id});
      ++pairs;
      const double diff = std::abs(a.mean - b.mean), se = welch_se(a, b);
      if (diff <= 2.0 * se) ++ok;
      else detail("m=%5zu %-6s depth 1 %.4f +- %.4f, depth 4 %.4f +- %.4f", m, id.c_str(), a.mean, a.sd, b.mean, b.sd);
    }
  const double secs = t.seconds() + g_mlp4->seconds;
  o.pass = same && ok == pairs && secs <= 15 * 60;
  o.summary = fstr("learning sequences %s (%zu indices up to degree 6); %d/%d curve points overlap within 2 sigma; "
                   "%.0f s",
                   same ? "identical" : "DIFFER", s1.size(), ok, pairs, secs);
  return o;
}

// ---- 7 ---------------------------------------------------------------------

Outcome gap_vs_flatten_curves() {
  Outcome o;
  const Dual act = Dual::gaussian(1.0);
  const int p = 3;
  const ArchDag flat = hr_cnn(p, act, Readout::flatten, false), gap = hr_cnn(p, act, Readout::gap, false);
  // Y5star is absent: with equal coefficients its shifted copies cancel at p = 3.
  const std::vector<std::string> modes = {"Y1", "Y2", "Y3", "Y4", "Y5", "Y6", "Y7"};
  const std::size_t m0 = 729;
  Timer t;
  // jets: GAP and flatten eigenvalues on every mode of the table
  double worst = 0.0;
  for (const auto& id : appendix_ids()) {
    if (id == "Y5star") continue;
    const double a = eigenvalue_estimate(flat, KernelKind::ntk, mode_multi_index(id, p, flat), EigenMethod::jet).value;
    const double b = eigenvalue_estimate(gap, KernelKind::ntk, mode_multi_index(id, p, gap), EigenMethod::jet).value;
    worst = std::max(worst, std::abs(a - b) / std::abs(a));
  }
  CurveSpec s;
  s.run_id = "acceptance";
  s.arch_name = "flatten";
  s.dag = &flat;
  s.kind = KernelKind::ntk;
  s.p = p;
  s.m_schedule = {m0, 4 * m0};
  s.m_test = 2000;
  s.seeds = {1, 2, 3};
  s.mode_ids = modes;
  s.coefficients = CoefficientMode::constant;
  s.timing = true;
  s.fit.threads = threads();
  const auto rows = gap_vs_flatten(s, gap, "gap");
  append_csv("acceptance_curves.csv", rows);
  const auto st = curve_stats(rows);
  const auto L = mode_L(flat, p);
  std::string top = modes.front();
  for (const auto& id : modes)
    if (L.at(id) > L.at(top)) top = id;
  auto z_of = [&](std::size_t m, const std::string& id) {
    const auto& a = st.at({"flatten", "flatten", m, id});
    const auto& b = st.at({"gap", "gap", m, id});
    detail("m=%5zu %-3s L=%-4s flatten %.4f +- %.4f  gap %.4f +- %.4f", m, id.c_str(), rstr(L.at(id)).c_str(), a.mean,
           a.sd, b.mean, b.sd);
    return (a.mean - b.mean) / welch_se(a, b);
  };
  const double z_top = z_of(m0, top);
  bool closes = true;
  for (const auto& id : modes) {
    if (id != top) z_of(m0, id);
    const double z = z_of(4 * m0, id);
    if (!(std::abs(z) < 2.0)) closes = false;
  }
  const double secs = t.seconds();
  o.pass = z_top >= 3.0 && closes && worst <= 1e-6 && secs <= 30 * 60;
  o.summary = fstr("%s at m=%zu: GAP ahead by %.1f sigma; at m=%zu every gap %s 2 sigma; jet eigenvalues rel %.1e; "
                   "%.0f s",
                   top.c_str(), m0, z_top, 4 * m0, closes ? "below" : "NOT below", worst, secs);
  return o;
}

// ---- 9 ---------------------------------------------------------------------

DcnnSpec counting_spec(Readout ro) {
  DcnnSpec s;
  s.p = 2;
  s.k = 2;
  s.L = 1;
  s.w = 2;
  s.alpha_p = s.alpha_k = s.alpha_w = Rational(1, 3);
  s.readout = ro;
  s.act_after_readout = false;
  s.activation = Dual::gaussian(1.0);
  return s;
}

Outcome dimension_counting() {
  Outcome o;
  const ArchDag flat = build_dcnn(counting_spec(Readout::flatten)), gap = build_dcnn(counting_spec(Readout::gap));
  const int max_degree = 4, w = 2;
  const auto& in = gap.inputs();
  const int n = static_cast<int>(in.size());
  const int d = gap.reference_dim(), shift = d / w;
  // input position reached by one pen shift
  std::vector<int> next(n);
  for (int i = 0; i < n; ++i) {
    const int off = (gap.node(in[i]).input_offset + shift) % d;
    for (int j = 0; j < n; ++j)
      if (gap.node(in[j]).input_offset == off) next[i] = j;
  }
  // Basis element: per input (degree, harmonic index).  Orbits of the shift
  // group on basis elements span the symmetric subspace.
  using Basis = std::vector<std::pair<int, int>>;
  std::map<Rational, std::set<Basis>> by_L;
  std::map<Rational, long> flat_brute;
  std::map<Rational, bool> orbit_free;
  std::vector<int> r(n, 0);
  std::function<void(int, int)> rec = [&](int i, int left) {
    if (i == n) {
      MultiIndex mi, mf;
      int tot = 0;
      for (int j = 0; j < n; ++j)
        if (r[j] > 0) mi[in[j]] = r[j], mf[flat.inputs()[j]] = r[j], tot += r[j];
      if (tot == 0) return;
      const auto tg = index_triple(gap, mi), tf = index_triple(flat, mf);
      if (tf.finite) {
        long cnt = 1;
        for (int j = 0; j < n; ++j) cnt *= static_cast<long>(harmonic_count_double(flat.node(flat.inputs()[j]).dim, r[j]));
        flat_brute[tf.L] += cnt;
        std::vector<int> sr(n);
        for (int j = 0; j < n; ++j) sr[next[j]] = r[j];
        if (!orbit_free.count(tf.L)) orbit_free[tf.L] = true;
        if (sr == r) orbit_free[tf.L] = false;
      }
      if (!tg.finite) return;
      // enumerate harmonic indices
      std::vector<int> l(n, 0);
      std::function<void(int)> rl = [&](int j) {
        if (j == n) {
          Basis b(n);
          for (int q = 0; q < n; ++q) b[q] = {r[q], l[q]};
          Basis c = b, best = b;
          for (int k = 1; k < w; ++k) {
            Basis s(n);
            for (int q = 0; q < n; ++q) s[next[q]] = c[q];
            c = s;
            best = std::min(best, c);
          }
          by_L[tg.L].insert(best);
          return;
        }
        const int N = static_cast<int>(harmonic_count_double(gap.node(in[j]).dim, r[j]));
        for (l[j] = 0; l[j] < N; ++l[j]) rl(j + 1);
      };
      rl(0);
      return;
    }
    for (int a = 0; a <= left; ++a) {
      r[i] = a;
      rec(i + 1, left - a);
    }
    r[i] = 0;
  };
  rec(0, max_degree);
  int checked = 0, ok = 0;
  for (const auto& [L, orbits] : by_L) {
    ++checked;
    const BigInt got = eigenspace_dimension(gap, L, max_degree);
    if (got == BigInt(orbits.size())) ++ok;
    else detail("GAP L=%s: counted %s, brute force %zu", rstr(L).c_str(), got.str().c_str(), orbits.size());
  }
  for (const auto& [L, cnt] : flat_brute) {
    ++checked;
    const BigInt got = eigenspace_dimension(flat, L, max_degree);
    if (got == BigInt(cnt)) ++ok;
    else detail("flatten L=%s: counted %s, brute force %ld", rstr(L).c_str(), got.str().c_str(), cnt);
  }
  int free_checked = 0, free_ok = 0;
  for (const auto& [L, free] : orbit_free) {
    if (!free || !by_L.count(L)) continue;
    ++free_checked;
    if (eigenspace_dimension(flat, L, max_degree) == w * eigenspace_dimension(gap, L, max_degree)) ++free_ok;
    else detail("orbit-free L=%s: flatten %s vs w x GAP %s", rstr(L).c_str(),
                eigenspace_dimension(flat, L, max_degree).str().c_str(),
                (w * eigenspace_dimension(gap, L, max_degree)).str().c_str());
  }
  o.pass = ok == checked && free_ok == free_checked && free_checked > 0;
  o.summary = fstr("%d/%d eigenspace counts match brute force; flatten = w x GAP on %d/%d orbit-free indices", ok,
                   checked, free_ok, free_checked);
  return o;
}

// ---- 10 --------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "nkspec_acceptance_cli";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::map<std::string, std::string> configs = {
      {"indices", "[experiment]\np = 3\nsequence_max_degree = 3\n[arch hr]\nfamily = hr_cnn\n[arch mlp]\nfamily = mlp\n"
                  "[arch dc]\nfamily = d_cnn\n"},
      {"eigvals", "[experiment]\np_sweep = 2, 3\nmethod = both\nsamples = 3000\ndual = centered_exp:1.0\n"
                  "modes = Y1, Y2, Y5\n[arch hr]\nfamily = hr_cnn\n"},
      {"regress", "[experiment]\np = 2\nm = 16, 48\nm_test = 100\nm_normalize = 1000\nmodes = Y1, Y2, Y3\n"
                  "[arch hr]\nfamily = hr_cnn\n[arch mlp]\nfamily = mlp\ndepth = 2\n"},
      {"gap-compare", "[experiment]\np = 2\nm = 16, 64\nm_test = 100\nm_normalize = 1000\nmodes = Y1, Y2\n"
                      "coefficients = constant\n[arch flat]\nfamily = hr_cnn\nact_after_readout = false\n"
                      "[arch gap]\nfamily = hr_cnn\nreadout = gap\n"},
      {"validate", "[experiment]\np = 3\n[arch hr]\nfamily = hr_cnn\n[arch dc]\nfamily = d_cnn\n"},
  };
  int same = 0, total = 0;
  for (const auto& [cmd, text] : configs) {
    const fs::path cfg = root / (cmd + ".conf");
    std::ofstream(cfg) << text;
    std::vector<std::map<std::string, std::string>> outs;
    for (const char* th : {"1", "1", "3"}) {
      const fs::path out = root / (cmd + "_" + std::to_string(outs.size()));
      const std::string line = std::string("\"") + NKSPEC_CLI_PATH + "\" " + cmd + " --config \"" + cfg.string() +
                               "\" --out \"" + out.string() + "\" --seeds 2 --threads " + th + " > /dev/null 2>&1";
      const int rc = std::system(line.c_str());
      if (rc != 0) detail("%s exited with status %d", cmd.c_str(), rc);
      std::map<std::string, std::string> files;
      if (fs::exists(out))
        for (const auto& e : fs::directory_iterator(out))
          if (e.path().extension() == ".csv") files[e.path().filename().string()] = slurp(e.path());
      outs.push_back(files);
    }
    ++total;
    const bool eq = !outs[0].empty() && outs[0] == outs[1] && outs[0] == outs[2];
    if (eq) ++same;
    detail("%-11s %zu CSV files, %s", cmd.c_str(), outs[0].size(), eq ? "byte-identical" : "DIFFERENT");
  }
  o.pass = same == total;
  o.summary = fstr("%d/%d subcommands byte-identical across reruns and thread counts", same, total);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    double limit;  // seconds, 0 for none checked here
    Outcome (*run)();
  };
  const std::vector<Criterion> all = {
      {1, "index tables", 1.0, index_tables},
      {2, "harmonics", 10.0, harmonics},
      {3, "derivative scaling", 120.0, derivative_scaling},
      {4, "eigenvalue scaling", 300.0, eigenvalue_scaling},
      {5, "spectral learnability", 60.0, spectral_learnability},
      {6, "desk-scale learning curves", 0.0, desk_scale_curves},
      {7, "GAP vs flatten", 0.0, gap_vs_flatten_curves},
      {8, "MLP depth invariance", 0.0, depth_invariance},
      {9, "dimension counting", 60.0, dimension_counting},
      {10, "determinism", 0.0, determinism},
  };
  std::set<int> pick;
  for (int i = 1; i < argc; ++i) pick.insert(std::atoi(argv[i]));
  fs::remove("acceptance_curves.csv");
  int failed = 0;
  for (const auto& c : all) {
    if (!pick.empty() && !pick.count(c.id)) continue;
    std::printf("criterion %d [%s]\n", c.id, c.name);
    std::fflush(stdout);
    Timer t;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.summary = std::string("exception: ") + e.what();
    }
    const double secs = t.seconds();
    if (c.limit > 0.0 && secs > c.limit) {
      o.pass = false;
      o.summary += fstr("; took %.1f s, limit %.0f s", secs, c.limit);
    }
    failed += !o.pass;
    std::printf("criterion %d [%s]: %s (%s; %.1f s)\n", c.id, c.name, o.pass ? "PASS" : "FAIL", o.summary.c_str(),
                secs);
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
