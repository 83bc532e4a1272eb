#include "config.hpp"
#include "svg.hpp"

#include "nkspec/nkspec.h"
#include "nkspec/random.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace nkcli;

namespace {

// Carries a library status code up to main().
struct CliError : std::runtime_error {
  int code;
  CliError(int c, const std::string& m) : std::runtime_error(m), code(c) {}
};

void check(int status, const std::string& what) {
  if (status != NKS_OK) throw CliError(status, what + ": " + nks_last_error());
}

int exit_code(int status) {
  switch (status) {
    case NKS_INVALID:
    case NKS_CONFIG: return 2;
    case NKS_RESOURCE: return 3;
    case NKS_NUMERICAL: return 4;
    default: return 1;
  }
}

struct DualDel {
  void operator()(nks_dual* d) const { nks_dual_free(d); }
};
struct ArchDel {
  void operator()(nks_arch* a) const { nks_arch_free(a); }
};
struct TableDel {
  void operator()(nks_table* t) const { nks_table_free(t); }
};
using DualPtr = std::unique_ptr<nks_dual, DualDel>;
using ArchPtr = std::unique_ptr<nks_arch, ArchDel>;
using TablePtr = std::unique_ptr<nks_table, TableDel>;

std::string take(char* s) {
  std::string out = s ? s : "";
  nks_string_free(s);
  return out;
}

struct Options {
  std::string config_path;
  std::string out_dir = "out";
  int seeds = 0;  // 0: from config
  int threads = 1;
  std::string mem_cap;
  bool timing = false;
};

struct Run {
  Config cfg;
  Options opt;
  std::vector<std::uint64_t> seeds;
  std::size_t mem_cap = 0;
};

DualPtr make_dual(const std::string& spec) {
  nks_dual* d = nullptr;
  check(nks_dual_parse(spec.c_str(), &d), "dual '" + spec + "'");
  return DualPtr(d);
}

int parse_kind(const Section& s) {
  const std::string k = s.str("kernel", "ntk");
  if (k == "ntk") return NKS_NTK;
  if (k == "nngp") return NKS_NNGP;
  s.fail("kernel", "expected ntk or nngp, got '" + k + "'");
}

std::string kind_name(int kind) { return kind == NKS_NTK ? "ntk" : "nngp"; }

int parse_readout(const Section& s) {
  const std::string r = s.str("readout", "flatten");
  if (r == "flatten") return NKS_FLATTEN;
  if (r == "gap") return NKS_GAP;
  s.fail("readout", "expected flatten or gap, got '" + r + "'");
}

const std::set<std::string> kArchKeys = {"family", "dual", "depth", "readout", "act_after_readout", "file",
                                         "k", "L", "w", "alpha_p", "alpha_k", "alpha_w", "p"};

// Builds the architecture of one [arch] section for base patch size p.
ArchPtr build_arch(const Run& run, const Section& s, int p) {
  for (const auto& [key, e] : s.entries)
    if (!kArchKeys.count(key)) s.fail(key, "unknown key in [arch " + s.name + "]");
  if (!s.has("family")) s.fail("family", "missing (hr_cnn, d_cnn, mlp, s_cnn, dcnn or text)");
  const std::string family = s.str("family", "");
  const DualPtr act = make_dual(s.str("dual", run.cfg.experiment().str("dual", "gaussian:1.0")));
  const int readout = parse_readout(s);
  const int after = s.boolean("act_after_readout", readout != NKS_GAP) ? 1 : 0;
  nks_arch* a = nullptr;
  const std::string where = "[arch " + s.name + "] (line " + std::to_string(s.line) + ")";
  if (family == "text") {
    if (!s.has("file")) s.fail("file", "text architectures need file = PATH");
    fs::path path = s.str("file", "");
    if (path.is_relative()) path = fs::path(run.cfg.base_dir) / path;
    std::ifstream f(path);
    if (!f) s.fail("file", "cannot read '" + path.string() + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    check(nks_arch_parse_text(ss.str().c_str(), &a), where);
  } else if (family == "dcnn") {
    const std::string ap = s.str("alpha_p", "0"), ak = s.str("alpha_k", "0"), aw = s.str("alpha_w", "0");
    check(nks_arch_dcnn(static_cast<int>(s.integer("p", p)), static_cast<int>(s.integer("k", 2)),
                        static_cast<int>(s.integer("L", 1)), static_cast<int>(s.integer("w", 1)), ap.c_str(),
                        ak.c_str(), aw.c_str(), act.get(), readout, after, &a),
          where);
  } else {
    check(nks_arch_family(family.c_str(), p, static_cast<int>(s.integer("depth", 4)), act.get(), readout, after, &a),
          where);
  }
  return ArchPtr(a);
}

std::vector<std::string> mode_list(const Section& e) {
  const std::vector<std::string> all = split_list(take([] {
    char* s = nullptr;
    check(nks_mode_ids(&s), "mode ids");
    return s;
  }()));
  const auto ids = e.list("modes", all);
  for (const auto& id : ids) {
    bool ok = false;
    for (const auto& a : all) ok = ok || a == id;
    if (!ok) {
      std::string valid;
      for (const auto& a : all) valid += (valid.empty() ? "" : ", ") + a;
      e.fail("modes", "unknown eigenfunction id '" + id + "' (valid ids: " + valid + ")");
    }
  }
  return ids;
}

struct ModeIndex {
  std::vector<int> nodes;
  std::vector<int> degrees;
};

ModeIndex mode_index(const std::string& id, int p, const nks_arch* a) {
  ModeIndex m;
  std::size_t k = 0;
  check(nks_mode_multi_index(id.c_str(), p, a, nullptr, nullptr, 0, &k), "mode " + id);
  m.nodes.resize(k);
  m.degrees.resize(k);
  check(nks_mode_multi_index(id.c_str(), p, a, m.nodes.data(), m.degrees.data(), k, &k), "mode " + id);
  return m;
}

struct Triple {
  bool finite = false;
  std::string S, F, L;
};

Triple triple(const nks_arch* a, const ModeIndex& m) {
  Triple t;
  int finite = 0;
  char *S = nullptr, *F = nullptr, *L = nullptr;
  check(nks_index_triple(a, m.nodes.data(), m.degrees.data(), m.nodes.size(), &finite, &S, &F, &L), "indices");
  t.finite = finite != 0;
  t.S = take(S);
  t.F = take(F);
  t.L = take(L);
  return t;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string o = "\"";
  for (char c : s) o += c == '"' ? std::string("\"\"") : std::string(1, c);
  return o + "\"";
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12e", v);
  return buf;
}

void write_file(const Run& run, const std::string& name, const std::string& content) {
  fs::create_directories(run.opt.out_dir);
  const fs::path path = fs::path(run.opt.out_dir) / name;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CliError(NKS_RESOURCE, "cannot write '" + path.string() + "'");
  f << content;
  std::cout << "wrote " << path.string() << "\n";
}

int base_p(const Section& e) {
  const long p = e.integer("p", 4);
  if (p < 2) e.fail("p", "must be at least 2");
  return static_cast<int>(p);
}

std::vector<std::size_t> sizes(const Section& e, const std::string& key, const std::vector<long>& fallback) {
  std::vector<std::size_t> out;
  for (long v : e.int_list(key, fallback)) {
    if (v <= 0) e.fail(key, "sizes must be positive");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<const Section*> archs_of(const Run& run) {
  auto a = run.cfg.archs();
  if (a.empty()) throw CliError(NKS_CONFIG, run.cfg.source + ": no [arch NAME] sections");
  return a;
}

// ---- indices ---------------------------------------------------------------

int cmd_indices(const Run& run) {
  const Section& e = run.cfg.experiment();
  const int p = base_p(e);
  const auto modes = mode_list(e);
  const long max_degree = e.integer("sequence_max_degree", 0);
  std::string csv = "arch,mode_id,degree,S,F,L\n";
  std::vector<std::pair<std::string, ArchPtr>> built;
  for (const Section* s : archs_of(run)) built.emplace_back(s->name, build_arch(run, *s, p));
  for (const auto& id : modes) {
    int degree = 0;
    check(nks_mode_degree(id.c_str(), &degree), "mode " + id);
    for (const auto& [name, a] : built) {
      const Triple t = triple(a.get(), mode_index(id, p, a.get()));
      csv += name + "," + id + "," + std::to_string(degree) + "," + t.S + "," + t.F + "," + t.L + "\n";
    }
  }
  write_file(run, "indices.csv", csv);
  if (max_degree > 0) {
    for (const auto& [name, a] : built) {
      char* seq = nullptr;
      const std::string cap = e.str("sequence_max_L", "");
      check(nks_learning_sequence(a.get(), static_cast<int>(max_degree), cap.empty() ? nullptr : cap.c_str(), &seq),
            "learning sequence of " + name);
      write_file(run, "learning_sequence_" + name + ".csv", take(seq));
    }
  }
  return 0;
}

// ---- eigvals ---------------------------------------------------------------

double slope_fit(const std::vector<double>& x, const std::vector<double>& y) {
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

int cmd_eigvals(const Run& run) {
  const Section& e = run.cfg.experiment();
  const auto modes = mode_list(e);
  const int kind = parse_kind(e);
  const auto ps = e.int_list("p_sweep", {2, 3, 4, 5});
  for (long p : ps)
    if (p < 2) e.fail("p_sweep", "patch sizes must be at least 2");
  const std::string method = e.str("method", "jet");
  std::vector<std::pair<std::string, int>> methods;
  if (method == "jet" || method == "both") methods.emplace_back("jet", NKS_METHOD_JET);
  if (method == "monte_carlo" || method == "both") methods.emplace_back("monte_carlo", NKS_METHOD_MONTE_CARLO);
  if (methods.empty()) e.fail("method", "expected jet, monte_carlo or both");
  const long samples = e.integer("samples", 200000);
  if (samples < 2) e.fail("samples", "need at least 2 samples");
  const std::uint64_t base_seed = run.seeds.front();

  std::string csv = "arch,kernel_kind,mode_id,p,d,method,eigenvalue,std_error,L\n";
  std::string slopes = "arch,kernel_kind,mode_id,method,L,slope,target\n";
  std::uint64_t stream = 0;
  for (const Section* s : archs_of(run)) {
    if (s->str("family", "") == "text" || s->str("family", "") == "dcnn")
      s->fail("family", "eigvals sweeps p and needs a family builder");
    std::map<long, ArchPtr> by_p;
    for (long p : ps) by_p[p] = build_arch(run, *s, static_cast<int>(p));
    Chart chart;
    chart.title = "eigenvalues, " + s->name + " (" + kind_name(kind) + ")";
    chart.x_label = "d";
    chart.y_label = "eigenvalue";
    chart.log_x = chart.log_y = true;
    for (const auto& id : modes) {
      for (const auto& [mname, mcode] : methods) {
        std::vector<double> lx, ly;
        std::string L = "inf";
        bool finite = true;
        Series ser;
        for (long p : ps) {
          const nks_arch* a = by_p[p].get();
          ++stream;
          ModeIndex mi;
          try {
            mi = mode_index(id, static_cast<int>(p), a);
          } catch (const CliError& err) {
            if (err.code != NKS_CONFIG) throw;
            continue;  // mode undefined at this p
          }
          const Triple t = triple(a, mi);
          L = t.L;
          finite = t.finite;
          double value = 0.0, se = 0.0;
          if (t.finite)
            check(nks_eigenvalue(a, kind, mi.nodes.data(), mi.degrees.data(), mi.nodes.size(), mcode,
                                 static_cast<std::size_t>(samples), nkspec::derive_seed(base_seed, 1000 + stream),
                                 &value, &se),
                  "eigenvalue of " + id);
          const double d = std::pow(static_cast<double>(p), 4);
          csv += s->name + "," + kind_name(kind) + "," + id + "," + std::to_string(p) + "," +
                 std::to_string(static_cast<long>(d)) + "," + mname + "," + fmt(value) + "," + fmt(se) + "," + t.L +
                 "\n";
          if (value > 0.0) {
            lx.push_back(std::log(d));
            ly.push_back(std::log(value));
            ser.x.push_back(d);
            ser.y.push_back(value);
          }
        }
        std::string slope = "n/a", target = "n/a";
        if (finite && lx.size() >= 2) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.6f", slope_fit(lx, ly));
          slope = buf;
          target = "-" + L;
        }
        slopes += s->name + "," + kind_name(kind) + "," + id + "," + mname + "," + L + "," + slope + "," + target + "\n";
        ser.label = id + " " + mname + " L=" + L;
        if (!ser.x.empty()) chart.series.push_back(std::move(ser));
      }
    }
    write_file(run, "eigvals_" + s->name + ".svg", render_svg(chart));
  }
  write_file(run, "eigvals.csv", csv);
  write_file(run, "eigval_slopes.csv", slopes);
  return 0;
}

// ---- regress / gap-compare -------------------------------------------------

nks_curve_spec curve_spec(const Run& run, const Section& e, const std::vector<std::size_t>& m,
                          const std::string& modes_csv) {
  nks_curve_spec c;
  nks_curve_spec_init(&c);
  c.kind = parse_kind(e);
  c.p = base_p(e);
  c.m_schedule = m.data();
  c.m_count = m.size();
  c.m_test = static_cast<std::size_t>(e.integer("m_test", 4000));
  c.m_normalize = static_cast<std::size_t>(e.integer("m_normalize", 20000));
  c.seeds = run.seeds.data();
  c.seed_count = run.seeds.size();
  c.mode_ids = modes_csv.c_str();
  const std::string coef = e.str("coefficients", "random");
  if (coef != "random" && coef != "constant") e.fail("coefficients", "expected random or constant");
  c.constant_coefficients = coef == "constant";
  c.project = e.boolean("project", true) ? 1 : 0;
  c.timing = run.opt.timing ? 1 : 0;
  c.threads = run.opt.threads;
  c.mem_cap = run.mem_cap;
  c.jitter_scale = e.real("jitter_scale", 1e-8);
  return c;
}

std::vector<nks_curve_row> rows_of(const nks_table* t) {
  std::size_t n = 0;
  check(nks_table_size(t, &n), "table");
  std::vector<nks_curve_row> rows(n);
  for (std::size_t i = 0; i < n; ++i) check(nks_table_row(t, i, &rows[i]), "table");
  return rows;
}

struct Stat {
  double mean = 0, sd = 0;
  int n = 0;
};

// (arch, readout, mode, m) -> statistics of the normalized residual.
using StatKey = std::tuple<std::string, std::string, std::string, std::size_t>;

std::map<StatKey, Stat> stats_of(const std::vector<nks_curve_row>& rows) {
  std::map<StatKey, std::vector<double>> v;
  for (const auto& r : rows) v[{r.arch, r.readout, r.mode_id, r.m_train}].push_back(r.normalized_residual);
  std::map<StatKey, Stat> out;
  for (const auto& [k, xs] : v) {
    Stat s;
    s.n = static_cast<int>(xs.size());
    for (double x : xs) s.mean += x;
    s.mean /= s.n;
    for (double x : xs) s.sd += (x - s.mean) * (x - s.mean);
    s.sd = s.n > 1 ? std::sqrt(s.sd / (s.n - 1)) : 0.0;
    out[k] = s;
  }
  return out;
}

std::string modes_csv_of(const std::vector<std::string>& modes) {
  std::string s;
  for (const auto& m : modes) s += (s.empty() ? "" : ",") + m;
  return s;
}

std::map<std::string, std::string> l_index_of(const std::vector<nks_curve_row>& rows, const std::string& arch) {
  std::map<std::string, std::string> L;
  for (const auto& r : rows)
    if (r.arch == arch) L[r.mode_id] = r.L_index;
  return L;
}

int cmd_regress(const Run& run) {
  const Section& e = run.cfg.experiment();
  const auto modes = mode_list(e);
  const std::string modes_csv = modes_csv_of(modes);
  const auto m = sizes(e, "m", {81, 243, 729});
  const int p = base_p(e);
  std::string csv;
  std::vector<std::vector<nks_curve_row>> all;
  std::vector<TablePtr> tables;
  for (const Section* s : archs_of(run)) {
    const ArchPtr a = build_arch(run, *s, p);
    nks_curve_spec c = curve_spec(run, e, m, modes_csv);
    const std::string run_id = e.str("run_id", "regress");
    c.run_id = run_id.c_str();
    c.arch_name = s->name.c_str();
    nks_table* t = nullptr;
    check(nks_learning_curve(a.get(), &c, &t), "learning curve of " + s->name);
    tables.emplace_back(t);
    char* text = nullptr;
    check(nks_table_csv(t, &text), "csv");
    std::string body = take(text);
    if (csv.empty()) {
      csv = body;
    } else {
      csv += body.substr(body.find('\n') + 1);
    }
    all.push_back(rows_of(t));
  }
  write_file(run, "curves.csv", csv);

  std::string summary = "arch,readout,mode_id,L_index,m_train,mean,sd,n\n";
  std::map<std::string, Chart> per_mode;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& rows = all[i];
    if (rows.empty()) continue;
    const std::string arch = rows.front().arch;
    const auto L = l_index_of(rows, arch);
    const auto st = stats_of(rows);
    Chart chart;
    chart.title = "normalized residual per mode, " + arch;
    chart.x_label = "training set size m";
    chart.y_label = "normalized residual";
    chart.log_x = true;
    for (const auto& id : modes) {
      Series ser;
      ser.label = id + " (L=" + L.at(id) + ")";
      for (std::size_t mm : m) {
        const auto it = st.find({arch, rows.front().readout, id, mm});
        if (it == st.end()) continue;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s,%s,%s,%s,%zu,%.12e,%.12e,%d\n", arch.c_str(), rows.front().readout,
                      id.c_str(), L.at(id).c_str(), mm, it->second.mean, it->second.sd, it->second.n);
        summary += buf;
        ser.x.push_back(static_cast<double>(mm));
        ser.y.push_back(it->second.mean);
      }
      Chart& pm = per_mode[id];
      pm.title = "normalized residual of " + id;
      pm.x_label = "training set size m";
      pm.y_label = "normalized residual";
      pm.log_x = true;
      Series across = ser;
      across.label = arch + " (L=" + L.at(id) + ")";
      pm.series.push_back(std::move(across));
      chart.series.push_back(std::move(ser));
    }
    write_file(run, "regress_" + arch + ".svg", render_svg(chart));
  }
  write_file(run, "curve_summary.csv", summary);
  for (const auto& [id, chart] : per_mode) write_file(run, "regress_mode_" + id + ".svg", render_svg(chart));
  return 0;
}

int cmd_gap_compare(const Run& run) {
  const Section& e = run.cfg.experiment();
  const auto modes = mode_list(e);
  const std::string modes_csv = modes_csv_of(modes);
  const auto m = sizes(e, "m", {81, 324});
  const int p = base_p(e);
  const Section* flat = nullptr;
  const Section* gap = nullptr;
  const auto pair = e.list("gap_compare", {});
  for (const Section* s : archs_of(run)) {
    if (!pair.empty()) {
      if (pair.size() != 2) e.fail("gap_compare", "expected 'FLATTEN_ARCH, GAP_ARCH'");
      if (s->name == pair[0]) flat = s;
      if (s->name == pair[1]) gap = s;
      continue;
    }
    if (parse_readout(*s) == NKS_GAP) {
      if (!gap) gap = s;
    } else if (!flat) {
      flat = s;
    }
  }
  if (!flat || !gap) throw CliError(NKS_CONFIG, run.cfg.source + ": gap-compare needs a flatten and a gap architecture");
  if (parse_readout(*gap) != NKS_GAP) gap->fail("readout", "the second gap_compare architecture must use readout = gap");
  if (e.str("coefficients", "constant") != "constant")
    e.fail("coefficients", "gap-compare needs translation-symmetric targets (coefficients = constant)");

  const ArchPtr fa = build_arch(run, *flat, p);
  const ArchPtr ga = build_arch(run, *gap, p);
  nks_curve_spec c = curve_spec(run, e, m, modes_csv);
  c.constant_coefficients = 1;
  const std::string run_id = e.str("run_id", "gap_compare");
  c.run_id = run_id.c_str();
  c.arch_name = flat->name.c_str();
  nks_table* t = nullptr;
  check(nks_gap_vs_flatten(fa.get(), ga.get(), gap->name.c_str(), &c, &t), "gap comparison");
  const TablePtr table(t);
  char* text = nullptr;
  check(nks_table_csv(t, &text), "csv");
  write_file(run, "gap_compare.csv", take(text));

  const auto rows = rows_of(t);
  const auto st = stats_of(rows);
  const auto L = l_index_of(rows, flat->name);
  std::string summary = "mode_id,L_index,m_train,flatten_mean,flatten_sd,gap_mean,gap_sd,difference,welch_se,z\n";
  Chart chart;
  chart.title = "GAP vs flatten: " + flat->name + " / " + gap->name;
  chart.x_label = "training set size m";
  chart.y_label = "normalized residual";
  chart.log_x = true;
  for (const auto& id : modes) {
    Series sf, sg;
    sf.label = id + " flatten (L=" + L.at(id) + ")";
    sg.label = id + " gap";
    for (std::size_t mm : m) {
      const auto a = st.find({flat->name, "flatten", id, mm});
      const auto b = st.find({gap->name, "gap", id, mm});
      if (a == st.end() || b == st.end()) continue;
      const double diff = a->second.mean - b->second.mean;
      const double se = std::sqrt(a->second.sd * a->second.sd / a->second.n + b->second.sd * b->second.sd / b->second.n);
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s,%s,%zu,%.12e,%.12e,%.12e,%.12e,%.12e,%.12e,%s\n", id.c_str(),
                    L.at(id).c_str(), mm, a->second.mean, a->second.sd, b->second.mean, b->second.sd, diff, se,
                    se > 0 ? fmt(diff / se).c_str() : "n/a");
      summary += buf;
      sf.x.push_back(static_cast<double>(mm));
      sf.y.push_back(a->second.mean);
      sg.x.push_back(static_cast<double>(mm));
      sg.y.push_back(b->second.mean);
    }
    chart.series.push_back(std::move(sf));
    chart.series.push_back(std::move(sg));
  }
  write_file(run, "gap_summary.csv", summary);
  write_file(run, "gap_compare.svg", render_svg(chart));
  return 0;
}

// ---- validate --------------------------------------------------------------

int cmd_validate(const Run& run) {
  const Section& e = run.cfg.experiment();
  const int p = base_p(e);
  const double c = e.real("validate_c", 0.5), C = e.real("validate_C", 2.0);
  std::string csv = "arch,status,rule\n";
  bool all = true;
  for (const Section* s : archs_of(run)) {
    const ArchPtr a = build_arch(run, *s, p);
    char* desc = nullptr;
    check(nks_arch_describe(a.get(), &desc), "describe");
    std::cout << s->name << ": " << take(desc) << "\n";
    char* report = nullptr;
    int passed = 0;
    check(nks_arch_validate(a.get(), c, C, &report, &passed), "validate " + s->name);
    std::istringstream in(take(report));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto sp = line.find("  ");
      csv += s->name + "," + (line.rfind("pass", 0) == 0 ? "pass" : "fail") + "," +
             csv_quote(trim(sp == std::string::npos ? line : line.substr(sp))) + "\n";
      std::cout << "  " << line << "\n";
    }
    all = all && passed;
  }
  write_file(run, "validation.csv", csv);
  return all ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eigenspace structure of infinite-width network kernels"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "Configuration file (built-in defaults when omitted)");
    sub->add_option("--out", opt.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--seeds", opt.seeds, "Use seeds 1..N instead of the configured list")->check(CLI::PositiveNumber);
    sub->add_option("--threads", opt.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--mem-cap", opt.mem_cap, "Memory cap in bytes (suffixes K, M, G)");
    sub->add_flag("--timing", opt.timing, "Record wall-clock seconds (outputs stop being reproducible)");
  };
  std::map<CLI::App*, int (*)(const Run&)> commands;
  commands[app.add_subcommand("indices", "Spatial, frequency and learning indices of the catalogue modes")] = cmd_indices;
  commands[app.add_subcommand("eigvals", "Eigenvalue estimates and log-log slopes over a sweep of p")] = cmd_eigvals;
  commands[app.add_subcommand("regress", "Kernel regression learning curves")] = cmd_regress;
  commands[app.add_subcommand("gap-compare", "Paired GAP and flatten learning curves")] = cmd_gap_compare;
  commands[app.add_subcommand("validate", "Check architectures against the structural assumptions")] = cmd_validate;
  for (auto& [sub, fn] : commands) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    Run run;
    run.opt = opt;
    run.cfg = opt.config_path.empty() ? parse_config(default_config_text(), "<builtin>") : load_config(opt.config_path);
    const Section& e = run.cfg.experiment();
    if (opt.seeds > 0) {
      for (int s = 1; s <= opt.seeds; ++s) run.seeds.push_back(static_cast<std::uint64_t>(s));
    } else {
      for (long s : e.int_list("seeds", {1, 2, 3})) {
        if (s < 0) e.fail("seeds", "seeds must be non-negative");
        run.seeds.push_back(static_cast<std::uint64_t>(s));
      }
    }
    const std::string cap = !opt.mem_cap.empty() ? opt.mem_cap : e.str("mem_cap", "4G");
    run.mem_cap = parse_bytes(cap);
    for (auto& [sub, fn] : commands)
      if (sub->parsed()) return fn(run);
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
