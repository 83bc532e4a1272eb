#include "nkspec/eigenfunctions.hpp"

#include "nkspec/error.hpp"
#include "nkspec/harmonics.hpp"
#include "nkspec/parallel.hpp"
#include "nkspec/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

namespace nkspec {

namespace {

constexpr Offset O(int a, int b, int c, int d) { return {a, b, c, d}; }

int wrap(int v, int p) { return ((v % p) + p) % p; }

int flat_index(const Offset& k, const Offset& o, int p) {
  int f = 0;
  for (int c = 0; c < 4; ++c) f = f * p + wrap(k[c] + o[c], p);
  return f;
}

using PatchKey = std::array<int, 3>;

PatchKey patch_of(const Offset& o, int p) { return {wrap(o[0], p), wrap(o[1], p), wrap(o[2], p)}; }

std::string offset_string(const Offset& o) {
  std::ostringstream s;
  s << "(" << o[0] << "," << o[1] << "," << o[2] << "," << o[3] << ")";
  return s.str();
}

std::string monomial_string(const Monomial& m) {
  std::ostringstream s;
  s << m.coef;
  for (const auto& f : m.factors) {
    s << "*x" << offset_string(f.at);
    if (f.power != 1) s << "^" << f.power;
  }
  return s.str();
}

// Per-patch degree pattern of a monomial, keyed by wrapped patch offset.
std::map<PatchKey, int> degree_pattern(const std::vector<PixelPower>& factors, int p) {
  std::map<PatchKey, int> out;
  for (const auto& f : factors) out[patch_of(f.at, p)] += f.power;
  return out;
}

void check_distinct(const std::string& id, const std::vector<Monomial>& poly, int p) {
  for (const auto& m : poly) {
    std::vector<int> seen;
    for (const auto& f : m.factors) seen.push_back(flat_index(O(0, 0, 0, 0), f.at, p));
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
      throw ConfigError(id + " needs distinct pixels in " + monomial_string(m) + "; p = " + std::to_string(p) +
                        " is too small");
  }
}

}  // namespace

const std::vector<std::string>& appendix_ids() {
  static const std::vector<std::string> ids{"Y1", "Y2", "Y3", "Y4", "Y5star", "Y5", "Y6", "Y7"};
  return ids;
}

int appendix_degree(const std::string& id) {
  static const std::map<std::string, int> deg{{"Y1", 1}, {"Y2", 2}, {"Y3", 2}, {"Y4", 3},
                                              {"Y5star", 5}, {"Y5", 2}, {"Y6", 4}, {"Y7", 4}};
  auto it = deg.find(id);
  if (it == deg.end()) {
    std::string valid;
    for (const auto& s : appendix_ids()) valid += (valid.empty() ? "" : ", ") + s;
    throw ConfigError("unknown eigenfunction id '" + id + "' (valid: " + valid + ")");
  }
  return it->second;
}

std::vector<Monomial> appendix_template(const std::string& id) {
  appendix_degree(id);
  const Offset k0 = O(0, 0, 0, 0), e1 = O(1, 0, 0, 0), e2 = O(0, 1, 0, 0), e3 = O(0, 0, 1, 0),
               e4 = O(0, 0, 0, 1);
  auto add = [](Offset a, Offset b) { return O(a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]); };
  auto neg = [](Offset a) { return O(-a[0], -a[1], -a[2], -a[3]); };
  if (id == "Y1") return {{1.0, {{k0, 1}}}};
  if (id == "Y2") return {{1.0, {{k0, 1}, {e4, 1}}}};
  if (id == "Y3") return {{1.0, {{e3, 1}, {e4, 1}}}};
  if (id == "Y4") return {{1.0, {{add(e3, e4), 1}, {e4, 1}, {k0, 1}}}};
  if (id == "Y5star") {
    // x_k x_{k+e4} x_{k+2e4} (x_k^2 - x_{k+e4}^2)
    return {{1.0, {{k0, 3}, {e4, 1}, {add(e4, e4), 1}}}, {-1.0, {{k0, 1}, {e4, 3}, {add(e4, e4), 1}}}};
  }
  if (id == "Y5") return {{1.0, {{k0, 1}, {e1, 1}}}};
  if (id == "Y6") {
    // x_k x_{k+e3} (3 x_{k-e3}^2 - x_k^2)
    return {{3.0, {{k0, 1}, {e3, 1}, {neg(e3), 2}}}, {-1.0, {{k0, 3}, {e3, 1}}}};
  }
  // Y7: x_{k-e3+e4} x_{k+e2} (3 x_k^2 - x_{k-e3+e4}^2)
  const Offset a = add(neg(e3), e4);
  return {{3.0, {{a, 1}, {e2, 1}, {k0, 2}}}, {-1.0, {{a, 3}, {e2, 1}}}};
}

std::vector<std::string> non_harmonic_factors(const std::vector<Monomial>& poly, int p) {
  // Group monomials by per-patch degree pattern; each group must be harmonic
  // in every patch separately.
  using Key = std::vector<std::pair<int, int>>;  // (wrapped flat pixel, power), sorted
  std::map<std::map<PatchKey, int>, std::vector<const Monomial*>> groups;
  for (const auto& m : poly) groups[degree_pattern(m.factors, p)].push_back(&m);
  std::vector<std::string> out;
  for (const auto& [pattern, members] : groups) {
    for (const auto& [patch, deg] : pattern) {
      std::map<Key, double> lap;
      for (const Monomial* m : members) {
        Key base;
        for (const auto& f : m->factors) base.push_back({flat_index(O(0, 0, 0, 0), f.at, p), f.power});
        std::sort(base.begin(), base.end());
        for (std::size_t i = 0; i < base.size(); ++i) {
          const int pix = base[i].first;
          const PatchKey pk{pix / (p * p * p), (pix / (p * p)) % p, (pix / p) % p};
          if (pk != patch || base[i].second < 2) continue;
          Key d = base;
          d[i].second -= 2;
          if (d[i].second == 0) d.erase(d.begin() + static_cast<long>(i));
          lap[d] += m->coef * base[i].second * (base[i].second - 1);
        }
      }
      bool zero = true;
      for (const auto& [k, v] : lap) zero = zero && std::abs(v) < 1e-12;
      if (!zero) {
        std::ostringstream s;
        s << "patch (" << patch[0] << "," << patch[1] << "," << patch[2] << ") of";
        for (const Monomial* m : members) s << " " << monomial_string(*m);
        out.push_back(s.str());
      }
    }
  }
  return out;
}

double zonal_projection_coefficient(int p, int a, int b) {
  if (a < 0 || b < 0) throw ConfigError("negative degree in zonal projection");
  if (b > a || (a - b) % 2 != 0) return 0.0;
  const Quadrature q = gauss_gegenbauer(p, a + b + 2);
  double num = 0.0, mass = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    num += q.weights[i] * std::pow(q.nodes[i], a) * gegenbauer_eval(p, b, q.nodes[i]);
    mass += q.weights[i];
  }
  // E[t^a P_b] / E[P_b^2] with E[P_b^2] = 1/N(p, b); x = sqrt(p) t.
  return std::pow(std::sqrt(static_cast<double>(p)), a) * num / mass * harmonic_count_double(p, b);
}

namespace {

std::vector<ProductTerm> literal_terms(const std::vector<Monomial>& poly) {
  std::vector<ProductTerm> out;
  for (const auto& m : poly) out.push_back({m.coef, m.factors, {}});
  return out;
}

std::vector<ProductTerm> project_terms(const std::string& id, const std::vector<Monomial>& poly,
                                       const std::map<PatchKey, int>& target, int p) {
  std::vector<ProductTerm> out;
  for (const auto& m : poly) {
    std::map<PatchKey, std::vector<PixelPower>> by_patch;
    for (const auto& f : m.factors) by_patch[patch_of(f.at, p)].push_back(f);
    bool drop = false;
    for (const auto& [patch, deg] : target)
      if (!by_patch.count(patch)) drop = true;  // constant has no degree > 0 part
    if (drop) continue;
    ProductTerm t{m.coef, {}, {}};
    for (const auto& [patch, fs] : by_patch) {
      auto it = target.find(patch);
      const int b = it == target.end() ? 0 : it->second;
      int a = 0;
      for (const auto& f : fs) a += f.power;
      if (fs.size() == 1) {
        if (a == b && a == 1) {
          t.factors.push_back(fs[0]);
          continue;
        }
        const double c = zonal_projection_coefficient(p, a, b);
        if (b == 0) t.coef *= c;
        else t.zonals.push_back({fs[0].at, b, c});
        if (c == 0.0) t.coef = 0.0;
        continue;
      }
      if (a != b)
        throw ConfigError(id + ": projecting a multi-coordinate patch factor onto another degree is not supported");
      t.factors.insert(t.factors.end(), fs.begin(), fs.end());
    }
    if (t.coef != 0.0) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

Eigenfunction build_appendix_eigenfunction(const std::string& id, int p, std::uint64_t seed, CoefficientMode mode,
                                           bool project) {
  if (p < 2) throw ConfigError("eigenfunctions need p >= 2");
  const auto poly = appendix_template(id);
  check_distinct(id, poly, p);
  Eigenfunction f;
  f.id = id;
  f.p = p;
  f.seed = seed;
  f.mode = mode;
  f.projected = project;
  f.degree = appendix_degree(id);
  f.pattern = poly[0].factors;
  f.non_harmonic = non_harmonic_factors(poly, p);
  const auto target = degree_pattern(f.pattern, p);
  f.terms = project ? project_terms(id, poly, target, p) : literal_terms(poly);
  const int n = p * p * p * p;
  f.coefficients.assign(n, 1.0);
  if (mode == CoefficientMode::random) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (double& c : f.coefficients) c = normal(rng);
  }
  return f;
}

namespace {

// Sum of c_k * term values, or of their absolute values when `magnitude` is
// set (a scale against which exact cancellation is detected).
double evaluate(const Eigenfunction& f, const double* x, bool magnitude) {
  const int p = f.p;
  const double inv_sqrt_p = 1.0 / std::sqrt(static_cast<double>(p));
  double total = 0.0;
  Offset k{};
  const int n = static_cast<int>(f.coefficients.size());
  for (int idx = 0; idx < n; ++idx) {
    k = {idx / (p * p * p), (idx / (p * p)) % p, (idx / p) % p, idx % p};
    double sum = 0.0;
    for (const auto& t : f.terms) {
      double v = t.coef;
      for (const auto& fa : t.factors) {
        const double xv = x[flat_index(k, fa.at, p)];
        double pw = xv;
        for (int e = 1; e < fa.power; ++e) pw *= xv;
        v *= pw;
      }
      for (const auto& z : t.zonals) v *= z.scale * gegenbauer_eval(p, z.degree, x[flat_index(k, z.at, p)] * inv_sqrt_p);
      sum += magnitude ? std::abs(v) : v;
    }
    total += magnitude ? std::abs(f.coefficients[idx]) * sum : f.coefficients[idx] * sum;
  }
  return f.normalization * total;
}

}  // namespace

double Eigenfunction::eval(const double* x) const { return evaluate(*this, x, false); }

std::vector<double> Eigenfunction::eval_batch(const PointMatrix& X, int threads) const {
  if (X.cols() != static_cast<Eigen::Index>(p) * p * p * p)
    throw ConfigError("points have dimension " + std::to_string(X.cols()) + ", eigenfunction expects p^4");
  std::vector<double> out(static_cast<std::size_t>(X.rows()));
  parallel_for(out.size(), threads, [&](std::size_t i, int) { out[i] = eval(X.row(static_cast<Eigen::Index>(i)).data()); });
  return out;
}

void normalize_empirically(Eigenfunction& f, const PointMatrix& X, int threads) {
  if (X.rows() < 2) throw ConfigError("normalization needs at least two points");
  f.normalization = 1.0;
  auto v = f.eval_batch(X, threads);
  double ss = 0.0;
  for (double y : v) ss += y * y;
  const double ms = ss / static_cast<double>(v.size());
  if (!(ms > 0.0)) throw NumericalError(f.id + " vanishes on the normalization sample");
  double scale = 0.0;
  const Eigen::Index probe = std::min<Eigen::Index>(X.rows(), 64);
  for (Eigen::Index i = 0; i < probe; ++i) scale += evaluate(f, X.row(i).data(), true);
  scale /= static_cast<double>(probe);
  if (std::sqrt(ms) < 1e-8 * scale)
    throw ConfigError(f.id + " cancels to zero with these coefficients at p = " + std::to_string(f.p) +
                      " (its shifted copies sum to the zero polynomial)");
  f.normalization = 1.0 / std::sqrt(ms);
}

std::vector<Eigenfunction> build_appendix_eigenfunctions(int p, std::uint64_t seed, CoefficientMode mode,
                                                         bool project, const PointMatrix& normalizer,
                                                         const std::vector<std::string>& ids) {
  const auto& all = appendix_ids();
  const std::vector<std::string>& pick = ids.empty() ? all : ids;
  std::vector<Eigenfunction> out;
  for (const auto& id : pick) {
    const auto pos = static_cast<std::uint64_t>(std::find(all.begin(), all.end(), id) - all.begin());
    appendix_degree(id);
    out.push_back(build_appendix_eigenfunction(id, p, derive_seed(seed, 100 + pos), mode, project));
    normalize_empirically(out.back(), normalizer);
  }
  return out;
}

MultiIndex pattern_multi_index(const std::vector<PixelPower>& pattern, int p, const ArchDag& dag) {
  if (dag.reference_dim() != p * p * p * p)
    throw ConfigError("architecture dimension " + std::to_string(dag.reference_dim()) + " is not p^4 for p = " +
                      std::to_string(p));
  MultiIndex r;
  const auto& ins = dag.inputs();
  for (const auto& f : pattern) {
    const int pix = flat_index(O(0, 0, 0, 0), f.at, p);
    auto it = std::upper_bound(ins.begin(), ins.end(), pix,
                               [&](int v, int id) { return v < dag.node(id).input_offset; });
    const int node = *(it - 1);
    r[node] += f.power;
  }
  return r;
}

MultiIndex pattern_multi_index(const Eigenfunction& f, const ArchDag& dag) {
  return pattern_multi_index(f.pattern, f.p, dag);
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json pixel_json(const PixelPower& f) {
  return nlohmann::json::array({f.at[0], f.at[1], f.at[2], f.at[3], f.power});
}

PixelPower pixel_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 5) throw ConfigError("pixel entries must be [o1, o2, o3, o4, power]");
  return {{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()}, j[4].get<int>()};
}

}  // namespace

std::string to_json(const Eigenfunction& f) {
  nlohmann::ordered_json j;
  j["id"] = f.id;
  j["p"] = f.p;
  j["seed"] = f.seed;
  j["coefficient_mode"] = f.mode == CoefficientMode::random ? "random" : "constant";
  j["projected"] = f.projected;
  j["degree"] = f.degree;
  auto pat = nlohmann::json::array();
  for (const auto& x : f.pattern) pat.push_back(pixel_json(x));
  j["pattern"] = pat;
  auto terms = nlohmann::ordered_json::array();
  for (const auto& t : f.terms) {
    nlohmann::ordered_json jt;
    jt["coef"] = t.coef;
    auto fs = nlohmann::json::array();
    for (const auto& x : t.factors) fs.push_back(pixel_json(x));
    jt["factors"] = fs;
    auto zs = nlohmann::json::array();
    for (const auto& z : t.zonals) zs.push_back({z.at[0], z.at[1], z.at[2], z.at[3], z.degree, z.scale});
    jt["zonals"] = zs;
    terms.push_back(jt);
  }
  j["terms"] = terms;
  j["coefficients"] = f.coefficients;
  j["normalization"] = f.normalization;
  j["non_harmonic"] = f.non_harmonic;
  return j.dump(1);
}

Eigenfunction eigenfunction_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    Eigenfunction f;
    f.id = j.at("id").get<std::string>();
    f.p = j.at("p").get<int>();
    f.seed = j.at("seed").get<std::uint64_t>();
    const auto mode = j.at("coefficient_mode").get<std::string>();
    if (mode != "random" && mode != "constant") throw ConfigError("coefficient_mode must be random or constant");
    f.mode = mode == "random" ? CoefficientMode::random : CoefficientMode::constant;
    f.projected = j.at("projected").get<bool>();
    f.degree = j.at("degree").get<int>();
    for (const auto& x : j.at("pattern")) f.pattern.push_back(pixel_from(x));
    for (const auto& jt : j.at("terms")) {
      ProductTerm t;
      t.coef = jt.at("coef").get<double>();
      for (const auto& x : jt.at("factors")) t.factors.push_back(pixel_from(x));
      for (const auto& z : jt.at("zonals")) {
        if (!z.is_array() || z.size() != 6) throw ConfigError("zonal entries must be [o1, o2, o3, o4, degree, scale]");
        t.zonals.push_back({{z[0].get<int>(), z[1].get<int>(), z[2].get<int>(), z[3].get<int>()}, z[4].get<int>(),
                            z[5].get<double>()});
      }
      f.terms.push_back(std::move(t));
    }
    f.coefficients = j.at("coefficients").get<std::vector<double>>();
    f.normalization = j.at("normalization").get<double>();
    f.non_harmonic = j.value("non_harmonic", std::vector<std::string>{});
    if (f.p < 2 || f.coefficients.size() != static_cast<std::size_t>(f.p) * f.p * f.p * f.p)
      throw ConfigError("eigenfunction JSON: coefficient count must be p^4");
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("eigenfunction JSON: ") + e.what());
  }
}

}  // namespace nkspec
