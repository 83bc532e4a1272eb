#include "nkspec/indices.hpp"

#include "nkspec/error.hpp"
#include "nkspec/harmonics.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <tuple>

namespace nkspec {

namespace {

// Node weights alpha_u * den as integers over a common denominator.
struct IntWeights {
  BigInt den = 1;
  std::vector<long long> w;
};

IntWeights integer_weights(const ArchDag& dag) {
  IntWeights iw;
  for (const auto& n : dag.nodes()) {
    BigInt d = boost::multiprecision::denominator(n.alpha);
    iw.den = iw.den / boost::multiprecision::gcd(iw.den, d) * d;
  }
  for (const auto& n : dag.nodes()) {
    if (n.alpha < 0) throw ConfigError("negative exponent on node " + std::to_string(n.id));
    Rational scaled = n.alpha * iw.den;
    iw.w.push_back(boost::multiprecision::numerator(scaled).convert_to<long long>());
  }
  return iw;
}

long long tree_weight(const ArchDag& dag, const IntWeights& iw, const std::vector<int>& set) {
  std::vector<int> uniq(set);
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.size() <= 1) return 0;
  // Terminals below each node; nodes strictly below the meeting point carry
  // their edge to the parent.
  std::map<int, int> below;
  for (int v : uniq) {
    int u = v;
    while (true) {
      ++below[u];
      const auto& ps = dag.node(u).parents;
      if (ps.empty()) break;
      u = ps[0];
    }
  }
  const int k = static_cast<int>(uniq.size());
  long long total = 0;
  for (const auto& [u, c] : below)
    if (c < k) total += iw.w[dag.node(u).parents[0]];
  return total;
}

long long dreyfus_wagner(const ArchDag& dag, const IntWeights& iw, const std::vector<int>& set) {
  std::vector<int> term(set);
  std::sort(term.begin(), term.end());
  term.erase(std::unique(term.begin(), term.end()), term.end());
  const int k = static_cast<int>(term.size());
  if (k <= 1) return 0;
  if (k > 8) throw ConfigError("Steiner search supports at most 8 terminals, got " + std::to_string(k));
  const int n = static_cast<int>(dag.size());
  std::vector<std::vector<std::pair<int, long long>>> adj(n);
  for (const auto& u : dag.nodes())
    for (int c : u.children) {
      adj[u.id].push_back({c, iw.w[u.id]});
      adj[c].push_back({u.id, iw.w[u.id]});
    }
  constexpr long long INF = std::numeric_limits<long long>::max() / 4;
  const int full = (1 << k) - 1;
  std::vector<std::vector<long long>> dp(full + 1, std::vector<long long>(n, INF));
  for (int i = 0; i < k; ++i) dp[1 << i][term[i]] = 0;
  using Item = std::pair<long long, int>;
  for (int mask = 1; mask <= full; ++mask) {
    auto& cur = dp[mask];
    for (int sub = (mask - 1) & mask; sub > 0; sub = (sub - 1) & mask) {
      if (sub < (mask ^ sub)) continue;
      const auto& a = dp[sub];
      const auto& b = dp[mask ^ sub];
      for (int v = 0; v < n; ++v)
        if (a[v] < INF && b[v] < INF) cur[v] = std::min(cur[v], a[v] + b[v]);
    }
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    for (int v = 0; v < n; ++v)
      if (cur[v] < INF) pq.push({cur[v], v});
    while (!pq.empty()) {
      auto [dv, v] = pq.top();
      pq.pop();
      if (dv > cur[v]) continue;
      for (auto [x, wt] : adj[v])
        if (dv + wt < cur[x]) {
          cur[x] = dv + wt;
          pq.push({cur[x], x});
        }
    }
  }
  return dp[full][term[0]];
}

std::vector<int> support_of(const ArchDag& dag, const MultiIndex& r) {
  std::vector<int> s;
  for (const auto& [v, deg] : r) {
    if (deg < 0) throw ConfigError("negative degree in multi-index");
    if (deg == 0) continue;
    if (dag.node(v).kind != NodeKind::input)
      throw ConfigError("multi-index refers to non-input node " + std::to_string(v));
    s.push_back(v);
  }
  return s;
}

int total_degree(const MultiIndex& r) {
  int n = 0;
  for (const auto& [v, deg] : r) n += deg;
  return n;
}

bool support_learnable(const ArchDag& dag, const std::vector<int>& support, int degree) {
  if (degree == 1) return true;
  for (int u : common_ancestors(dag, support))
    if (dag.node(u).activation.grants_interactions()) return true;
  return false;
}

Rational scaled(long long v, const BigInt& den) { return Rational(BigInt(v), den); }

}  // namespace

Rational steiner_weight(const ArchDag& dag, const std::vector<int>& node_set) {
  for (int v : node_set) dag.node(v);
  IntWeights iw = integer_weights(dag);
  return scaled(dreyfus_wagner(dag, iw, node_set), iw.den);
}

Rational spatial_index(const ArchDag& dag, const std::vector<int>& node_set) {
  for (int v : node_set) dag.node(v);
  IntWeights iw = integer_weights(dag);
  if (dag.is_tree()) return scaled(tree_weight(dag, iw, node_set), iw.den);
  return scaled(dreyfus_wagner(dag, iw, node_set), iw.den);
}

bool learnable(const ArchDag& dag, const MultiIndex& r) {
  auto s = support_of(dag, r);
  if (s.empty()) throw ConfigError("learnability needs a nonzero multi-index");
  return support_learnable(dag, s, total_degree(r));
}

std::string IndexTriple::to_string() const {
  if (!finite) return "inf/inf/inf";
  return nkspec::to_string(S) + "/" + nkspec::to_string(F) + "/" + nkspec::to_string(L);
}

IndexTriple index_triple(const ArchDag& dag, const MultiIndex& r) {
  auto s = support_of(dag, r);
  IndexTriple t;
  if (s.empty() || !support_learnable(dag, s, total_degree(r))) return t;
  t.finite = true;
  auto with_out = s;
  with_out.push_back(dag.output());
  t.S = spatial_index(dag, with_out);
  t.F = 0;
  for (const auto& [v, deg] : r) t.F += deg * dag.node(v).alpha;
  t.L = t.S + t.F;
  return t;
}

// ---------------------------------------------------------------------------
// Class enumeration

namespace {

// Coefficients of (sum_{r>=1} N(d, r) z^r)^s up to degree n_max.
std::vector<BigInt> harmonic_power(int d, int s, int n_max) {
  std::vector<BigInt> g(n_max + 1, 0), acc(n_max + 1, 0);
  for (int r = 1; r <= n_max; ++r) g[r] = harmonic_count(d, r);
  acc[0] = 1;
  for (int i = 0; i < s; ++i) {
    std::vector<BigInt> next(n_max + 1, 0);
    for (int a = 0; a <= n_max; ++a) {
      if (acc[a] == 0) continue;
      for (int b = 1; a + b <= n_max; ++b) next[a + b] += acc[a] * g[b];
    }
    acc = std::move(next);
  }
  return acc;
}

BigInt binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  BigInt b = 1;
  for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
  return b;
}

MultiIndex spread(const std::vector<int>& support, int degree) {
  MultiIndex r;
  for (std::size_t i = 0; i < support.size(); ++i)
    r[support[i]] = i == 0 ? degree - static_cast<int>(support.size()) + 1 : 1;
  return r;
}

struct ClassKey {
  bool learnable;
  Rational S, F;
  int s, n;
  bool operator<(const ClassKey& o) const {
    return std::tie(learnable, S, F, s, n) < std::tie(o.learnable, o.S, o.F, o.s, o.n);
  }
};

void add_class(std::map<ClassKey, IndexClass>& out, const ClassKey& key, const BigInt& patterns,
               const BigInt& dimension, const MultiIndex& rep) {
  auto it = out.find(key);
  if (it == out.end()) {
    IndexClass c;
    c.learnable = key.learnable;
    c.S = key.S;
    c.F = key.F;
    c.L = key.S + key.F;
    c.support_size = key.s;
    c.degree = key.n;
    c.patterns = patterns;
    c.dimension = dimension;
    c.representative = rep;
    out.emplace(key, std::move(c));
    return;
  }
  it->second.patterns += patterns;
  it->second.dimension += dimension;
  if (rep < it->second.representative) it->second.representative = rep;
}

// Tree DP over supports.  A state records the support size below a node, the
// integer spatial weight accumulated so far, and whether the meeting point of
// the support has an interaction-granting ancestor.
struct DpKey {
  int j;
  long long S;
  bool flag;
  bool operator<(const DpKey& o) const { return std::tie(j, S, flag) < std::tie(o.j, o.S, o.flag); }
};

struct DpVal {
  BigInt count;
  std::vector<int> rep;
};

using DpTable = std::map<DpKey, DpVal>;

class SupportDp {
 public:
  SupportDp(const ArchDag& dag, const IntWeights& iw, int max_support, int pens_used, int scale)
      : dag_(dag), iw_(iw), cap_(max_support), pens_used_(pens_used), scale_(scale) {
    grants_above_.assign(dag.size(), 0);
    // Parents come after children in topo order, so walk it backwards.
    const auto& topo = dag.topo_order();
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
      const auto& n = dag.node(*it);
      bool g = n.activation.grants_interactions();
      if (!n.parents.empty()) g = g || grants_above_[n.parents[0]];
      grants_above_[*it] = g;
    }
  }

  DpTable run() { return solve(dag_.output()); }

 private:
  struct Partial {
    int j;
    long long S;
    int contributors;
    bool flag;
    bool operator<(const Partial& o) const {
      return std::tie(j, S, contributors, flag) < std::tie(o.j, o.S, o.contributors, o.flag);
    }
  };

  DpTable solve(int u) {
    const auto& n = dag_.node(u);
    DpTable out;
    if (n.kind == NodeKind::input) {
      out[{1, 0, grants_above_[u] != 0}] = {1, {u}};
      return out;
    }
    const bool is_gap = u == dag_.gap_node();
    std::vector<int> kids = n.children;
    if (is_gap) kids.resize(pens_used_);
    const int cap = is_gap ? cap_ / scale_ : cap_;

    std::map<Partial, DpVal> acc;
    acc[{0, 0, 0, false}] = {1, {}};
    for (int c : kids) {
      DpTable child = solve(c);
      std::map<Partial, DpVal> next = acc;  // child contributes nothing
      for (const auto& [pk, pv] : acc) {
        for (const auto& [ck, cv] : child) {
          const int j = pk.j + ck.j;
          if (j > cap) continue;
          Partial key{j, pk.S + ck.S + iw_.w[u], std::min(pk.contributors + 1, 2),
                      pk.contributors == 0 ? ck.flag : false};
          DpVal& slot = next[key];
          const bool fresh = slot.count == 0;
          slot.count += pv.count * cv.count;
          std::vector<int> rep = pv.rep;
          rep.insert(rep.end(), cv.rep.begin(), cv.rep.end());
          std::sort(rep.begin(), rep.end());
          if (fresh || rep < slot.rep) slot.rep = std::move(rep);
        }
      }
      acc = std::move(next);
    }
    for (auto& [pk, pv] : acc) {
      if (pk.j == 0) continue;
      long long S = pk.S;
      bool flag = pk.flag;
      if (pk.contributors >= 2) flag = grants_above_[u] != 0;
      if (is_gap && scale_ > 1) {
        // Replicated over scale pen blocks: the support spans several pens.
        S *= scale_;
        flag = grants_above_[u] != 0;
      }
      DpVal& slot = out[{pk.j, S, flag}];
      const bool fresh = slot.count == 0;
      slot.count += pv.count;
      if (fresh || pv.rep < slot.rep) slot.rep = pv.rep;
    }
    return out;
  }

  const ArchDag& dag_;
  const IntWeights& iw_;
  int cap_;
  int pens_used_;
  int scale_;
  std::vector<char> grants_above_;
};

struct Uniform {
  bool ok = false;
  Rational alpha;
  int dim = 0;
};

Uniform uniform_inputs(const ArchDag& dag) {
  Uniform u;
  const auto& ins = dag.inputs();
  u.alpha = dag.node(ins[0]).alpha;
  u.dim = dag.node(ins[0]).dim;
  u.ok = dag.is_tree();
  for (int v : ins)
    if (dag.node(v).alpha != u.alpha || dag.node(v).dim != u.dim) u.ok = false;
  return u;
}

void check_degree(int max_degree) {
  if (max_degree < 1 || max_degree > 8) throw ConfigError("max_degree must lie in [1, 8]");
}

// Explicit enumeration of supports; used when the DP does not apply.
std::map<ClassKey, IndexClass> enumerate_explicit(const ArchDag& dag, int max_degree) {
  const auto& ins = dag.inputs();
  const int n = static_cast<int>(ins.size());
  double total = 0.0;
  for (int s = 1; s <= std::min(n, max_degree); ++s) total += binomial(n, s).convert_to<double>();
  if (total > kPatternGuard)
    throw ResourceError("enumeration needs " + std::to_string(static_cast<long long>(total)) +
                        " support patterns (guard " + std::to_string(static_cast<long long>(kPatternGuard)) + ")");
  IntWeights iw = integer_weights(dag);
  std::map<ClassKey, IndexClass> out;
  std::vector<int> pick;
  std::vector<int> degs;
  auto compositions = [&](auto&& self, std::size_t i, int left, const std::vector<int>& sup, long long Sint,
                          bool grants) -> void {
    if (i == sup.size()) {
      MultiIndex r;
      Rational F = 0;
      BigInt dim = 1;
      int nd = 0;
      for (std::size_t q = 0; q < sup.size(); ++q) {
        r[sup[q]] = degs[q];
        F += degs[q] * dag.node(sup[q]).alpha;
        dim *= harmonic_count(dag.node(sup[q]).dim, degs[q]);
        nd += degs[q];
      }
      const bool ok = grants || nd == 1;
      ClassKey key{ok, ok ? scaled(Sint, iw.den) : Rational(0), ok ? F : Rational(0), static_cast<int>(sup.size()), nd};
      add_class(out, key, 1, dim, r);
      return;
    }
    const int rest = static_cast<int>(sup.size() - i - 1);
    for (int d = 1; d <= left - rest; ++d) {
      degs[i] = d;
      self(self, i + 1, left - d, sup, Sint, grants);
    }
  };
  auto choose = [&](auto&& self, int start) -> void {
    if (!pick.empty()) {
      std::vector<int> with_out = pick;
      with_out.push_back(dag.output());
      const long long Sint = dag.is_tree() ? tree_weight(dag, iw, with_out) : dreyfus_wagner(dag, iw, with_out);
      bool grants = false;
      for (int u : common_ancestors(dag, pick)) grants = grants || dag.node(u).activation.grants_interactions();
      degs.assign(pick.size(), 0);
      compositions(compositions, 0, max_degree, pick, Sint, grants);
    }
    if (static_cast<int>(pick.size()) == max_degree) return;
    for (int i = start; i < n; ++i) {
      pick.push_back(ins[i]);
      self(self, i + 1);
      pick.pop_back();
    }
  };
  choose(choose, 0);
  return out;
}

// DP-based classes.  pens_used/scale describe the Burnside reduction on GAP
// DAGs (pens_used = w, scale = 1 for the plain count).
std::map<ClassKey, IndexClass> enumerate_dp(const ArchDag& dag, int max_degree, int pens_used, int scale) {
  const Uniform uni = uniform_inputs(dag);
  IntWeights iw = integer_weights(dag);
  SupportDp dp(dag, iw, max_degree, pens_used, scale);
  DpTable root = dp.run();
  std::map<ClassKey, IndexClass> out;
  const int n_red_max = max_degree / scale;
  std::map<int, std::vector<BigInt>> powers;
  for (const auto& [key, val] : root) {
    auto& pw = powers[key.j];
    if (pw.empty()) pw = harmonic_power(uni.dim, key.j, n_red_max);
    for (int n_red = key.j; n_red <= n_red_max; ++n_red) {
      const int n = n_red * scale;
      const bool ok = key.flag || n == 1;
      ClassKey ck{ok, ok ? scaled(key.S, iw.den) : Rational(0), ok ? Rational(n) * uni.alpha : Rational(0),
                  key.j * scale, n};
      add_class(out, ck, val.count * binomial(n_red - 1, key.j - 1), val.count * pw[n_red], spread(val.rep, n_red));
    }
  }
  return out;
}

std::map<ClassKey, IndexClass> classes_map(const ArchDag& dag, int max_degree) {
  check_degree(max_degree);
  if (uniform_inputs(dag).ok) {
    const int w = dag.gap_node() >= 0 ? static_cast<int>(dag.node(dag.gap_node()).children.size()) : 0;
    return enumerate_dp(dag, max_degree, w, 1);
  }
  return enumerate_explicit(dag, max_degree);
}

}  // namespace

std::vector<IndexClass> enumerate_classes(const ArchDag& dag, int max_degree) {
  std::vector<IndexClass> out;
  for (auto& [k, c] : classes_map(dag, max_degree)) out.push_back(std::move(c));
  std::stable_sort(out.begin(), out.end(), [](const IndexClass& a, const IndexClass& b) {
    if (a.learnable != b.learnable) return a.learnable;
    return a.L < b.L;
  });
  return out;
}

std::vector<LearningEntry> learning_sequence(const ArchDag& dag, int max_degree, std::optional<Rational> max_L) {
  std::map<Rational, LearningEntry> by_L;
  for (auto& c : enumerate_classes(dag, max_degree)) {
    if (!c.learnable) continue;
    if (max_L && c.L > *max_L) continue;
    auto& e = by_L[c.L];
    e.L = c.L;
    e.classes.push_back(c);
  }
  std::vector<LearningEntry> out;
  for (auto& [L, e] : by_L) {
    const IndexClass* best = nullptr;
    for (const auto& c : e.classes) {
      if (!best || std::tie(c.degree, c.support_size, c.representative) <
                       std::tie(best->degree, best->support_size, best->representative))
        best = &c;
    }
    e.representative = best->representative;
    out.push_back(std::move(e));
  }
  return out;
}

BigInt eigenspace_dimension(const ArchDag& dag, const Rational& L_target, int max_degree) {
  check_degree(max_degree);
  auto total_for = [&](const std::map<ClassKey, IndexClass>& m) {
    BigInt t = 0;
    for (const auto& [k, c] : m)
      if (c.learnable && c.L == L_target) t += c.dimension;
    return t;
  };
  if (dag.gap_node() < 0) return total_for(classes_map(dag, max_degree));
  if (!uniform_inputs(dag).ok) throw ConfigError("GAP dimension counting needs uniform input nodes");
  // Burnside over the cyclic pen shifts: a shift by h fixes exactly the basis
  // elements that repeat with period g = gcd(h, w).
  const int w = static_cast<int>(dag.node(dag.gap_node()).children.size());
  BigInt sum = 0;
  for (int h = 0; h < w; ++h) {
    const int g = std::gcd(h, w);
    sum += total_for(enumerate_dp(dag, max_degree, g, w / g));
  }
  if (sum % w != 0) throw NumericalError("Burnside sum is not divisible by the window size");
  return sum / w;
}

BudgetPartition budget_partition(const ArchDag& dag, const Rational& budget, int max_degree) {
  BudgetPartition out;
  for (auto& c : enumerate_classes(dag, max_degree)) {
    if (c.learnable && c.L == budget)
      throw ConfigError("budget " + to_string(budget) + " equals a learning index; choose a value off the sequence");
    if (c.learnable && c.L < budget) out.learnable.push_back(std::move(c));
    else out.unlearnable.push_back(std::move(c));
  }
  return out;
}

}  // namespace nkspec
