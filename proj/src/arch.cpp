#include "nkspec/arch.hpp"

#include "nkspec/error.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

namespace nkspec {

ArchDag::ArchDag(std::vector<NodeRecord> nodes, int reference_dim)
    : nodes_(std::move(nodes)), reference_dim_(reference_dim) {
  const int n = static_cast<int>(nodes_.size());
  if (n == 0) throw ConfigError("empty DAG");
  for (int i = 0; i < n; ++i) {
    if (nodes_[i].id != i) throw ConfigError("node ids must equal their positions");
    nodes_[i].parents.clear();
  }
  for (auto& u : nodes_) {
    for (int c : u.children) {
      if (c < 0 || c >= n) throw ConfigError("unknown child id " + std::to_string(c));
      nodes_[c].parents.push_back(u.id);
    }
  }
  for (auto& u : nodes_) {
    if (u.kind == NodeKind::input) {
      if (!u.children.empty()) throw ConfigError("input node " + std::to_string(u.id) + " has children");
    } else {
      if (u.children.empty()) throw ConfigError("node " + std::to_string(u.id) + " has no children");
      u.dim = static_cast<int>(u.children.size());
    }
  }
  for (auto& u : nodes_) {
    if (u.parents.empty()) {
      if (output_ >= 0) throw ConfigError("DAG has more than one sink");
      output_ = u.id;
    }
    if (u.parents.size() > 1) tree_ = false;
  }
  if (output_ < 0) throw ConfigError("DAG has no output node (cycle?)");
  nodes_[output_].kind = NodeKind::output;

  // Kahn's algorithm from the inputs upwards.
  std::vector<int> pending(n);
  std::queue<int> ready;
  for (auto& u : nodes_) {
    pending[u.id] = static_cast<int>(u.children.size());
    if (pending[u.id] == 0) ready.push(u.id);
  }
  while (!ready.empty()) {
    int v = ready.front();
    ready.pop();
    topo_.push_back(v);
    for (int p : nodes_[v].parents)
      if (--pending[p] == 0) ready.push(p);
  }
  if (static_cast<int>(topo_.size()) != n) throw ConfigError("DAG contains a cycle");

  // Every node must reach the output.
  std::vector<char> seen(n, 0);
  std::vector<int> stack{output_};
  seen[output_] = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int c : nodes_[u].children)
      if (!seen[c]) {
        seen[c] = 1;
        stack.push_back(c);
      }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    throw ConfigError("output node is not an ancestor of every node");

  for (auto& u : nodes_)
    if (u.kind == NodeKind::input) inputs_.push_back(u.id);
  std::stable_sort(inputs_.begin(), inputs_.end(), [&](int a, int b) {
    return nodes_[a].input_offset < nodes_[b].input_offset;
  });
  input_pos_.assign(n, -1);
  for (std::size_t i = 0; i < inputs_.size(); ++i) input_pos_[inputs_[i]] = static_cast<int>(i);
}

const NodeRecord& ArchDag::node(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw ConfigError("unknown node id " + std::to_string(id));
  return nodes_[id];
}

void ArchDag::mark_gap(int node_id) {
  const auto& u = node(node_id);
  if (u.kind == NodeKind::input) throw ConfigError("GAP readout cannot sit on an input node");
  // Everything above the pooling node must be a single-child chain.
  int cur = node_id;
  while (cur != output_) {
    const auto& c = nodes_[cur];
    if (c.parents.size() != 1) throw ConfigError("GAP node must lead to the output through a chain");
    cur = c.parents[0];
    if (nodes_[cur].children.size() != 1) throw ConfigError("GAP node must lead to the output through a chain");
  }
  if (!tree_) throw ConfigError("GAP readout requires a tree-shaped DAG");
  gap_node_ = node_id;
}

namespace {

std::string layer_keyword(LayerKind k) {
  switch (k) {
    case LayerKind::input: return "input";
    case LayerKind::dense: return "dense";
    case LayerKind::conv: return "conv";
    case LayerKind::flatten: return "flatten";
    case LayerKind::gap: return "gap";
  }
  return "dense";
}

void check_loose(const char* what, int concrete, const Rational& alpha, int d) {
  double target = std::pow(static_cast<double>(d), to_double(alpha));
  if (concrete < 0.5 * target - 1e-9 || concrete > 2.0 * target + 1e-9) {
    std::ostringstream os;
    os << what << " = " << concrete << " is inconsistent with d^" << to_string(alpha) << " = " << target
       << " for d = " << d;
    throw ConfigError(os.str());
  }
}

}  // namespace

ArchDag build_layered(int reference_dim, const std::vector<LayerSpec>& layers) {
  if (layers.empty() || layers[0].kind != LayerKind::input)
    throw ConfigError("architecture must start with an input layer");
  const auto& in = layers[0];
  if (in.size < 1 || reference_dim % in.size != 0)
    throw ConfigError("input patch size " + std::to_string(in.size) + " does not divide d = " +
                      std::to_string(reference_dim));
  if (in.alpha < 0 || in.alpha > 1) throw ConfigError("exponents must lie in [0, 1]");

  std::vector<NodeRecord> nodes;
  std::vector<int> current;
  const int n_in = reference_dim / in.size;
  for (int i = 0; i < n_in; ++i) {
    NodeRecord r;
    r.id = static_cast<int>(nodes.size());
    r.layer = 0;
    r.kind = NodeKind::input;
    r.alpha = in.alpha;
    r.dim = in.size;
    r.input_offset = i * in.size;
    r.activation = Dual::identity();
    current.push_back(r.id);
    nodes.push_back(std::move(r));
  }

  int gap_id = -1;
  for (std::size_t li = 1; li < layers.size(); ++li) {
    const auto& L = layers[li];
    if (L.kind == LayerKind::input) throw ConfigError("input layer may only appear first");
    if (gap_id >= 0 && L.kind != LayerKind::dense)
      throw ConfigError("only dense layers may follow a GAP readout");
    int fan = 1;
    Rational alpha = 0;
    switch (L.kind) {
      case LayerKind::dense: fan = 1; alpha = 0; break;
      case LayerKind::conv: fan = L.size; alpha = L.alpha; break;
      case LayerKind::flatten:
      case LayerKind::gap:
        fan = L.size;
        alpha = L.alpha;
        if (fan != static_cast<int>(current.size()))
          throw ConfigError(layer_keyword(L.kind) + " window " + std::to_string(fan) + " does not match the " +
                            std::to_string(current.size()) + " remaining positions");
        break;
      default: break;
    }
    if (fan < 1 || current.size() % fan != 0)
      throw ConfigError("filter size " + std::to_string(fan) + " does not divide " +
                        std::to_string(current.size()) + " positions at layer " + std::to_string(li));
    if (alpha < 0 || alpha > 1) throw ConfigError("exponents must lie in [0, 1]");
    std::vector<int> next;
    for (std::size_t g = 0; g < current.size() / fan; ++g) {
      NodeRecord r;
      r.id = static_cast<int>(nodes.size());
      r.layer = static_cast<int>(li);
      r.kind = NodeKind::hidden;
      r.alpha = alpha;
      r.dim = fan;
      r.activation = L.activation;
      for (int j = 0; j < fan; ++j) r.children.push_back(current[g * fan + j]);
      next.push_back(r.id);
      nodes.push_back(std::move(r));
    }
    if (L.kind == LayerKind::gap) gap_id = next[0];
    current = std::move(next);
  }
  if (current.size() != 1) throw ConfigError("last layer must have exactly one node (the output)");
  if (!nodes[current[0]].activation.is_identity())
    throw ConfigError("output node must carry the identity activation");
  ArchDag dag(std::move(nodes), reference_dim);
  if (gap_id >= 0) dag.mark_gap(gap_id);
  dag.set_layers(layers);
  return dag;
}

ArchDag build_mlp(int depth, int input_dim, const Dual& activation) {
  if (depth < 1) throw ConfigError("MLP depth must be >= 1");
  if (input_dim < 2) throw ConfigError("MLP input dimension must be >= 2");
  std::vector<LayerSpec> layers;
  layers.push_back({LayerKind::input, input_dim, 1, Dual::identity()});
  for (int i = 0; i < depth; ++i) layers.push_back({LayerKind::dense, 1, 0, activation});
  layers.push_back({LayerKind::dense, 1, 0, Dual::identity()});
  return build_layered(input_dim, layers);
}

ArchDag build_dcnn(const DcnnSpec& s) {
  if (s.p < 2) throw ConfigError("patch size p must be >= 2");
  if (s.k < 1 || s.w < 1 || s.L < 0) throw ConfigError("k, w must be >= 1 and L >= 0");
  long long d = s.p;
  for (int i = 0; i < s.L; ++i) d *= s.k;
  d *= s.w;
  if (d > (1LL << 30)) throw ConfigError("reference dimension too large");
  const int di = static_cast<int>(d);
  check_loose("p", s.p, s.alpha_p, di);
  if (s.L > 0) check_loose("k", s.k, s.alpha_k, di);
  check_loose("w", s.w, s.alpha_w, di);

  std::vector<LayerSpec> layers;
  layers.push_back({LayerKind::input, s.p, s.alpha_p, Dual::identity()});
  layers.push_back({LayerKind::dense, 1, 0, s.activation});
  for (int i = 0; i < s.L; ++i) layers.push_back({LayerKind::conv, s.k, s.alpha_k, s.activation});
  const LayerKind pool = s.readout == Readout::gap ? LayerKind::gap : LayerKind::flatten;
  if (s.act_after_readout) {
    layers.push_back({pool, s.w, s.alpha_w, s.activation});
    layers.push_back({LayerKind::dense, 1, 0, Dual::identity()});
  } else {
    layers.push_back({pool, s.w, s.alpha_w, Dual::identity()});
  }
  return build_layered(di, layers);
}

ArchDag hr_cnn(int p, const Dual& act, Readout readout, bool act_after_readout) {
  DcnnSpec s;
  s.p = p;
  s.k = p;
  s.L = 2;
  s.w = p;
  s.readout = readout;
  s.act_after_readout = act_after_readout;
  s.alpha_p = s.alpha_k = s.alpha_w = Rational(1, 4);
  s.activation = act;
  return build_dcnn(s);
}

ArchDag d_cnn(int p, const Dual& act) {
  DcnnSpec s;
  s.p = p * p;
  s.k = p * p;
  s.L = 1;
  s.w = 1;
  s.alpha_p = s.alpha_k = Rational(1, 2);
  s.alpha_w = 0;
  s.activation = act;
  return build_dcnn(s);
}

ArchDag mlp_family(int p, int depth, const Dual& act) { return build_mlp(depth, p * p * p * p, act); }

ArchDag s_cnn(int p, const Dual& act) {
  DcnnSpec s;
  s.p = p;
  s.k = 1;
  s.L = 0;
  s.w = p * p * p;
  s.act_after_readout = false;
  s.alpha_p = Rational(1, 4);
  s.alpha_w = Rational(3, 4);
  s.activation = act;
  return build_dcnn(s);
}

std::string to_text(const ArchDag& dag) {
  if (dag.layers().empty()) throw ConfigError("DAG was not built from a layer list");
  std::ostringstream os;
  os << "dim " << dag.reference_dim() << "\n";
  for (const auto& L : dag.layers()) {
    os << layer_keyword(L.kind);
    switch (L.kind) {
      case LayerKind::input: os << " " << L.size << " " << to_string(L.alpha); break;
      case LayerKind::dense: os << " " << L.activation.spec(); break;
      default: os << " " << L.size << " " << to_string(L.alpha) << " " << L.activation.spec(); break;
    }
    os << "\n";
  }
  return os.str();
}

ArchDag parse_arch_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  int dim = -1;
  std::vector<LayerSpec> layers;
  auto fail = [&](const std::string& msg) -> ConfigError {
    return ConfigError("line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string& kw = tok[0];
    try {
      if (kw == "dim") {
        if (tok.size() != 2) throw fail("expected 'dim D'");
        dim = std::stoi(tok[1]);
      } else if (kw == "input") {
        if (tok.size() != 3) throw fail("expected 'input SIZE ALPHA'");
        layers.push_back({LayerKind::input, std::stoi(tok[1]), parse_rational(tok[2]), Dual::identity()});
      } else if (kw == "dense") {
        if (tok.size() != 2) throw fail("expected 'dense DUAL'");
        layers.push_back({LayerKind::dense, 1, 0, Dual::parse(tok[1])});
      } else if (kw == "conv" || kw == "flatten" || kw == "gap") {
        if (tok.size() != 4) throw fail("expected '" + kw + " SIZE ALPHA DUAL'");
        LayerKind k = kw == "conv" ? LayerKind::conv : kw == "flatten" ? LayerKind::flatten : LayerKind::gap;
        layers.push_back({k, std::stoi(tok[1]), parse_rational(tok[2]), Dual::parse(tok[3])});
      } else {
        throw fail("unknown layer kind '" + kw + "' (valid: dim, input, dense, conv, flatten, gap)");
      }
    } catch (const ConfigError& e) {
      std::string msg = e.what();
      if (msg.rfind("line ", 0) == 0) throw;
      throw fail(msg);
    } catch (const std::exception&) {
      throw fail("malformed number");
    }
  }
  if (dim <= 0) throw ConfigError("missing 'dim D' line");
  return build_layered(dim, layers);
}

std::string architecture_string(const ArchDag& dag) {
  const auto& layers = dag.layers();
  if (layers.empty()) return "[Custom]";
  const bool mlp = layers[0].size == dag.reference_dim();
  std::vector<std::string> blocks{"[Input]"};
  std::size_t i = 1;
  for (; i < layers.size(); ++i) {
    const auto& L = layers[i];
    const bool last = i + 1 == layers.size();
    std::string b;
    if (L.kind == LayerKind::dense) {
      if (last && L.activation.is_identity()) b = "[Dense]";
      else if (i == 1 && !mlp) b = "[Conv(" + std::to_string(layers[0].size) + ")-Act]";
      else b = "[Dense-Act]";
    } else if (L.kind == LayerKind::conv) {
      b = "[Conv(" + std::to_string(L.size) + ")-Act]";
    } else {
      b = L.kind == LayerKind::gap ? "[GAP]" : "[Flatten]";
      blocks.push_back(b);
      b = L.activation.is_identity() ? "[Dense]" : "[Dense-Act]";
    }
    blocks.push_back(b);
  }
  // Collapse runs of identical blocks into "^{xN}".
  std::ostringstream os;
  for (std::size_t a = 0; a < blocks.size();) {
    std::size_t b = a;
    while (b + 1 < blocks.size() && blocks[b + 1] == blocks[a]) ++b;
    if (a) os << "->";
    os << blocks[a];
    if (b > a) os << "^{x" << (b - a + 1) << "}";
    a = b + 1;
  }
  return os.str();
}

ArchDag with_activation(const ArchDag& dag, const Dual& act) {
  if (dag.layers().empty()) {
    auto nodes = dag.nodes();
    for (auto& u : nodes)
      if (!u.activation.is_identity()) u.activation = act;
    ArchDag out(std::move(nodes), dag.reference_dim());
    if (dag.gap_node() >= 0) out.mark_gap(dag.gap_node());
    return out;
  }
  auto layers = dag.layers();
  for (auto& L : layers)
    if (!L.activation.is_identity()) L.activation = act;
  return build_layered(dag.reference_dim(), layers);
}

bool ValidationReport::all_passed() const {
  return std::all_of(items.begin(), items.end(), [](const auto& i) { return i.passed; });
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& it : items) {
    os << (it.passed ? "pass" : "FAIL") << "  " << it.rule;
    if (!it.passed) {
      os << "  nodes:";
      for (std::size_t i = 0; i < it.offending.size() && i < 20; ++i) os << " " << it.offending[i];
      if (it.offending.size() > 20) os << " ...";
    }
    if (!it.detail.empty()) os << "  (" << it.detail << ")";
    os << "\n";
  }
  return os.str();
}

ValidationReport validate_assumptions(const ArchDag& dag, const ValidationParams& prm) {
  ValidationReport rep;
  const double d = dag.reference_dim();

  ValidationItem a{"G(a) degree within [c d^alpha, C d^alpha]", true, {}, ""};
  for (const auto& u : dag.nodes()) {
    double target = std::pow(d, to_double(u.alpha));
    if (u.dim < prm.c * target - 1e-9 || u.dim > prm.C * target + 1e-9) {
      a.passed = false;
      a.offending.push_back(u.id);
    }
  }
  rep.items.push_back(a);

  ValidationItem b{"G(b) input dimensions sum to d", true, {}, ""};
  long long sum = 0;
  for (int v : dag.inputs()) sum += dag.node(v).dim;
  if (sum != dag.reference_dim()) {
    b.passed = false;
    b.detail = "sum " + std::to_string(sum) + " vs d " + std::to_string(dag.reference_dim());
  }
  rep.items.push_back(b);

  ValidationItem c{"G(c) inputs feed only first-layer nodes with alpha 0", true, {}, ""};
  for (const auto& u : dag.nodes()) {
    if (u.kind == NodeKind::input) continue;
    bool has_input = false, all_input = true;
    for (int ch : u.children) {
      bool is_in = dag.node(ch).kind == NodeKind::input;
      has_input |= is_in;
      all_input &= is_in;
    }
    if (has_input && (!all_input || u.alpha != 0 || u.layer != 1)) {
      c.passed = false;
      c.offending.push_back(u.id);
    }
  }
  rep.items.push_back(c);

  ValidationItem dp{"G(d) at most C parents per node", true, {}, ""};
  for (const auto& u : dag.nodes()) {
    if (static_cast<double>(u.parents.size()) > prm.C) {
      dp.passed = false;
      dp.offending.push_back(u.id);
    }
  }
  rep.items.push_back(dp);

  ValidationItem dl{"G(d) bounded path length to the output", true, {}, ""};
  std::vector<int> depth(dag.size(), 0);
  const auto& topo = dag.topo_order();
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    for (int ch : dag.node(*it).children) depth[ch] = std::max(depth[ch], depth[*it] + 1);
  }
  int longest = *std::max_element(depth.begin(), depth.end());
  dl.detail = "longest path " + std::to_string(longest);
  if (longest > prm.max_path_length) {
    dl.passed = false;
    for (const auto& u : dag.nodes())
      if (depth[u.id] > prm.max_path_length) dl.offending.push_back(u.id);
  }
  rep.items.push_back(dl);

  ValidationItem o{"output node carries the identity activation", true, {}, ""};
  if (!dag.node(dag.output()).activation.is_identity()) {
    o.passed = false;
    o.offending.push_back(dag.output());
  }
  rep.items.push_back(o);
  return rep;
}

std::set<int> ancestors(const ArchDag& dag, const std::vector<int>& node_set) {
  std::set<int> out;
  std::vector<int> stack;
  for (int v : node_set) {
    dag.node(v);
    if (out.insert(v).second) stack.push_back(v);
  }
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int p : dag.node(u).parents)
      if (out.insert(p).second) stack.push_back(p);
  }
  return out;
}

std::set<int> common_ancestors(const ArchDag& dag, const std::vector<int>& node_set) {
  if (node_set.empty()) return {};
  std::set<int> acc = ancestors(dag, {node_set[0]});
  for (std::size_t i = 1; i < node_set.size(); ++i) {
    std::set<int> a = ancestors(dag, {node_set[i]});
    std::set<int> keep;
    std::set_intersection(acc.begin(), acc.end(), a.begin(), a.end(), std::inserter(keep, keep.begin()));
    acc = std::move(keep);
  }
  return acc;
}

}  // namespace nkspec
