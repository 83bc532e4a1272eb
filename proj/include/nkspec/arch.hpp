#pragma once

#include "nkspec/dual.hpp"
#include "nkspec/rational.hpp"

#include <set>
#include <string>
#include <vector>

namespace nkspec {

enum class NodeKind { input, hidden, output };
enum class Readout { flatten, gap };

struct NodeRecord {
  int id = 0;
  int layer = 0;
  NodeKind kind = NodeKind::hidden;
  Rational alpha;          // degree exponent (patch-dimension exponent for inputs)
  int dim = 1;             // d_v for inputs, fan-in for the rest
  int input_offset = -1;   // first coordinate covered by an input node
  Dual activation;
  std::vector<int> children;
  std::vector<int> parents;
};

// One line of the plain-text architecture description.
enum class LayerKind { input, dense, conv, flatten, gap };

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  int size = 1;        // patch size, filter size or pooling window
  Rational alpha = 0;
  Dual activation;
};

class ArchDag {
 public:
  ArchDag() = default;

  // Builds from explicit records; children lists must be filled, parents are
  // derived.  Checks acyclicity and that the output reaches every node.
  ArchDag(std::vector<NodeRecord> nodes, int reference_dim);

  const std::vector<NodeRecord>& nodes() const { return nodes_; }
  const NodeRecord& node(int id) const;
  std::size_t size() const { return nodes_.size(); }
  int output() const { return output_; }
  int reference_dim() const { return reference_dim_; }

  // Input node ids sorted by input_offset.
  const std::vector<int>& inputs() const { return inputs_; }
  // Position of an input node in inputs(), -1 for other nodes.
  int input_position(int id) const { return input_pos_[id]; }
  // Children before parents.
  const std::vector<int>& topo_order() const { return topo_; }

  bool is_tree() const { return tree_; }

  // Pooling node carrying the GAP readout, or -1.
  int gap_node() const { return gap_node_; }
  Readout readout() const { return gap_node_ >= 0 ? Readout::gap : Readout::flatten; }
  void mark_gap(int node);

  // Layer list the DAG was built from (empty for hand-built DAGs).
  const std::vector<LayerSpec>& layers() const { return layers_; }
  void set_layers(std::vector<LayerSpec> l) { layers_ = std::move(l); }

 private:
  std::vector<NodeRecord> nodes_;
  std::vector<int> inputs_;
  std::vector<int> input_pos_;
  std::vector<int> topo_;
  std::vector<LayerSpec> layers_;
  int output_ = -1;
  int reference_dim_ = 0;
  int gap_node_ = -1;
  bool tree_ = true;
};

// Layered tree builder shared by every family and by the text format.
ArchDag build_layered(int reference_dim, const std::vector<LayerSpec>& layers);

ArchDag build_mlp(int depth, int input_dim, const Dual& activation);

struct DcnnSpec {
  int p = 2;
  int k = 2;
  int L = 1;
  int w = 1;
  Readout readout = Readout::flatten;
  bool act_after_readout = true;
  Rational alpha_p = 0;
  Rational alpha_k = 0;
  Rational alpha_w = 0;
  Dual activation;
};

ArchDag build_dcnn(const DcnnSpec& spec);

// Families used by the experiments, parameterized by the base patch size p
// (reference dimension p^4).
ArchDag hr_cnn(int p, const Dual& act, Readout readout = Readout::flatten,
               bool act_after_readout = true);                // CNN(p)^{x4}
ArchDag d_cnn(int p, const Dual& act);                         // CNN(p^2)^{x2}
ArchDag mlp_family(int p, int depth, const Dual& act);        // MLP on d = p^4
ArchDag s_cnn(int p, const Dual& act);                         // one conv layer, identity readout

// Plain-text description: one layer per line, "kind size alpha [dual]".
std::string to_text(const ArchDag& dag);
ArchDag parse_arch_text(const std::string& text);

// Architecture string in the "[Input]->[Conv(p)-Act]->..." notation.
std::string architecture_string(const ArchDag& dag);

// Swaps every non-identity activation for `act`.
ArchDag with_activation(const ArchDag& dag, const Dual& act);

struct ValidationItem {
  std::string rule;
  bool passed = true;
  std::vector<int> offending;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationItem> items;
  bool all_passed() const;
  std::string to_string() const;
};

struct ValidationParams {
  double c = 0.5;
  double C = 2.0;
  int max_path_length = 64;
};

ValidationReport validate_assumptions(const ArchDag& dag, const ValidationParams& params = {});

std::set<int> ancestors(const ArchDag& dag, const std::vector<int>& node_set);
std::set<int> common_ancestors(const ArchDag& dag, const std::vector<int>& node_set);

}  // namespace nkspec
