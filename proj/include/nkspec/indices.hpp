#pragma once

#include "nkspec/arch.hpp"
#include "nkspec/kernel.hpp"
#include "nkspec/rational.hpp"

#include <optional>
#include <vector>

namespace nkspec {

// Minimum total edge weight of a connected subgraph containing node_set, an
// edge child -> parent weighing alpha(parent).  Tree DAGs use the path-union
// rule; other DAGs a Steiner dynamic program (at most 8 terminals).
Rational spatial_index(const ArchDag& dag, const std::vector<int>& node_set);

// Same quantity on any DAG via the Steiner program (exposed for cross-checks).
Rational steiner_weight(const ArchDag& dag, const std::vector<int>& node_set);

// Some common ancestor of the support carries an interaction-granting dual.
// Degree-one multi-indices are linear and always learnable.
bool learnable(const ArchDag& dag, const MultiIndex& r);

struct IndexTriple {
  bool finite = false;  // false: not learnable, every index is +infinity
  Rational S;
  Rational F;
  Rational L;
  std::string to_string() const;  // "S/F/L" or "inf/inf/inf"
};

IndexTriple index_triple(const ArchDag& dag, const MultiIndex& r);

// A family of multi-indices sharing support size, total degree and indices.
struct IndexClass {
  bool learnable = false;
  Rational S;
  Rational F;
  Rational L;
  int support_size = 0;
  int degree = 0;
  BigInt patterns;   // number of multi-indices in the class
  BigInt dimension;  // sum over the class of prod_v N(d_v, r_v)
  MultiIndex representative;
};

struct LearningEntry {
  Rational L;
  MultiIndex representative;
  std::vector<IndexClass> classes;
};

// Every class with total degree in [1, max_degree] (max_degree <= 8).
std::vector<IndexClass> enumerate_classes(const ArchDag& dag, int max_degree);

// Distinct finite learning indices <= max_L in increasing order.
std::vector<LearningEntry> learning_sequence(const ArchDag& dag, int max_degree,
                                             std::optional<Rational> max_L = std::nullopt);

// Sum over learnable r with L(r) = L_target and |r| <= max_degree of
// prod_v N(d_v, r_v).  On GAP DAGs counts the translation-symmetric subspace
// (orbits of the pen-shift group, by Burnside).
BigInt eigenspace_dimension(const ArchDag& dag, const Rational& L_target, int max_degree);

struct BudgetPartition {
  std::vector<IndexClass> learnable;    // L < budget
  std::vector<IndexClass> unlearnable;  // L > budget or not learnable
};

// Refuses budgets equal to a learning index.
BudgetPartition budget_partition(const ArchDag& dag, const Rational& budget, int max_degree);

// Upper bound on support patterns enumerated before giving up.
inline constexpr double kPatternGuard = 1e7;

}  // namespace nkspec
