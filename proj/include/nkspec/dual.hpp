#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace nkspec {

enum class DualKind { identity, gaussian, centered_exp, poly, relu };

enum class DualClass { identity, admissible, semi_admissible, poly_admissible, none };

struct Classification {
  DualClass cls = DualClass::none;
  int J = 0;  // only meaningful for poly_admissible
};

// Dual activation t -> phi*(t) on [-1, 1], normalized so that phi*(1) = 1.
class Dual {
 public:
  Dual() = default;

  static Dual identity();
  static Dual gaussian(double gamma);
  static Dual centered_exp(double gamma);
  static Dual poly(int J, double gamma);
  static Dual relu();

  // "gaussian:1.0", "centered_exp:1.0", "poly:6:1.0", "identity", "relu".
  static Dual parse(std::string_view spec);

  double eval(double t) const;
  double deriv(double t) const;

  // Both at once; the kernel recursion needs the pair at every node.
  void eval_both(double t, double& value, double& slope) const;

  // j-th Taylor coefficient at 0.
  double taylor(int j) const;

  // Coefficients phi^{(j)}(a)/j! for j = 0..order.
  std::vector<double> series_at(double a, int order) const;

  DualKind kind() const { return kind_; }
  double gamma() const { return gamma_; }
  int degree() const { return J_; }
  bool is_identity() const { return kind_ == DualKind::identity; }
  std::string spec() const;

  // Classification cached at construction (orders up to 12, tol 1e-12).
  const Classification& classification() const { return class_; }

  // True when the dual can serve as the non-linear common ancestor in the
  // learnability rule.
  bool grants_interactions() const;

  bool operator==(const Dual& o) const {
    return kind_ == o.kind_ && gamma_ == o.gamma_ && J_ == o.J_;
  }

 private:
  Dual(DualKind k, double gamma, int J);

  DualKind kind_ = DualKind::identity;
  double gamma_ = 0.0;
  int J_ = 0;
  double scale_ = 1.0;              // 1/(e^gamma - 1) or 1/sum for poly
  std::vector<double> poly_coef_;   // poly: coefficients of t^0..t^J after normalization
  Classification class_{DualClass::identity, 0};
};

Classification classify(const Dual& dual, int max_order, double tol);

std::string to_string(DualClass c);

}  // namespace nkspec
