#pragma once

#include <vector>

namespace nkspec {

// Truncated multivariate Taylor polynomial.  Coefficients are stored densely
// over the box prod_i [0, cap_i]; monomials above the total-degree cap are
// dropped on every operation.
class Jet {
 public:
  Jet() = default;
  Jet(std::vector<int> caps, int total_cap);

  static Jet constant(const Jet& shape, double value);
  static Jet variable(const Jet& shape, int var);

  int nvars() const { return static_cast<int>(caps_.size()); }
  double value() const { return c_.empty() ? 0.0 : c_[0]; }
  double coefficient(const std::vector<int>& exponents) const;
  const std::vector<double>& coefficients() const { return c_; }

  Jet& operator+=(const Jet& o);
  Jet& operator*=(double s);
  Jet operator*(const Jet& o) const;

  // sum_j series[j] * (this - value())^j, i.e. f(this) when series holds the
  // Taylor coefficients of f around value().
  Jet compose(const std::vector<double>& series) const;

  int total_cap() const { return total_; }
  bool same_shape(const Jet& o) const { return caps_ == o.caps_ && total_ == o.total_; }

 private:
  std::vector<int> caps_;
  std::vector<int> stride_;
  std::vector<int> degree_;  // total degree of each dense slot
  int total_ = 0;
  std::vector<double> c_;
};

inline Jet operator+(Jet a, const Jet& b) {
  a += b;
  return a;
}

}  // namespace nkspec
