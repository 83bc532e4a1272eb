#include "nkspec/dual.hpp"

#include "nkspec/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

namespace nkspec {

namespace {

double parse_double(std::string_view s, std::string_view spec) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError("bad number '" + std::string(s) + "' in dual spec '" + std::string(spec) + "'");
  return v;
}

std::vector<std::string_view> split_colon(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(':', start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Taylor coefficients of (1 - t^2)^{-1/2} around a, through index n.
std::vector<double> inv_sqrt_series(double a, int n) {
  std::vector<double> g(n + 1, 0.0);
  const double q = 1.0 - a * a;
  if (q <= 0.0) throw NumericalError("relu dual derivatives of order >= 2 are singular at |t| = 1");
  g[0] = 1.0 / std::sqrt(q);
  for (int k = 0; k < n; ++k) {
    double prev = k >= 1 ? g[k - 1] : 0.0;
    g[k + 1] = ((2.0 * k + 1.0) * a * g[k] + k * prev) / (q * (k + 1.0));
  }
  return g;
}

}  // namespace

Dual::Dual(DualKind k, double gamma, int J) : kind_(k), gamma_(gamma), J_(J) {
  if (k == DualKind::centered_exp) scale_ = 1.0 / std::expm1(gamma);
  if (k == DualKind::poly) {
    poly_coef_.assign(J + 1, 0.0);
    double term = 1.0, sum = 0.0;
    for (int j = 1; j <= J; ++j) {
      term *= gamma / j;
      poly_coef_[j] = term;
      sum += term;
    }
    for (double& c : poly_coef_) c /= sum;
  }
  class_ = classify(*this, 12, 1e-12);
}

Dual Dual::identity() { return Dual(DualKind::identity, 0.0, 0); }

Dual Dual::gaussian(double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("gaussian dual needs gamma > 0");
  return Dual(DualKind::gaussian, gamma, 0);
}

Dual Dual::centered_exp(double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("centered_exp dual needs gamma > 0");
  return Dual(DualKind::centered_exp, gamma, 0);
}

Dual Dual::poly(int J, double gamma) {
  if (J < 1) throw ConfigError("poly dual needs J >= 1");
  if (!(gamma > 0.0)) throw ConfigError("poly dual needs gamma > 0");
  return Dual(DualKind::poly, gamma, J);
}

Dual Dual::relu() { return Dual(DualKind::relu, 0.0, 0); }

Dual Dual::parse(std::string_view spec) {
  auto parts = split_colon(spec);
  const std::string_view name = parts[0];
  auto want = [&](std::size_t n) {
    if (parts.size() != n)
      throw ConfigError("dual spec '" + std::string(spec) + "' has wrong number of fields");
  };
  if (name == "identity") {
    want(1);
    return identity();
  }
  if (name == "relu") {
    want(1);
    return relu();
  }
  if (name == "gaussian") {
    if (parts.size() == 1) return gaussian(1.0);
    want(2);
    return gaussian(parse_double(parts[1], spec));
  }
  if (name == "centered_exp") {
    if (parts.size() == 1) return centered_exp(1.0);
    want(2);
    return centered_exp(parse_double(parts[1], spec));
  }
  if (name == "poly") {
    if (parts.size() == 2) return poly(static_cast<int>(parse_double(parts[1], spec)), 1.0);
    want(3);
    double J = parse_double(parts[1], spec);
    if (J != std::floor(J)) throw ConfigError("poly degree must be an integer");
    return poly(static_cast<int>(J), parse_double(parts[2], spec));
  }
  throw ConfigError("unknown dual '" + std::string(name) +
                    "' (valid: identity, gaussian, centered_exp, poly, relu)");
}

double Dual::eval(double t) const {
  switch (kind_) {
    case DualKind::identity: return t;
    case DualKind::gaussian: return std::exp(gamma_ * (t - 1.0));
    case DualKind::centered_exp: return std::expm1(gamma_ * t) * scale_;
    case DualKind::poly: {
      double v = 0.0;
      for (int j = J_; j >= 1; --j) v = (v + poly_coef_[j]) * t;
      return v;
    }
    case DualKind::relu: {
      double tc = std::clamp(t, -1.0, 1.0);
      return (std::sqrt(1.0 - tc * tc) + (std::numbers::pi - std::acos(tc)) * tc) / std::numbers::pi;
    }
  }
  return 0.0;
}

double Dual::deriv(double t) const {
  switch (kind_) {
    case DualKind::identity: return 1.0;
    case DualKind::gaussian: return gamma_ * std::exp(gamma_ * (t - 1.0));
    case DualKind::centered_exp: return gamma_ * std::exp(gamma_ * t) * scale_;
    case DualKind::poly: {
      double v = 0.0;
      for (int j = J_; j >= 1; --j) v = v * t + j * poly_coef_[j];
      return v;
    }
    case DualKind::relu: {
      double tc = std::clamp(t, -1.0, 1.0);
      return (std::numbers::pi - std::acos(tc)) / std::numbers::pi;
    }
  }
  return 0.0;
}

void Dual::eval_both(double t, double& value, double& slope) const {
  switch (kind_) {
    case DualKind::identity:
      value = t;
      slope = 1.0;
      return;
    case DualKind::gaussian:
      value = std::exp(gamma_ * (t - 1.0));
      slope = gamma_ * value;
      return;
    case DualKind::centered_exp: {
      double e = std::exp(gamma_ * t);
      value = std::expm1(gamma_ * t) * scale_;
      slope = gamma_ * e * scale_;
      return;
    }
    default:
      value = eval(t);
      slope = deriv(t);
  }
}

std::vector<double> Dual::series_at(double a, int order) const {
  std::vector<double> c(order + 1, 0.0);
  switch (kind_) {
    case DualKind::identity:
      c[0] = a;
      if (order >= 1) c[1] = 1.0;
      break;
    case DualKind::gaussian: {
      double f = std::exp(gamma_ * (a - 1.0));
      for (int j = 0; j <= order; ++j) {
        c[j] = f;
        f *= gamma_ / (j + 1);
      }
      break;
    }
    case DualKind::centered_exp: {
      c[0] = std::expm1(gamma_ * a) * scale_;
      double f = std::exp(gamma_ * a) * scale_;
      for (int j = 1; j <= order; ++j) {
        f *= gamma_ / j;
        c[j] = f;
      }
      break;
    }
    case DualKind::poly: {
      // Taylor shift of the polynomial to the point a.
      for (int j = 0; j <= std::min(order, J_); ++j) {
        double s = 0.0;
        double binom = 1.0;  // C(i, j) for i = j
        double apow = 1.0;   // a^{i-j}
        for (int i = j; i <= J_; ++i) {
          s += poly_coef_[i] * binom * apow;
          binom = binom * (i + 1) / (i + 1 - j);
          apow *= a;
        }
        c[j] = s;
      }
      break;
    }
    case DualKind::relu: {
      c[0] = eval(a);
      if (order >= 1) c[1] = deriv(a);
      if (order >= 2) {
        auto g = inv_sqrt_series(a, order - 2);
        for (int j = 2; j <= order; ++j) c[j] = g[j - 2] / (std::numbers::pi * j * (j - 1));
      }
      break;
    }
  }
  return c;
}

double Dual::taylor(int j) const {
  if (j < 0) return 0.0;
  return series_at(0.0, j)[j];
}

std::string Dual::spec() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind_) {
    case DualKind::identity: return "identity";
    case DualKind::relu: return "relu";
    case DualKind::gaussian: os << "gaussian:" << gamma_; break;
    case DualKind::centered_exp: os << "centered_exp:" << gamma_; break;
    case DualKind::poly: os << "poly:" << J_ << ":" << gamma_; break;
  }
  return os.str();
}

bool Dual::grants_interactions() const {
  return class_.cls == DualClass::admissible || class_.cls == DualClass::semi_admissible ||
         class_.cls == DualClass::poly_admissible;
}

Classification classify(const Dual& dual, int max_order, double tol) {
  if (dual.kind() == DualKind::identity) return {DualClass::identity, 0};
  auto c = dual.series_at(0.0, max_order);
  bool linear = std::abs(c[0]) <= tol && std::abs(c[1] - 1.0) <= tol;
  for (int j = 2; j <= max_order && linear; ++j) linear = std::abs(c[j]) <= tol;
  if (linear) return {DualClass::identity, 0};

  int first_zero = max_order + 1;
  for (int j = 1; j <= max_order; ++j) {
    if (!(c[j] > tol)) {
      first_zero = j;
      break;
    }
  }
  if (first_zero > max_order)
    return {std::abs(c[0]) <= tol ? DualClass::admissible : DualClass::semi_admissible, 0};
  bool tail_zero = first_zero > 1;
  for (int j = first_zero; j <= max_order && tail_zero; ++j) tail_zero = std::abs(c[j]) <= tol;
  if (tail_zero) return {DualClass::poly_admissible, first_zero - 1};
  return {DualClass::none, 0};
}

std::string to_string(DualClass c) {
  switch (c) {
    case DualClass::identity: return "identity";
    case DualClass::admissible: return "admissible";
    case DualClass::semi_admissible: return "semi_admissible";
    case DualClass::poly_admissible: return "poly_admissible";
    case DualClass::none: return "none";
  }
  return "none";
}

}  // namespace nkspec
