#include "nkspec/jet.hpp"

#include "nkspec/error.hpp"

#include <algorithm>

namespace nkspec {

Jet::Jet(std::vector<int> caps, int total_cap) : caps_(std::move(caps)), total_(total_cap) {
  std::size_t size = 1;
  stride_.resize(caps_.size());
  for (std::size_t i = 0; i < caps_.size(); ++i) {
    if (caps_[i] < 0) throw ConfigError("negative jet cap");
    stride_[i] = static_cast<int>(size);
    size *= static_cast<std::size_t>(caps_[i] + 1);
    if (size > (1u << 22)) throw ResourceError("jet too large");
  }
  c_.assign(size, 0.0);
  degree_.assign(size, 0);
  for (std::size_t idx = 0; idx < size; ++idx) {
    int rem = static_cast<int>(idx), deg = 0;
    for (std::size_t i = caps_.size(); i-- > 0;) {
      deg += rem / stride_[i];
      rem %= stride_[i];
    }
    degree_[idx] = deg;
  }
}

Jet Jet::constant(const Jet& shape, double value) {
  Jet j = shape;
  std::fill(j.c_.begin(), j.c_.end(), 0.0);
  j.c_[0] = value;
  return j;
}

Jet Jet::variable(const Jet& shape, int var) {
  Jet j = constant(shape, 0.0);
  if (j.caps_[var] >= 1 && j.total_ >= 1) j.c_[j.stride_[var]] = 1.0;
  return j;
}

double Jet::coefficient(const std::vector<int>& e) const {
  if (e.size() != caps_.size()) throw ConfigError("exponent vector has wrong length");
  std::size_t idx = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e[i] < 0 || e[i] > caps_[i]) return 0.0;
    idx += static_cast<std::size_t>(e[i]) * stride_[i];
  }
  return degree_[idx] <= total_ ? c_[idx] : 0.0;
}

Jet& Jet::operator+=(const Jet& o) {
  for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
  return *this;
}

Jet& Jet::operator*=(double s) {
  for (double& v : c_) v *= s;
  return *this;
}

Jet Jet::operator*(const Jet& o) const {
  Jet out = constant(*this, 0.0);
  const std::size_t n = c_.size();
  const std::size_t nv = caps_.size();
  // Decompose each slot once so the inner loop only adds exponents.
  std::vector<int> ex(n * nv);
  for (std::size_t idx = 0; idx < n; ++idx) {
    int rem = static_cast<int>(idx);
    for (std::size_t i = nv; i-- > 0;) {
      ex[idx * nv + i] = rem / stride_[i];
      rem %= stride_[i];
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    const double ca = c_[a];
    if (ca == 0.0 || degree_[a] > total_) continue;
    for (std::size_t b = 0; b < n; ++b) {
      const double cb = o.c_[b];
      if (cb == 0.0 || degree_[a] + degree_[b] > total_) continue;
      bool ok = true;
      std::size_t idx = 0;
      for (std::size_t i = 0; i < nv; ++i) {
        int e = ex[a * nv + i] + ex[b * nv + i];
        if (e > caps_[i]) {
          ok = false;
          break;
        }
        idx += static_cast<std::size_t>(e) * stride_[i];
      }
      if (ok) out.c_[idx] += ca * cb;
    }
  }
  return out;
}

Jet Jet::compose(const std::vector<double>& series) const {
  Jet q = *this;
  q.c_[0] = 0.0;
  const int top = std::min<int>(total_, static_cast<int>(series.size()) - 1);
  Jet acc = constant(*this, top >= 0 ? series[top] : 0.0);
  for (int j = top - 1; j >= 0; --j) {
    acc = acc * q;
    acc.c_[0] += series[j];
  }
  return acc;
}

}  // namespace nkspec
