#pragma once

#include "nkspec/arch.hpp"
#include "nkspec/kernel.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace nkspec {

// Pixel offset in the cyclic group Z_p^4.  The first three components pick a
// patch, the last one a coordinate inside it.
using Offset = std::array<int, 4>;

struct PixelPower {
  Offset at{};
  int power = 1;
};

struct Monomial {
  double coef = 1.0;
  std::vector<PixelPower> factors;
};

// Degree-`degree` harmonic component of the single pixel `at`:
// scale * P_degree(x_at / sqrt(p)).
struct ZonalFactor {
  Offset at{};
  int degree = 0;
  double scale = 1.0;
};

// coef * prod(monomial factors) * prod(zonal factors), all relative to the
// base pixel k.
struct ProductTerm {
  double coef = 1.0;
  std::vector<PixelPower> factors;
  std::vector<ZonalFactor> zonals;
};

enum class CoefficientMode { random, constant };

struct Eigenfunction {
  std::string id;
  int p = 0;
  std::uint64_t seed = 0;
  CoefficientMode mode = CoefficientMode::random;
  bool projected = false;
  int degree = 0;
  std::vector<PixelPower> pattern;   // representative degree pattern at k = 0
  std::vector<ProductTerm> terms;
  std::vector<double> coefficients;  // c_k, k in flat order over Z_p^4
  double normalization = 1.0;
  std::vector<std::string> non_harmonic;  // descriptions of flagged patch factors

  double eval(const double* x) const;
  std::vector<double> eval_batch(const PointMatrix& X, int threads = 1) const;
};

// Ids accepted by build_appendix_eigenfunction.
const std::vector<std::string>& appendix_ids();
int appendix_degree(const std::string& id);

// Literal polynomial of one catalogue mode before coefficients/normalization.
std::vector<Monomial> appendix_template(const std::string& id);

// Builds one mode with coefficients drawn from `seed` (standard normal or a
// single shared constant).  With `project`, every term is replaced by its
// component in the product eigenspace of the representative pattern.
// Normalization is left at 1; see normalize_empirically.
Eigenfunction build_appendix_eigenfunction(const std::string& id, int p, std::uint64_t seed, CoefficientMode mode,
                                           bool project);

// All eight modes (or the listed subset), coefficients from independent
// streams of `seed`, each normalized to unit empirical norm on `normalizer`.
std::vector<Eigenfunction> build_appendix_eigenfunctions(int p, std::uint64_t seed, CoefficientMode mode,
                                                         bool project, const PointMatrix& normalizer,
                                                         const std::vector<std::string>& ids = {});

void normalize_empirically(Eigenfunction& f, const PointMatrix& X, int threads = 1);

// Symbolic Laplacian per patch: returns descriptions of the groups of
// monomials (same per-patch degree pattern) that are not harmonic.
std::vector<std::string> non_harmonic_factors(const std::vector<Monomial>& poly, int p);

// Component of x^a (x one coordinate of the radius-sqrt(p) sphere in R^p) in
// the degree-b harmonics: x^a -> c * P_b(x / sqrt(p)).  Returns c.
double zonal_projection_coefficient(int p, int a, int b);

// Input-node multi-index of the representative pattern on `dag` (the input
// point layout is the p^4 pixel grid in flat order).
MultiIndex pattern_multi_index(const Eigenfunction& f, const ArchDag& dag);
MultiIndex pattern_multi_index(const std::vector<PixelPower>& pattern, int p, const ArchDag& dag);

std::string to_json(const Eigenfunction& f);
Eigenfunction eigenfunction_from_json(const std::string& text);

}  // namespace nkspec
