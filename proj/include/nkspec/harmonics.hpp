#pragma once

#include "nkspec/rational.hpp"

#include <cstdint>
#include <vector>

namespace nkspec {

// |S_{d-1}| = 2 pi^{d/2} / Gamma(d/2).
double surface_area(int d);
double log_surface_area(int d);

// Number of degree-r spherical harmonics on S^{d-1}.
BigInt harmonic_count(int d, int r);
double harmonic_count_double(int d, int r);

// Gegenbauer polynomial of S^{d-1}, normalized by P_r(1) = 1 (three-term
// recurrence).
double gegenbauer_eval(int d, int r, double t);
// P_0(t) .. P_R(t).
std::vector<double> gegenbauer_all(int d, int R, double t);
double gegenbauer_leading_coefficient(int d, int r);

// Monomial coefficients of P_r from the Rodrigues formula (independent of the
// recurrence; used to cross-check it).
std::vector<double> gegenbauer_rodrigues(int d, int r);

struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss rule for the weight (1 - t^2)^{(d-3)/2} on [-1, 1] (Golub-Welsch).
Quadrature gauss_gegenbauer(int d, int n);

// int P_r P_s (1 - t^2)^{(d-3)/2} dt by an n-point Gauss rule.
double gegenbauer_inner(int d, int r, int s, int n = 200);

// N(d, r)^{-1} |S_{d-1}| / |S_{d-2}|.
double gegenbauer_norm_squared(int d, int r);

// Real orthonormal (uniform probability measure) harmonic basis of degree r
// on S^{d-1} for d in {2, 3}; xi must be a unit vector.
std::vector<double> real_harmonic_basis(int d, int r, const double* xi);

// max |P_r(xi.eta) - N^{-1} sum_l Y_l(xi) Y_l(eta)| over random unit pairs.
double addition_theorem_check(int d, int r, int trials, std::uint64_t seed = 7);

// sqrt(N(d,r)) P_r(<xi, e>/sqrt(d)) for xi on the radius-sqrt(d) sphere.
double zonal_harmonic(int d, int r, const double* e, const double* xi);

}  // namespace nkspec
