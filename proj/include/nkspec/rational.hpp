#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <string>
#include <string_view>

namespace nkspec {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

// Parses "3", "-2", "3/4" or "0.25" (finite decimals only) exactly.
Rational parse_rational(std::string_view text);

// "3/4", "2" or "-1/3"; always reduced.
std::string to_string(const Rational& q);

// Renders q over a fixed denominator when it divides evenly ("2/4" for 1/2 over 4).
std::string to_string_over(const Rational& q, long denominator);

double to_double(const Rational& q);

}  // namespace nkspec
