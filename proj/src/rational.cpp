#include "nkspec/rational.hpp"

#include "nkspec/error.hpp"

#include <cctype>

namespace nkspec {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

BigInt parse_integer(std::string_view s, std::string_view whole) {
  if (s.empty()) throw ConfigError("malformed rational '" + std::string(whole) + "'");
  std::size_t i = 0;
  bool neg = false;
  if (s[0] == '+' || s[0] == '-') {
    neg = s[0] == '-';
    i = 1;
  }
  if (i == s.size()) throw ConfigError("malformed rational '" + std::string(whole) + "'");
  BigInt v = 0;
  for (; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i])))
      throw ConfigError("malformed rational '" + std::string(whole) + "'");
    v = v * 10 + (s[i] - '0');
  }
  return neg ? BigInt(-v) : v;
}

}  // namespace

Rational parse_rational(std::string_view text) {
  const std::string_view s = trim(text);
  if (auto slash = s.find('/'); slash != std::string_view::npos) {
    BigInt num = parse_integer(trim(s.substr(0, slash)), s);
    BigInt den = parse_integer(trim(s.substr(slash + 1)), s);
    if (den == 0) throw ConfigError("zero denominator in '" + std::string(s) + "'");
    return Rational(num, den);
  }
  if (auto dot = s.find('.'); dot != std::string_view::npos) {
    std::string_view ip = s.substr(0, dot);
    std::string_view fp = s.substr(dot + 1);
    std::string digits(ip.empty() || ip == "-" || ip == "+" ? std::string(ip) + "0" : std::string(ip));
    digits += fp;
    BigInt num = parse_integer(digits, s);
    BigInt den = 1;
    for (std::size_t i = 0; i < fp.size(); ++i) den *= 10;
    return Rational(num, den);
  }
  return Rational(parse_integer(s, s));
}

std::string to_string(const Rational& q) {
  BigInt n = boost::multiprecision::numerator(q);
  BigInt d = boost::multiprecision::denominator(q);
  if (d == 1) return n.str();
  return n.str() + "/" + d.str();
}

std::string to_string_over(const Rational& q, long denominator) {
  Rational scaled = q * denominator;
  if (boost::multiprecision::denominator(scaled) != 1) return to_string(q);
  return boost::multiprecision::numerator(scaled).str() + "/" + std::to_string(denominator);
}

double to_double(const Rational& q) { return q.convert_to<double>(); }

}  // namespace nkspec
