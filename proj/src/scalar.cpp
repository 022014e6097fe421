#include "droem/scalar.hpp"

#include <cctype>

#include "droem/errors.hpp"

namespace droem {

namespace {

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  return true;
}

Rational parse_integer(std::string_view s) {
  bool negative = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  if (!all_digits(s)) throw ParseError("not an integer: '" + std::string(s) + "'");
  mpz_class z(std::string(s), 10);
  return Rational(negative ? mpz_class(-z) : z);
}

}  // namespace

Rational parse_rational(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (text.empty()) throw ParseError("empty rational");

  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    Rational num = parse_integer(text.substr(0, slash));
    Rational den = parse_integer(text.substr(slash + 1));
    if (sgn(den) == 0) throw ParseError("zero denominator in '" + std::string(text) + "'");
    Rational q = num / den;
    q.canonicalize();
    return q;
  }
  if (auto dot = text.find('.'); dot != std::string_view::npos) {
    std::string_view whole = text.substr(0, dot);
    std::string_view frac = text.substr(dot + 1);
    if (!frac.empty() && !all_digits(frac)) throw ParseError("bad decimal '" + std::string(text) + "'");
    bool negative = !whole.empty() && whole.front() == '-';
    Rational w = (whole.empty() || whole == "-" || whole == "+") ? Rational(0) : parse_integer(whole);
    Rational f = frac.empty() ? Rational(0) : parse_integer(frac);
    mpz_class scale;
    mpz_ui_pow_ui(scale.get_mpz_t(), 10, frac.size());
    Rational fpart = f / Rational(scale);
    Rational q = negative ? Rational(w - fpart) : Rational(w + fpart);
    q.canonicalize();
    return q;
  }
  return parse_integer(text);
}

std::string to_string(const Rational& q) {
  return q.get_num().get_str() + "/" + q.get_den().get_str();
}

}  // namespace droem
