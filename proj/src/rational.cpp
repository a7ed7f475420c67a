#include "rational.hpp"

#include <limits>

#include "abelscale/error.hpp"

namespace abelscale::detail {

namespace {

WideInt gcd128(WideInt a, WideInt b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  while (b != 0) {
    const WideInt t = a % b;
    a = b;
    b = t;
  }
  return a;
}

}  // namespace

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw NumericalError("rational with zero denominator");
  *this = reduce(num, den);
}

Rational Rational::reduce(WideInt num, WideInt den) {
  if (den == 0) throw NumericalError("rational division by zero");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const WideInt g = num == 0 ? den : gcd128(num, den);
  num /= g;
  den /= g;
  constexpr auto lim = std::numeric_limits<std::int64_t>::max();
  if (num > lim || num < -lim || den > lim) throw NumericalError("rational overflow");
  return Rational(Raw{}, static_cast<std::int64_t>(num), static_cast<std::int64_t>(den));
}

std::string Rational::str() const {
  return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
}

Rational operator+(const Rational& x, const Rational& y) {
  return Rational::reduce(static_cast<WideInt>(x.num_) * y.den_ + static_cast<WideInt>(y.num_) * x.den_,
                          static_cast<WideInt>(x.den_) * y.den_);
}

Rational operator-(const Rational& x, const Rational& y) { return x + (-y); }

Rational operator*(const Rational& x, const Rational& y) {
  return Rational::reduce(static_cast<WideInt>(x.num_) * y.num_,
                          static_cast<WideInt>(x.den_) * y.den_);
}

Rational operator/(const Rational& x, const Rational& y) {
  if (y.num_ == 0) throw NumericalError("rational division by zero");
  return Rational::reduce(static_cast<WideInt>(x.num_) * y.den_,
                          static_cast<WideInt>(x.den_) * y.num_);
}

}  // namespace abelscale::detail
