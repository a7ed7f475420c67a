#pragma once

#include <cstdint>
#include <string>

namespace abelscale::detail {

__extension__ typedef __int128 WideInt;

/// Exact fraction over 64-bit integers; arithmetic throws NumericalError on overflow.
class Rational {
 public:
  Rational(std::int64_t num = 0, std::int64_t den = 1);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  bool is_zero() const { return num_ == 0; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  std::string str() const;

  friend Rational operator+(const Rational& x, const Rational& y);
  friend Rational operator-(const Rational& x, const Rational& y);
  friend Rational operator*(const Rational& x, const Rational& y);
  friend Rational operator/(const Rational& x, const Rational& y);
  Rational operator-() const { return Rational(Raw{}, -num_, den_); }
  Rational& operator+=(const Rational& y) { return *this = *this + y; }
  Rational& operator-=(const Rational& y) { return *this = *this - y; }
  friend bool operator==(const Rational& x, const Rational& y) {
    return x.num_ == y.num_ && x.den_ == y.den_;
  }

 private:
  struct Raw {};
  Rational(Raw, std::int64_t num, std::int64_t den) : num_(num), den_(den) {}
  static Rational reduce(WideInt num, WideInt den);

  std::int64_t num_;
  std::int64_t den_;
};

}  // namespace abelscale::detail
