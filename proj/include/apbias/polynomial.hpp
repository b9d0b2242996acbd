#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "apbias/modarith.hpp"

namespace apbias {

/// Dense univariate polynomial, coefficients in ascending degree, always trimmed.
template <class Coeff>
class Polynomial {
 public:
  static constexpr int zero_degree = std::numeric_limits<int>::min();

  Polynomial() = default;
  explicit Polynomial(std::vector<Coeff> coefficients) : c_(std::move(coefficients)) { trim(); }

  const std::vector<Coeff>& coefficients() const noexcept { return c_; }
  bool is_zero() const noexcept { return c_.empty(); }
  int degree() const noexcept { return c_.empty() ? zero_degree : static_cast<int>(c_.size()) - 1; }
  Coeff coefficient(std::size_t i) const { return i < c_.size() ? c_[i] : Coeff(0); }

  template <class Other>
  Polynomial<Other> cast() const {
    std::vector<Other> out(c_.begin(), c_.end());
    return Polynomial<Other>(std::move(out));
  }

  /// Coefficients reduced into [0, p).
  std::vector<residue> reduced(const PrimeModulus& p) const
    requires std::is_integral_v<Coeff>
  {
    std::vector<residue> out(c_.size());
    for (std::size_t i = 0; i < c_.size(); ++i) out[i] = p.reduce(static_cast<std::int64_t>(c_[i]));
    return out;
  }

  /// Value at t mod p (Horner over reduced coefficients).
  residue eval_mod(residue t, const PrimeModulus& p) const
    requires std::is_integral_v<Coeff>
  {
    return horner(reduced(p), t, p);
  }

  static residue horner(const std::vector<residue>& reduced, residue t, const PrimeModulus& p) noexcept {
    residue acc = 0;
    for (auto it = reduced.rbegin(); it != reduced.rend(); ++it) acc = p.add(p.mul(acc, t), *it);
    return acc;
  }

  friend Polynomial operator+(const Polynomial& a, const Polynomial& b) {
    std::vector<Coeff> out(std::max(a.c_.size(), b.c_.size()), Coeff(0));
    for (std::size_t i = 0; i < a.c_.size(); ++i) out[i] += a.c_[i];
    for (std::size_t i = 0; i < b.c_.size(); ++i) out[i] += b.c_[i];
    return Polynomial(std::move(out));
  }

  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    if (a.is_zero() || b.is_zero()) return {};
    std::vector<Coeff> out(a.c_.size() + b.c_.size() - 1, Coeff(0));
    for (std::size_t i = 0; i < a.c_.size(); ++i)
      for (std::size_t j = 0; j < b.c_.size(); ++j) out[i + j] += a.c_[i] * b.c_[j];
    return Polynomial(std::move(out));
  }

  friend Polynomial operator*(const Coeff& k, const Polynomial& a) {
    std::vector<Coeff> out(a.c_);
    for (auto& c : out) c *= k;
    return Polynomial(std::move(out));
  }

  friend bool operator==(const Polynomial&, const Polynomial&) = default;

  /// True iff a = c * b for some nonzero scalar c, or both are zero.
  friend bool proportional(const Polynomial& a, const Polynomial& b) {
    if (a.is_zero() || b.is_zero()) return a.is_zero() && b.is_zero();
    if (a.c_.size() != b.c_.size()) return false;
    // a_i * b_j == a_j * b_i for all i, j  <=>  rank-one
    std::size_t pivot = 0;
    while (a.c_[pivot] == Coeff(0) && b.c_[pivot] == Coeff(0)) ++pivot;
    for (std::size_t i = 0; i < a.c_.size(); ++i)
      if (a.c_[i] * b.c_[pivot] != a.c_[pivot] * b.c_[i]) return false;
    return a.c_[pivot] != Coeff(0) && b.c_[pivot] != Coeff(0);
  }

 private:
  void trim() {
    while (!c_.empty() && c_.back() == Coeff(0)) c_.pop_back();
  }

  std::vector<Coeff> c_;
};

using IntPolynomial = Polynomial<std::int64_t>;

}  // namespace apbias
