#pragma once

/**
 * @file modarith.hpp
 * @brief Exact arithmetic in F_p for odd primes p < 2^31.
 *
 * Residues are held in 64-bit words. Since p < 2^31 every product of two
 * reduced residues is below 2^62, so no intermediate ever overflows.
 *
 * Provides powering, inversion, the Legendre symbol, square roots
 * (exponent (p+1)/4 when p = 3 mod 4, Cipolla otherwise), k-th power
 * tests and roots, and the smallest-representative enumeration of the
 * quartic and sextic residue classes used to compress the trace tables.
 */

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace apbias {

using residue = std::uint64_t;

/// Largest modulus accepted anywhere in the library (exclusive).
inline constexpr std::uint64_t kModulusLimit = std::uint64_t{1} << 31;

namespace detail {

constexpr std::uint64_t pow_u64(std::uint64_t base, std::uint64_t exp, std::uint64_t m) {
  std::uint64_t result = 1 % m;
  base %= m;
  while (exp > 0) {
    if (exp & 1) result = result * base % m;
    base = base * base % m;
    exp >>= 1;
  }
  return result;
}

}  // namespace detail

/// Deterministic Miller-Rabin; bases {2, 7, 61} are exact for n < 2^32.
constexpr bool is_prime(std::uint64_t n) {
  if (n < 2) return false;
  for (std::uint64_t small : {2u, 3u, 5u, 7u, 11u, 13u, 61u}) {
    if (n == small) return true;
    if (n % small == 0) return false;
  }
  if (n >= (std::uint64_t{1} << 32)) {
    for (std::uint64_t d = 17; d * d <= n; d += 2)
      if (n % d == 0) return false;
    return true;
  }
  std::uint64_t d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  for (std::uint64_t a : {2u, 7u, 61u}) {
    std::uint64_t x = detail::pow_u64(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int r = 1; r < s; ++r) {
      x = x * x % n;
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

/// Odd primes 3 <= p <= limit in ascending order (sieve of Eratosthenes).
inline std::vector<std::uint64_t> odd_primes_up_to(std::uint64_t limit) {
  std::vector<std::uint64_t> primes;
  if (limit < 3) return primes;
  std::vector<bool> composite(limit + 1, false);
  for (std::uint64_t i = 3; i * i <= limit; i += 2)
    if (!composite[i])
      for (std::uint64_t j = i * i; j <= limit; j += 2 * i) composite[j] = true;
  for (std::uint64_t i = 3; i <= limit; i += 2)
    if (!composite[i]) primes.push_back(i);
  return primes;
}

/// An odd prime modulus below 2^31. Primality is checked on construction.
class PrimeModulus {
 public:
  explicit PrimeModulus(std::uint64_t p) : p_(p) {
    if (p < 3 || p % 2 == 0 || p >= kModulusLimit || !is_prime(p))
      throw std::invalid_argument("modulus " + std::to_string(p) +
                                  " is not an odd prime below 2^31");
  }

  constexpr std::uint64_t value() const noexcept { return p_; }
  constexpr unsigned mod4() const noexcept { return static_cast<unsigned>(p_ % 4); }
  constexpr unsigned mod3() const noexcept { return static_cast<unsigned>(p_ % 3); }

  constexpr residue reduce(std::int64_t x) const noexcept {
    auto r = x % static_cast<std::int64_t>(p_);
    return static_cast<residue>(r < 0 ? r + static_cast<std::int64_t>(p_) : r);
  }
  constexpr residue mul(residue a, residue b) const noexcept { return a * b % p_; }
  constexpr residue add(residue a, residue b) const noexcept {
    residue s = a + b;
    return s >= p_ ? s - p_ : s;
  }
  constexpr residue sub(residue a, residue b) const noexcept { return a >= b ? a - b : a + p_ - b; }
  constexpr residue neg(residue a) const noexcept { return a == 0 ? 0 : p_ - a; }

  friend constexpr bool operator==(const PrimeModulus&, const PrimeModulus&) = default;

 private:
  std::uint64_t p_;
};

/// x^e mod p by repeated squaring.
constexpr residue mod_pow(residue x, std::uint64_t e, const PrimeModulus& p) noexcept {
  return detail::pow_u64(x, e, p.value());
}

/// Multiplicative inverse via Fermat. Throws on x = 0.
inline residue mod_inv(residue x, const PrimeModulus& p) {
  if (x % p.value() == 0) throw std::domain_error("zero has no inverse mod " + std::to_string(p.value()));
  return mod_pow(x, p.value() - 2, p);
}

/// Legendre symbol (x/p) in {-1, 0, 1}, by Euler's criterion.
constexpr int legendre(residue x, const PrimeModulus& p) noexcept {
  x %= p.value();
  if (x == 0) return 0;
  return mod_pow(x, (p.value() - 1) / 2, p) == 1 ? 1 : -1;
}

namespace detail {

// Element u + v*w of F_p[w]/(w^2 - d).
struct QuadraticElement {
  residue u;
  residue v;
};

inline QuadraticElement quad_mul(QuadraticElement x, QuadraticElement y, residue d, const PrimeModulus& p) {
  residue uu = p.mul(x.u, y.u);
  residue vv = p.mul(p.mul(x.v, y.v), d);
  residue uv = p.add(p.mul(x.u, y.v), p.mul(x.v, y.u));
  return {p.add(uu, vv), uv};
}

// Cipolla: first a = 0, 1, 2, ... with a^2 - x a non-residue, then (a + w)^((p+1)/2).
inline residue cipolla(residue x, const PrimeModulus& p) {
  residue a = 0;
  residue d = 0;
  for (;; ++a) {
    d = p.sub(p.mul(a, a), x);
    if (legendre(d, p) == -1) break;
  }
  QuadraticElement result{1, 0};
  QuadraticElement base{a, 1};
  for (std::uint64_t e = (p.value() + 1) / 2; e > 0; e >>= 1) {
    if (e & 1) result = quad_mul(result, base, d, p);
    base = quad_mul(base, base, d, p);
  }
  return result.u;
}

}  // namespace detail

/// Square root of a quadratic residue; returns the root <= (p-1)/2.
inline residue sqrt_mod(residue x, const PrimeModulus& p) {
  x %= p.value();
  if (x == 0) return 0;
  if (legendre(x, p) != 1)
    throw std::domain_error(std::to_string(x) + " is not a square mod " + std::to_string(p.value()));
  residue s = p.mod4() == 3 ? mod_pow(x, (p.value() + 1) / 4, p) : detail::cipolla(x, p);
  return std::min(s, p.value() - s);
}

/// True iff x = y^k for some y in F_p. Supports k in {2, 4, 6}.
inline bool is_kth_power(residue x, unsigned k, const PrimeModulus& p) {
  if (k != 2 && k != 4 && k != 6) throw std::invalid_argument("k must be 2, 4 or 6");
  x %= p.value();
  if (x == 0) return true;
  auto g = std::gcd<std::uint64_t, std::uint64_t>(k, p.value() - 1);
  return mod_pow(x, (p.value() - 1) / g, p) == 1;
}

/// Some l with l^k = x for k in {2, 4}. For k = 4 the inner square root is
/// chosen to be itself a square (the smaller one when both are).
inline residue kth_root(residue x, unsigned k, const PrimeModulus& p) {
  if (k != 2 && k != 4) throw std::invalid_argument("kth_root supports k = 2 or 4");
  if (!is_kth_power(x, k, p))
    throw std::domain_error(std::to_string(x) + " is not a " + std::to_string(k) + "th power mod " +
                            std::to_string(p.value()));
  residue s = sqrt_mod(x, p);
  if (k == 2) return s;
  if (legendre(s, p) == -1) s = p.neg(s);
  return sqrt_mod(s, p);
}

/// Smallest positive representatives of the quartic and sextic residue classes.
struct ResidueClassReps {
  std::vector<residue> quartic;  // starts with 0
  std::vector<residue> sextic;   // six entries when p = 1 mod 3, else empty
};

namespace detail {

inline std::vector<residue> coset_reps(const PrimeModulus& p, unsigned k, std::size_t count) {
  std::vector<residue> reps;
  std::vector<residue> inverses;
  for (residue a = 1; reps.size() < count && a < p.value(); ++a) {
    bool fresh = true;
    for (residue inv : inverses) {
      if (is_kth_power(p.mul(a, inv), k, p)) {
        fresh = false;
        break;
      }
    }
    if (fresh) {
      reps.push_back(a);
      inverses.push_back(mod_inv(a, p));
    }
  }
  return reps;
}

}  // namespace detail

inline ResidueClassReps class_reps(const PrimeModulus& p) {
  ResidueClassReps reps;
  reps.quartic.push_back(0);
  auto nonzero = detail::coset_reps(p, 4, p.mod4() == 1 ? 4 : 2);
  reps.quartic.insert(reps.quartic.end(), nonzero.begin(), nonzero.end());
  if (p.mod3() == 1) reps.sextic = detail::coset_reps(p, 6, 6);
  return reps;
}

}  // namespace apbias
