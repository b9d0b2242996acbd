#pragma once

/**
 * @file families.hpp
 * @brief One-parameter families y^2 = x^3 + A(T)x + B(T) and their moments.
 *
 * For each prime p the n-th moment is the exact integer
 *
 *     A_n(p) = sum_{t=0}^{p-1} a_t(p)^n
 *
 * over every specialization t, singular ones included. Even orders 2n are
 * normalized two ways, with C_n the n-th Catalan number:
 *
 *     B_2n(p)  = (A_2n(p) / C_n - p^(n+1)) / p^(n+1/2)
 *     B'_2n(p) = (A_2n(p) - C_n p^(n+1)) / p^(n+1/2)  = C_n * B_2n(p)
 *
 * The numerator A_2n - C_n p^(n+1) is formed exactly in 128-bit integers;
 * only the final division is floating point.
 */

#include <boost/multiprecision/cpp_int.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "apbias/apstore.hpp"
#include "apbias/parallel.hpp"
#include "apbias/polynomial.hpp"

namespace apbias {

using int128 = __int128;
using BigPolynomial = Polynomial<boost::multiprecision::cpp_int>;

inline constexpr unsigned kMaxMomentOrder = 10;

inline std::string to_string(int128 v) {
  if (v == 0) return "0";
  bool negative = v < 0;
  unsigned __int128 u = negative ? static_cast<unsigned __int128>(-(v + 1)) + 1 : static_cast<unsigned __int128>(v);
  std::string digits;
  while (u > 0) {
    digits.push_back(static_cast<char>('0' + static_cast<int>(u % 10)));
    u /= 10;
  }
  if (negative) digits.push_back('-');
  return {digits.rbegin(), digits.rend()};
}

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

struct SurfaceFlags {
  bool is_singular_surface = false;
  bool has_constant_j = false;
};

/// Exact checks over Z: 4A^3 + 27B^2 == 0, and j = 1728 * 4A^3 / (4A^3 + 27B^2) constant.
inline SurfaceFlags surface_checks(const IntPolynomial& A, const IntPolynomial& B) {
  using boost::multiprecision::cpp_int;
  auto a = A.cast<cpp_int>();
  auto b = B.cast<cpp_int>();
  auto a3 = a * a * a;
  auto b2 = b * b;
  auto disc = cpp_int(4) * a3 + cpp_int(27) * b2;
  SurfaceFlags flags;
  flags.is_singular_surface = disc.is_zero();
  flags.has_constant_j = a.is_zero() || b.is_zero() || proportional(a3, b2);
  return flags;
}

class Family {
 public:
  Family(IntPolynomial A, IntPolynomial B) : A_(std::move(A)), B_(std::move(B)) {
    using boost::multiprecision::cpp_int;
    auto a = A_.cast<cpp_int>();
    auto b = B_.cast<cpp_int>();
    disc_ = cpp_int(4) * (a * a * a) + cpp_int(27) * (b * b);
    flags_ = surface_checks(A_, B_);
  }

  const IntPolynomial& A() const noexcept { return A_; }
  const IntPolynomial& B() const noexcept { return B_; }
  const BigPolynomial& disc() const noexcept { return disc_; }
  bool is_singular_surface() const noexcept { return flags_.is_singular_surface; }
  bool has_constant_j() const noexcept { return flags_.has_constant_j; }
  SurfaceFlags flags() const noexcept { return flags_; }

  /// "c0,c1,...;d0,d1,..." with ascending coefficients; zero prints as "0".
  std::string spec() const { return side(A_) + ";" + side(B_); }

  friend bool operator==(const Family& x, const Family& y) { return x.A_ == y.A_ && x.B_ == y.B_; }

 private:
  static std::string side(const IntPolynomial& poly) {
    if (poly.is_zero()) return "0";
    std::string out;
    for (std::size_t i = 0; i < poly.coefficients().size(); ++i) {
      if (i) out += ',';
      out += std::to_string(poly.coefficients()[i]);
    }
    return out;
  }

  IntPolynomial A_;
  IntPolynomial B_;
  BigPolynomial disc_;
  SurfaceFlags flags_;
};

inline SurfaceFlags surface_checks(const Family& f) { return f.flags(); }

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
    s.remove_suffix(1);
  return s;
}

inline IntPolynomial parse_side(std::string_view text, const char* which) {
  text = trim(text);
  if (text.empty()) throw std::invalid_argument(std::string("family spec: empty ") + which + " polynomial");
  std::vector<std::int64_t> coeffs;
  while (true) {
    auto comma = text.find(',');
    auto token = trim(text.substr(0, comma));
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    std::int64_t v{};
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size())
      throw std::invalid_argument(std::string("family spec: malformed coefficient '") + std::string(token) +
                                  "' in " + which);
    coeffs.push_back(v);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return IntPolynomial(std::move(coeffs));
}

}  // namespace detail

/// Parses "c0,c1,...;d0,d1,..." (A before ';', B after, ascending degree).
inline Family parse_family(std::string_view spec) {
  auto semi = spec.find(';');
  if (semi == std::string_view::npos || spec.find(';', semi + 1) != std::string_view::npos)
    throw std::invalid_argument("family spec must have the form 'c0,c1,...;d0,d1,...'");
  auto A = detail::parse_side(spec.substr(0, semi), "A");
  auto B = detail::parse_side(spec.substr(semi + 1), "B");
  if (A.is_zero() && B.is_zero()) throw std::invalid_argument("family spec: both polynomials are zero");
  return Family(std::move(A), std::move(B));
}

/// (A(t) mod p, B(t) mod p).
inline std::pair<residue, residue> eval_family_mod(const Family& f, residue t, const PrimeModulus& p) {
  return {f.A().eval_mod(t, p), f.B().eval_mod(t, p)};
}

/// n-th Catalan number (2n)! / (n! (n+1)!).
constexpr std::uint64_t catalan(unsigned n) noexcept {
  std::uint64_t c = 1;
  for (unsigned k = 0; k < n; ++k) c = c * 2 * (2 * k + 1) / (k + 2);
  return c;
}

/// p^(n + 1/2) in double precision; shared by every normalization path.
inline double half_power(std::uint64_t p, unsigned n) noexcept {
  return std::pow(static_cast<double>(p), static_cast<double>(n)) * std::sqrt(static_cast<double>(p));
}

struct NormalizedMoment {
  double b;        // B_2n
  double b_prime;  // B'_2n
};

/// (B_2n, B'_2n) from the raw even moment A_2n(p). Odd orders are rejected.
inline NormalizedMoment normalized_moment(int128 raw, unsigned order, std::uint64_t p) {
  if (order == 0 || order % 2 != 0)
    throw std::invalid_argument("normalization is defined for even orders only (got " + std::to_string(order) + ")");
  const unsigned n = order / 2;
  const auto c = static_cast<int128>(catalan(n));
  int128 leading = c;
  bool overflow = false;
  for (unsigned k = 0; k < n + 1; ++k) overflow |= __builtin_mul_overflow(leading, static_cast<int128>(p), &leading);
  int128 numerator{};
  overflow |= __builtin_sub_overflow(raw, leading, &numerator);
  double b_prime;
  if (!overflow) {
    b_prime = static_cast<double>(numerator) / half_power(p, n);
  } else {
    auto lead = static_cast<long double>(catalan(n)) * std::pow(static_cast<long double>(p), n + 1);
    b_prime = static_cast<double>((static_cast<long double>(raw) - lead) /
                                  (std::pow(static_cast<long double>(p), n) * std::sqrt(static_cast<long double>(p))));
  }
  return {b_prime / static_cast<double>(c), b_prime};
}

/// B_2(p) = (A_2(p) - p^2) / p^(3/2).
inline double normalized_second_moment(int128 raw, std::uint64_t p) {
  return static_cast<double>(raw - static_cast<int128>(p) * static_cast<int128>(p)) / half_power(p, 1);
}

struct PrimeRange {
  std::uint64_t min = 3;
  std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
};

struct MomentRow {
  std::uint64_t p = 0;
  std::vector<int128> raw;            // parallel to MomentSeries::orders
  std::vector<std::optional<NormalizedMoment>> normalized;  // empty for odd orders
};

struct MomentSeries {
  Family family;
  std::vector<unsigned> orders;
  std::vector<MomentRow> rows;

  std::size_t order_slot(unsigned order) const {
    for (std::size_t i = 0; i < orders.size(); ++i)
      if (orders[i] == order) return i;
    throw std::invalid_argument("order " + std::to_string(order) + " not in series");
  }

  /// B_2n (or B'_2n) per prime for an even order in the series.
  std::vector<double> normalized_values(unsigned order, bool prime_variant = false) const {
    auto slot = order_slot(order);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
      const auto& nm = r.normalized.at(slot);
      if (!nm) throw std::invalid_argument("order " + std::to_string(order) + " has no normalization");
      out.push_back(prime_variant ? nm->b_prime : nm->b);
    }
    return out;
  }

  std::vector<std::uint64_t> primes() const {
    std::vector<std::uint64_t> out;
    for (const auto& r : rows) out.push_back(r.p);
    return out;
  }
};

namespace detail {

inline void check_orders(std::span<const unsigned> orders) {
  if (orders.empty()) throw std::invalid_argument("no moment orders requested");
  for (auto n : orders)
    if (n < 1 || n > kMaxMomentOrder)
      throw std::invalid_argument("moment order " + std::to_string(n) + " outside 1.." + std::to_string(kMaxMomentOrder));
}

// 2^n p^((n+2)/2) must stay below 2^126 for the accumulators.
inline void check_accumulator_range(unsigned max_order, std::uint64_t p) {
  double log2_bound = max_order + (max_order + 2) / 2.0 * std::log2(static_cast<double>(p));
  if (log2_bound >= 126) throw std::overflow_error("moment order too large for 128-bit accumulation at this prime");
}

// Raw moments of one family at one prime for orders 1..max_order.
inline std::vector<int128> power_sums(const Family& f, const ReductionIndex& index, const PrimeModulus& p,
                                      unsigned max_order) {
  auto a_coeffs = f.A().reduced(p);
  auto b_coeffs = f.B().reduced(p);
  std::vector<int128> sums(max_order, 0);
  for (residue t = 0; t < p.value(); ++t) {
    residue A = IntPolynomial::horner(a_coeffs, t, p);
    residue B = IntPolynomial::horner(b_coeffs, t, p);
    int128 a_t = -index.neg_ap(A, B);
    int128 pw = 1;
    for (unsigned k = 0; k < max_order; ++k) {
      pw *= a_t;
      sums[k] += pw;
    }
  }
  return sums;
}

inline MomentRow make_row(std::uint64_t p, std::span<const unsigned> orders, const std::vector<int128>& sums) {
  MomentRow row;
  row.p = p;
  for (auto n : orders) {
    row.raw.push_back(sums[n - 1]);
    if (n % 2 == 0)
      row.normalized.emplace_back(normalized_moment(sums[n - 1], n, p));
    else
      row.normalized.emplace_back(std::nullopt);
  }
  return row;
}

}  // namespace detail

/// A_n(p) for one family, order and prime.
inline int128 raw_moment(const ApDatabase& db, const Family& f, unsigned n, std::uint64_t p) {
  unsigned orders[] = {n};
  detail::check_orders(orders);
  detail::check_accumulator_range(n, p);
  auto block = db.block(p);
  ReductionIndex index(block.view());
  return detail::power_sums(f, index, block.modulus(), n)[n - 1];
}

/// The primes of db inside range with the first `skip` dropped.
inline std::vector<std::uint64_t> select_primes(const ApDatabase& db, PrimeRange range, std::size_t skip) {
  std::vector<std::uint64_t> out;
  for (const auto& e : db.index())
    if (e.p >= range.min && e.p <= range.max) out.push_back(e.p);
  if (skip >= out.size()) throw std::invalid_argument("no primes left in range after skipping " + std::to_string(skip));
  out.erase(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(skip));
  return out;
}

/**
 * Moment series for several families at once. Primes are processed in
 * parallel (one block and one reduction index per worker at a time); every
 * requested order comes out of a single pass over t.
 */
inline std::vector<MomentSeries> moment_series_batch(const ApDatabase& db, std::span<const Family> families,
                                                     std::span<const unsigned> orders, PrimeRange range,
                                                     std::size_t skip = 0, unsigned threads = 1) {
  detail::check_orders(orders);
  for (const auto& f : families)
    if (f.is_singular_surface()) throw std::invalid_argument("family " + f.spec() + " is a singular surface");
  auto primes = select_primes(db, range, skip);
  const unsigned max_order = *std::max_element(orders.begin(), orders.end());
  detail::check_accumulator_range(max_order, primes.back());

  std::vector<MomentSeries> out;
  for (const auto& f : families) {
    out.push_back({f, {orders.begin(), orders.end()}, {}});
    out.back().rows.resize(primes.size());
  }
  parallel_for(primes.size(), threads, [&](std::size_t i) {
    auto block = db.block(primes[i]);
    ReductionIndex index(block.view());
    for (std::size_t k = 0; k < families.size(); ++k)
      out[k].rows[i] = detail::make_row(primes[i], orders,
                                        detail::power_sums(families[k], index, block.modulus(), max_order));
  });
  return out;
}

inline MomentSeries moment_series(const ApDatabase& db, const Family& f, std::span<const unsigned> orders,
                                  PrimeRange range = {}, std::size_t skip = 0, unsigned threads = 1) {
  return std::move(moment_series_batch(db, std::span(&f, 1), orders, range, skip, threads).front());
}

/// CSV: p,n,raw,B,Bprime with one row per (prime, order); B columns empty for odd orders.
inline void write_series_csv(std::ostream& os, const MomentSeries& s) {
  os << "p,n,raw,B,Bprime\n";
  for (const auto& row : s.rows) {
    for (std::size_t i = 0; i < s.orders.size(); ++i) {
      os << row.p << ',' << s.orders[i] << ',' << to_string(row.raw[i]) << ',';
      if (row.normalized[i]) os << format_double(row.normalized[i]->b) << ',' << format_double(row.normalized[i]->b_prime);
      else os << ',';
      os << '\n';
    }
  }
}

}  // namespace apbias
