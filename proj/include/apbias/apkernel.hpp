#pragma once

/**
 * @file apkernel.hpp
 * @brief Per-prime tables of -a_p over isomorphism-class representatives.
 *
 * For y^2 = x^3 + ax + b over F_p (p odd),
 *
 *     -a_p = sum_{x in F_p} ( (x^3 + ax + b) / p ).
 *
 * The substitution (x, y) -> (l^2 x, l^3 y) maps (a, b) to (a l^-4, b l^-6)
 * without changing the point count, so one row of p values per nonzero
 * quartic class of a determines every curve with a != 0. For a = 0 the sum
 * vanishes unless p = 1 mod 3, where one value per sextic class of b is kept.
 * Stored count: (4p or 2p) + (6 or 0).
 *
 * Two kernels build the rows. The naive one sums table lookups, O(p^2) per
 * row. The convolution one writes row a as the cyclic correlation of the
 * value multiplicities of x -> x^3 + ax with the Legendre character and
 * evaluates it with an exact integer transform, O(p log p) per row.
 */

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "apbias/modarith.hpp"
#include "apbias/ntt.hpp"

namespace apbias {

/// Largest p for which 2*sqrt(p) fits a signed 16-bit value.
inline constexpr std::uint64_t kMaxTablePrime = 268402680;  // floor(32767^2 / 4)

enum class Kernel { naive, convolution };

inline std::string to_string(Kernel k) { return k == Kernel::naive ? "naive" : "convolution"; }

inline Kernel parse_kernel(const std::string& s) {
  if (s == "naive") return Kernel::naive;
  if (s == "convolution") return Kernel::convolution;
  throw std::invalid_argument("unknown kernel '" + s + "'");
}

/// (4p if p = 1 mod 4 else 2p) + (6 if p = 1 mod 3 else 0).
constexpr std::uint64_t expected_count(std::uint64_t p) noexcept {
  return (p % 4 == 1 ? 4 * p : 2 * p) + (p % 3 == 1 ? 6 : 0);
}

/// Non-owning view of one prime's reduced table.
struct TableView {
  const PrimeModulus* modulus = nullptr;
  std::span<const residue> quartic_reps;  // nonzero reps only
  std::span<const std::int16_t> values;   // quartic_reps.size() rows of p values
  std::span<const residue> sextic_reps;
  std::span<const std::int16_t> sextic_values;

  std::uint64_t p() const noexcept { return modulus->value(); }
  std::span<const std::int16_t> row(std::size_t slot) const { return values.subspan(slot * p(), p()); }
  std::size_t stored_count() const noexcept { return values.size() + sextic_values.size(); }
};

/// Owning per-prime table. Values are -a_p.
class PrimeTable {
 public:
  PrimeTable(PrimeModulus p, ResidueClassReps reps, std::vector<std::int16_t> rows,
             std::vector<std::int16_t> sextic_values)
      : modulus_(p),
        quartic_(reps.quartic.begin() + 1, reps.quartic.end()),
        sextic_(std::move(reps.sextic)),
        rows_(std::move(rows)),
        sextic_values_(std::move(sextic_values)) {
    if (rows_.size() != quartic_.size() * p.value() || sextic_values_.size() != sextic_.size())
      throw std::invalid_argument("table shape does not match residue class reps");
  }

  const PrimeModulus& modulus() const noexcept { return modulus_; }
  std::uint64_t p() const noexcept { return modulus_.value(); }
  std::span<const residue> quartic_reps() const noexcept { return quartic_; }
  std::span<const residue> sextic_reps() const noexcept { return sextic_; }
  std::span<const std::int16_t> values() const noexcept { return rows_; }
  std::span<std::int16_t> mutable_values() noexcept { return rows_; }
  std::span<const std::int16_t> sextic_values() const noexcept { return sextic_values_; }
  std::span<const std::int16_t> row(std::size_t slot) const { return view().row(slot); }
  std::size_t stored_count() const noexcept { return rows_.size() + sextic_values_.size(); }

  TableView view() const noexcept { return {&modulus_, quartic_, rows_, sextic_, sextic_values_}; }

  friend bool operator==(const PrimeTable& a, const PrimeTable& b) {
    return a.modulus_ == b.modulus_ && a.quartic_ == b.quartic_ && a.sextic_ == b.sextic_ &&
           a.rows_ == b.rows_ && a.sextic_values_ == b.sextic_values_;
  }

 private:
  PrimeModulus modulus_;
  std::vector<residue> quartic_;
  std::vector<residue> sextic_;
  std::vector<std::int16_t> rows_;
  std::vector<std::int16_t> sextic_values_;
};

/// -a_p of y^2 = x^3 + ax + b, defined for singular curves too.
inline std::int64_t trace_char_sum(residue a, residue b, const PrimeModulus& p) {
  const auto m = p.value();
  a %= m;
  b %= m;
  std::int64_t sum = 0;
  for (residue x = 0; x < m; ++x) {
    residue v = p.add(p.mul(p.mul(x, x), x), p.add(p.mul(a, x), b));
    sum += legendre(v, p);
  }
  return sum;
}

namespace detail {

// chi[v] for v in [0, 2p), so chi[g + b] needs no reduction when g, b < p.
inline std::vector<std::int8_t> doubled_character_table(const PrimeModulus& p) {
  const auto m = p.value();
  std::vector<std::int8_t> chi(2 * m, -1);
  chi[0] = chi[m] = 0;
  for (residue x = 1; x <= (m - 1) / 2; ++x) {
    residue sq = x * x % m;
    chi[sq] = chi[sq + m] = 1;
  }
  return chi;
}

inline std::vector<std::uint32_t> cubic_values(residue a, const PrimeModulus& p) {
  const auto m = p.value();
  std::vector<std::uint32_t> g(m);
  for (residue x = 0; x < m; ++x) g[x] = static_cast<std::uint32_t>(p.add(p.mul(p.mul(x, x), x), p.mul(a, x)));
  return g;
}

inline void naive_row(residue a, const PrimeModulus& p, std::span<const std::int8_t> chi,
                      std::span<std::int16_t> out) {
  const auto m = p.value();
  auto g = cubic_values(a, p);
  const std::int8_t* table = chi.data();
  for (residue b = 0; b < m; ++b) {
    const std::int8_t* shifted = table + b;
    std::int32_t sum = 0;
    for (residue x = 0; x < m; ++x) sum += shifted[g[x]];
    out[b] = static_cast<std::int16_t>(sum);
  }
}

template <class Field>
void convolution_rows(const PrimeModulus& p, std::span<const residue> reps, std::span<const std::int8_t> chi,
                      std::span<std::int16_t> out) {
  const auto m = p.value();
  std::vector<std::int64_t> kernel(chi.begin(), chi.begin() + static_cast<std::ptrdiff_t>(m));
  ntt::CyclicConvolver<Field> conv(kernel);
  std::vector<std::int64_t> reversed(m);
  for (std::size_t slot = 0; slot < reps.size(); ++slot) {
    // row[b] = sum_v N(v) chi(v + b) = sum_u N(-u) chi(b - u)
    std::fill(reversed.begin(), reversed.end(), 0);
    for (auto v : cubic_values(reps[slot], p)) ++reversed[v == 0 ? 0 : m - v];
    auto row = conv.convolve(reversed);
    for (residue b = 0; b < m; ++b) out[slot * m + b] = static_cast<std::int16_t>(row[b]);
  }
}

// Direct sum for one (a, b) using the doubled character table.
inline std::int64_t table_char_sum(residue a, residue b, const PrimeModulus& p, std::span<const std::int8_t> chi) {
  std::int64_t sum = 0;
  for (residue x = 0; x < p.value(); ++x) sum += chi[p.add(p.mul(p.mul(x, x), x), p.mul(a, x)) + b];
  return sum;
}

inline bool within_hasse(std::int64_t v, std::uint64_t p) noexcept {
  return static_cast<std::uint64_t>(v * v) <= 4 * p;
}

}  // namespace detail

/**
 * Builds the reduced table for one prime. Both kernels produce identical
 * output. The convolution result is checked against the Hasse bound and a
 * handful of direct re-derivations; any mismatch falls back to the naive
 * kernel.
 */
inline PrimeTable build_prime_table(const PrimeModulus& p, Kernel kernel = Kernel::naive) {
  const auto m = p.value();
  if (m > kMaxTablePrime)
    throw std::invalid_argument("prime " + std::to_string(m) + " exceeds the 16-bit trace bound");
  auto reps = class_reps(p);
  std::span<const residue> nonzero(reps.quartic.begin() + 1, reps.quartic.end());
  auto chi = detail::doubled_character_table(p);
  std::vector<std::int16_t> rows(nonzero.size() * m);

  bool done = false;
  if (kernel == Kernel::convolution) {
    if (std::bit_ceil(2 * m) <= (std::size_t{1} << ntt::Field998244353::max_log2))
      detail::convolution_rows<ntt::Field998244353>(p, nonzero, chi, rows);
    else
      detail::convolution_rows<ntt::FieldGoldilocks>(p, nonzero, chi, rows);
    done = true;
    for (auto v : rows)
      if (!detail::within_hasse(v, m)) done = false;
    for (std::size_t slot = 0; done && slot < nonzero.size(); ++slot)
      for (residue b : {residue{0}, residue{1}, m / 2, m - 1})
        if (rows[slot * m + b] != detail::table_char_sum(nonzero[slot], b, p, chi)) done = false;
  }
  if (!done)
    for (std::size_t slot = 0; slot < nonzero.size(); ++slot)
      detail::naive_row(nonzero[slot], p, chi, std::span(rows).subspan(slot * m, m));

  std::vector<std::int16_t> sextic;
  for (residue b : reps.sextic) sextic.push_back(static_cast<std::int16_t>(trace_char_sum(0, b, p)));
  return PrimeTable(p, std::move(reps), std::move(rows), std::move(sextic));
}

inline PrimeTable build_prime_table(std::uint64_t p, Kernel kernel = Kernel::naive) {
  return build_prime_table(PrimeModulus(p), kernel);
}

struct VerificationReport {
  bool ok = true;
  std::string failure;  // first counterexample, empty when ok
  std::size_t checked_samples = 0;

  explicit operator bool() const noexcept { return ok; }
};

/**
 * Structural and sampled checks on a table: storage count, Hasse bound on
 * every entry, b <-> -b symmetry of each row when p = 1 mod 4, and
 * sample_size entries re-derived from the character sum (all entries when
 * sample_size covers the table). Sampling uses a fixed seed.
 */
inline VerificationReport verify_table(const TableView& t, std::size_t sample_size, std::uint64_t seed = 0x5eed) {
  VerificationReport report;
  const auto m = t.p();
  auto fail = [&](const std::string& what) {
    report.ok = false;
    report.failure = "p=" + std::to_string(m) + ": " + what;
    return report;
  };
  if (t.stored_count() != expected_count(m))
    return fail("stored count " + std::to_string(t.stored_count()) + " != " + std::to_string(expected_count(m)));
  auto reps = class_reps(*t.modulus);
  if (!std::equal(t.quartic_reps.begin(), t.quartic_reps.end(), reps.quartic.begin() + 1, reps.quartic.end()) ||
      !std::equal(t.sextic_reps.begin(), t.sextic_reps.end(), reps.sextic.begin(), reps.sextic.end()))
    return fail("residue class representatives differ from the canonical ones");

  auto check_hasse = [&](std::span<const std::int16_t> vs, const char* where) -> bool {
    for (std::size_t i = 0; i < vs.size(); ++i)
      if (!detail::within_hasse(vs[i], m)) {
        fail(std::string("Hasse bound violated in ") + where + " at index " + std::to_string(i) +
             " (value " + std::to_string(vs[i]) + ")");
        return false;
      }
    return true;
  };
  if (!check_hasse(t.values, "rows") || !check_hasse(t.sextic_values, "sextic entries")) return report;

  if (m % 4 == 1) {
    for (std::size_t slot = 0; slot < t.quartic_reps.size(); ++slot) {
      auto row = t.row(slot);
      for (residue b = 1; b < m; ++b)
        if (row[b] != row[m - b])
          return fail("symmetry b <-> -b broken for a=" + std::to_string(t.quartic_reps[slot]) +
                      " b=" + std::to_string(b));
    }
  }

  auto derive = [&](std::size_t index) -> std::optional<std::string> {
    if (index < t.values.size()) {
      auto slot = index / m;
      residue b = index % m;
      auto want = trace_char_sum(t.quartic_reps[slot], b, *t.modulus);
      if (t.values[index] != want)
        return "a=" + std::to_string(t.quartic_reps[slot]) + " b=" + std::to_string(b) + " stored " +
               std::to_string(t.values[index]) + " expected " + std::to_string(want);
    } else {
      auto j = index - t.values.size();
      auto want = trace_char_sum(0, t.sextic_reps[j], *t.modulus);
      if (t.sextic_values[j] != want)
        return "sextic b=" + std::to_string(t.sextic_reps[j]) + " stored " + std::to_string(t.sextic_values[j]) +
               " expected " + std::to_string(want);
    }
    return std::nullopt;
  };

  const std::size_t total = t.stored_count();
  if (sample_size >= total) {
    for (std::size_t i = 0; i < total; ++i)
      if (auto err = derive(i)) return fail(*err);
    report.checked_samples = total;
  } else {
    std::mt19937_64 rng(seed ^ m);
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    for (std::size_t s = 0; s < sample_size; ++s)
      if (auto err = derive(pick(rng))) return fail(*err);
    report.checked_samples = sample_size;
  }
  return report;
}

inline VerificationReport verify_table(const PrimeTable& t, std::size_t sample_size) {
  return verify_table(t.view(), sample_size);
}

}  // namespace apbias
