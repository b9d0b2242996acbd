#include <gtest/gtest.h>

#include <random>
#include <set>

#include "apbias/modarith.hpp"
#include "test_support.hpp"

using namespace apbias;

namespace {

bool trial_division_prime(std::uint64_t n) {
  if (n < 2) return false;
  for (std::uint64_t d = 2; d * d <= n; ++d)
    if (n % d == 0) return false;
  return true;
}

std::vector<std::uint64_t> primes_to(std::uint64_t n) { return odd_primes_up_to(n); }

}  // namespace

TEST(Primes, MillerRabinMatchesTrialDivision) {
  for (std::uint64_t n = 0; n < 20000; ++n) ASSERT_EQ(is_prime(n), trial_division_prime(n)) << n;
  EXPECT_TRUE(is_prime(2147483647));
  EXPECT_FALSE(is_prime(3215031751ULL));  // strong pseudoprime to 2, 3, 5, 7
}

TEST(Primes, SieveListsOddPrimesOnly) {
  auto ps = odd_primes_up_to(30);
  EXPECT_EQ(ps, (std::vector<std::uint64_t>{3, 5, 7, 11, 13, 17, 19, 23, 29}));
  EXPECT_TRUE(odd_primes_up_to(2).empty());
  EXPECT_EQ(odd_primes_up_to(5003).back(), 5003u);
  EXPECT_EQ(odd_primes_up_to(50000).size(), 5132u);
}

TEST(PrimeModulus, RejectsInvalidModuli) {
  EXPECT_THROW(PrimeModulus(2), std::invalid_argument);
  EXPECT_THROW(PrimeModulus(9), std::invalid_argument);
  EXPECT_THROW(PrimeModulus(1), std::invalid_argument);
  EXPECT_THROW(PrimeModulus(2147483659ULL), std::invalid_argument);  // prime, but >= 2^31
  EXPECT_NO_THROW(PrimeModulus(2147483647ULL));
}

TEST(PrimeModulus, ArithmeticAndReduction) {
  PrimeModulus p(13);
  EXPECT_EQ(p.reduce(-1), 12u);
  EXPECT_EQ(p.reduce(-26), 0u);
  EXPECT_EQ(p.reduce(40), 1u);
  EXPECT_EQ(p.add(12, 5), 4u);
  EXPECT_EQ(p.sub(3, 5), 11u);
  EXPECT_EQ(p.neg(0), 0u);
  EXPECT_EQ(p.mul(7, 9), 11u);
  EXPECT_EQ(p.mod4(), 1u);
  EXPECT_EQ(p.mod3(), 1u);

  PrimeModulus big(2147483647ULL);
  EXPECT_EQ(big.mul(big.value() - 1, big.value() - 1), 1u);
}

TEST(ModInverse, InvertsEveryUnit) {
  for (auto q : primes_to(211)) {
    PrimeModulus p(q);
    for (residue x = 1; x < q; ++x) ASSERT_EQ(p.mul(x, mod_inv(x, p)), 1u);
    EXPECT_THROW(mod_inv(0, p), std::domain_error);
    EXPECT_THROW(mod_inv(q, p), std::domain_error);
  }
}

TEST(Legendre, MatchesEnumerationOfSquares) {
  for (auto q : primes_to(101)) {
    PrimeModulus p(q);
    auto chi = testkit::brute_legendre_table(q);
    for (residue x = 0; x < q; ++x) ASSERT_EQ(legendre(x, p), chi[x]) << "p=" << q << " x=" << x;
  }
}

TEST(SqrtMod, SquaresBackToInputWithSmallRoot) {
  std::mt19937_64 rng(7);
  for (auto q : primes_to(10007)) {
    PrimeModulus p(q);
    std::uniform_int_distribution<residue> pick(1, q - 1);
    for (int i = 0; i < 10000; ++i) {
      residue y = pick(rng);
      residue x = p.mul(y, y);
      residue r = sqrt_mod(x, p);
      ASSERT_EQ(p.mul(r, r), x) << "p=" << q;
      ASSERT_LE(r, (q - 1) / 2) << "p=" << q;
    }
  }
}

TEST(SqrtMod, ZeroAndNonResidues) {
  PrimeModulus p(13);
  EXPECT_EQ(sqrt_mod(0, p), 0u);
  EXPECT_EQ(sqrt_mod(13, p), 0u);
  EXPECT_THROW(sqrt_mod(2, p), std::domain_error);
  // p = 1 mod 8 exercises Cipolla with several trial values.
  PrimeModulus q(17);
  EXPECT_EQ(sqrt_mod(2, q), 6u);
  EXPECT_EQ(sqrt_mod(16, q), 4u);
}

TEST(KthPower, AgreesWithEnumeration) {
  for (auto q : primes_to(101)) {
    PrimeModulus p(q);
    for (unsigned k : {2u, 4u, 6u}) {
      std::set<residue> powers;
      for (residue y = 0; y < q; ++y) powers.insert(mod_pow(y, k, p));
      for (residue x = 0; x < q; ++x)
        ASSERT_EQ(is_kth_power(x, k, p), powers.count(x) == 1) << "p=" << q << " k=" << k << " x=" << x;
    }
  }
  EXPECT_THROW(is_kth_power(1, 3, PrimeModulus(7)), std::invalid_argument);
}

TEST(KthRoot, ReturnsAValidRoot) {
  for (auto q : primes_to(1009)) {
    PrimeModulus p(q);
    for (unsigned k : {2u, 4u}) {
      for (residue x = 0; x < q; ++x) {
        if (!is_kth_power(x, k, p)) {
          EXPECT_THROW(kth_root(x, k, p), std::domain_error);
          continue;
        }
        ASSERT_EQ(mod_pow(kth_root(x, k, p), k, p), x) << "p=" << q << " k=" << k << " x=" << x;
      }
    }
  }
  EXPECT_THROW(kth_root(1, 6, PrimeModulus(7)), std::invalid_argument);
}

TEST(ClassReps, CosetsPartitionUnits) {
  for (auto q : primes_to(101)) {
    PrimeModulus p(q);
    auto reps = class_reps(p);
    ASSERT_FALSE(reps.quartic.empty());
    EXPECT_EQ(reps.quartic.front(), 0u);
    EXPECT_EQ(reps.quartic.size(), q % 4 == 1 ? 5u : 3u);
    EXPECT_EQ(reps.sextic.size(), q % 3 == 1 ? 6u : 0u);

    auto check = [&](std::span<const residue> nonzero, unsigned k) {
      std::vector<int> hits(q, 0);
      std::set<residue> kth;
      for (residue y = 1; y < q; ++y) kth.insert(mod_pow(y, k, p));
      for (auto r : nonzero)
        for (auto s : kth) ++hits[p.mul(r, s)];
      for (residue x = 1; x < q; ++x) ASSERT_EQ(hits[x], 1) << "p=" << q << " k=" << k << " x=" << x;
      // Smallest positive representative of each coset, in increasing order.
      for (std::size_t i = 0; i < nonzero.size(); ++i) {
        for (residue smaller = 1; smaller < nonzero[i]; ++smaller) {
          bool same_class = is_kth_power(p.mul(smaller, mod_inv(nonzero[i], p)), k, p);
          ASSERT_FALSE(same_class) << "p=" << q << " rep " << nonzero[i] << " is not minimal";
        }
      }
      EXPECT_TRUE(std::is_sorted(nonzero.begin(), nonzero.end()));
    };
    check(std::span(reps.quartic).subspan(1), 4);
    if (!reps.sextic.empty()) check(reps.sextic, 6);
  }
}

TEST(LegendreSums, LinearSumVanishes) {
  for (auto q : primes_to(101)) {
    PrimeModulus p(q);
    for (residue a = 1; a < q; ++a)
      for (residue b = 0; b < q; ++b) {
        int sum = 0;
        for (residue t = 0; t < q; ++t) sum += legendre(p.add(p.mul(a, t), b), p);
        ASSERT_EQ(sum, 0) << "p=" << q << " a=" << a << " b=" << b;
      }
  }
}

TEST(LegendreSums, QuadraticSumClosedForm) {
  // Exhaustive over a, b, c for small p; the acceptance run covers p <= 101.
  for (auto q : primes_to(43)) {
    PrimeModulus p(q);
    for (residue a = 1; a < q; ++a)
      for (residue b = 0; b < q; ++b)
        for (residue c = 0; c < q; ++c) {
          int sum = 0;
          for (residue t = 0; t < q; ++t) sum += legendre(p.add(p.mul(p.add(p.mul(a, t), b), t), c), p);
          residue disc = p.sub(p.mul(b, b), p.mul(4 % q, p.mul(a, c)));
          int expected = disc == 0 ? static_cast<int>(q - 1) * legendre(a, p) : -legendre(a, p);
          ASSERT_EQ(sum, expected) << "p=" << q << " a=" << a << " b=" << b << " c=" << c;
        }
  }
}
