#pragma once

// Exact cyclic correlation over Z_p via a power-of-two number-theoretic
// transform. Inputs of length p are zero-padded to a linear convolution of
// length >= 2p - 1 and folded back modulo p.

#include <bit>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace apbias::ntt {

/// 998244353 = 119 * 2^23 + 1, primitive root 3.
struct Field998244353 {
  using word = std::uint64_t;
  static constexpr word modulus = 998244353;
  static constexpr word generator = 3;
  static constexpr unsigned max_log2 = 23;

  static constexpr word mul(word a, word b) noexcept { return a * b % modulus; }
};

/// 2^64 - 2^32 + 1, primitive root 7, supports lengths up to 2^32.
struct FieldGoldilocks {
  using word = std::uint64_t;
  static constexpr word modulus = 0xFFFFFFFF00000001ULL;
  static constexpr word generator = 7;
  static constexpr unsigned max_log2 = 32;

  static constexpr word mul(word a, word b) noexcept {
    constexpr word epsilon = 0xFFFFFFFFULL;
    unsigned __int128 x = static_cast<unsigned __int128>(a) * b;
    word lo = static_cast<word>(x);
    word hi = static_cast<word>(x >> 64);
    word hi_hi = hi >> 32;
    word hi_lo = hi & epsilon;
    word t0 = lo - hi_hi;
    if (lo < hi_hi) t0 -= epsilon;
    word t1 = hi_lo * epsilon;
    word t2 = t0 + t1;
    if (t2 < t1) t2 += epsilon;
    return t2 >= modulus ? t2 - modulus : t2;
  }
};

template <class Field>
constexpr typename Field::word power(typename Field::word base, std::uint64_t exp) noexcept {
  typename Field::word result = 1;
  while (exp > 0) {
    if (exp & 1) result = Field::mul(result, base);
    base = Field::mul(base, base);
    exp >>= 1;
  }
  return result;
}

template <class Field>
class Transform {
 public:
  using word = typename Field::word;

  explicit Transform(std::size_t length) : n_(length), log2_(std::countr_zero(length)) {
    if (!std::has_single_bit(length) || log2_ > Field::max_log2)
      throw std::invalid_argument("unsupported transform length");
    // Twiddles for the stage with half-width h live contiguously at [h, 2h).
    roots_.assign(std::max<std::size_t>(n_, 2), 1);
    inv_roots_.assign(roots_.size(), 1);
    for (std::size_t half = 1; half < n_; half <<= 1) {
      word w = power<Field>(Field::generator, (Field::modulus - 1) / (2 * half));
      word iw = power<Field>(w, Field::modulus - 2);
      word x = 1, ix = 1;
      for (std::size_t k = 0; k < half; ++k) {
        roots_[half + k] = x;
        inv_roots_[half + k] = ix;
        x = Field::mul(x, w);
        ix = Field::mul(ix, iw);
      }
    }
    n_inv_ = power<Field>(static_cast<word>(n_ % Field::modulus), Field::modulus - 2);
  }

  std::size_t size() const noexcept { return n_; }

  void forward(std::vector<word>& a) const { run(a, roots_); }

  void inverse(std::vector<word>& a) const {
    run(a, inv_roots_);
    for (auto& x : a) x = Field::mul(x, n_inv_);
  }

 private:
  void run(std::vector<word>& a, const std::vector<word>& table) const {
    for (std::size_t i = 1, j = 0; i < n_; ++i) {
      std::size_t bit = n_ >> 1;
      for (; j & bit; bit >>= 1) j ^= bit;
      j ^= bit;
      if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t half = 1; half < n_; half <<= 1) {
      const word* tw = table.data() + half;
      for (std::size_t start = 0; start < n_; start += 2 * half) {
        word* lo = a.data() + start;
        word* hi = lo + half;
        for (std::size_t k = 0; k < half; ++k) {
          word u = lo[k];
          word v = Field::mul(hi[k], tw[k]);
          word s = u + v;
          lo[k] = s >= Field::modulus || s < u ? s - Field::modulus : s;
          hi[k] = u >= v ? u - v : u + (Field::modulus - v);
        }
      }
    }
  }

  std::size_t n_;
  unsigned log2_;
  std::vector<word> roots_;
  std::vector<word> inv_roots_;
  word n_inv_{1};
};

/// Computes r[b] = sum_u f(u) * g((b - u) mod m) for b in [0, m) exactly,
/// for a fixed signed kernel g. Each |r[b]| must stay below modulus / 2.
template <class Field>
class CyclicConvolver {
 public:
  using word = typename Field::word;

  explicit CyclicConvolver(std::span<const std::int64_t> kernel)
      : m_(kernel.size()), transform_(std::bit_ceil(2 * kernel.size())) {
    kernel_hat_ = encode(kernel);
    transform_.forward(kernel_hat_);
  }

  std::vector<std::int64_t> convolve(std::span<const std::int64_t> f) const {
    if (f.size() != m_) throw std::invalid_argument("length mismatch in cyclic convolution");
    auto buf = encode(f);
    transform_.forward(buf);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = Field::mul(buf[i], kernel_hat_[i]);
    transform_.inverse(buf);
    std::vector<std::int64_t> out(m_);
    for (std::size_t b = 0; b < m_; ++b) {
      word s = buf[b];
      if (b + m_ < buf.size()) {
        s += buf[b + m_];
        if (s >= Field::modulus || s < buf[b]) s -= Field::modulus;
      }
      out[b] = s > Field::modulus / 2 ? -static_cast<std::int64_t>(Field::modulus - s)
                                      : static_cast<std::int64_t>(s);
    }
    return out;
  }

  static constexpr std::size_t max_length() noexcept { return std::size_t{1} << (Field::max_log2 - 1); }

 private:
  std::vector<word> encode(std::span<const std::int64_t> v) const {
    std::vector<word> out(transform_.size(), 0);
    for (std::size_t i = 0; i < v.size(); ++i)
      out[i] = v[i] >= 0 ? static_cast<word>(v[i]) : Field::modulus - static_cast<word>(-v[i]);
    return out;
  }

  std::size_t m_;
  Transform<Field> transform_;
  std::vector<word> kernel_hat_;
};

}  // namespace apbias::ntt
