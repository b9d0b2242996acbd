#pragma once

/**
 * @file apstore.hpp
 * @brief Indexed binary database of reduced -a_p tables.
 *
 * Layout (little-endian, version 1):
 *
 *   header   "APDB" | u16 version = 1 | u16 flags = 0 | u64 p_max | u64 prime_count
 *   index    prime_count x (u64 p, u64 offset), ascending p
 *   blocks   u16 rep_count | rep_count x u64 rep | rep_count * p x i16 (-a_p, b ascending)
 *            | u16 sextic_count | sextic_count x (u64 b_rep, i16 value)
 *
 * The a = 0 class is implicit: zero unless p = 1 mod 3 and b != 0, in which
 * case the sextic section answers. The file is memory-mapped read-only, so
 * blocks are paged in on demand and a handle is safe to share across threads.
 */

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "apbias/apkernel.hpp"
#include "apbias/modarith.hpp"
#include "apbias/parallel.hpp"

static_assert(std::endian::native == std::endian::little, "apbias database I/O assumes a little-endian host");

namespace apbias {

inline constexpr std::array<char, 4> kMagic{'A', 'P', 'D', 'B'};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderSize = 24;
inline constexpr std::size_t kIndexEntrySize = 16;

class DatabaseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad magic, short header, or an index inconsistent with p_max.
class FormatError : public DatabaseError {
 public:
  using DatabaseError::DatabaseError;
};

class VersionError : public DatabaseError {
 public:
  explicit VersionError(std::uint16_t v)
      : DatabaseError("unsupported database version " + std::to_string(v)), version_(v) {}
  std::uint16_t version() const noexcept { return version_; }

 private:
  std::uint16_t version_;
};

class TruncatedBlockError : public DatabaseError {
 public:
  explicit TruncatedBlockError(std::uint64_t p)
      : DatabaseError("block for prime " + std::to_string(p) + " is truncated"), prime_(p) {}
  std::uint64_t prime() const noexcept { return prime_; }

 private:
  std::uint64_t prime_;
};

class PrimeNotFound : public DatabaseError {
 public:
  explicit PrimeNotFound(std::uint64_t p)
      : DatabaseError("prime " + std::to_string(p) + " is not in the database"), prime_(p) {}
  std::uint64_t prime() const noexcept { return prime_; }

 private:
  std::uint64_t prime_;
};

/// Size in bytes of the block for prime p.
constexpr std::uint64_t block_size(std::uint64_t p) noexcept {
  std::uint64_t reps = p % 4 == 1 ? 4 : 2;
  std::uint64_t sextic = p % 3 == 1 ? 6 : 0;
  return 2 + 8 * reps + 2 * reps * p + 2 + 10 * sextic;
}

namespace detail {

template <class T>
T load_le(const std::byte* at) noexcept {
  T v;
  std::memcpy(&v, at, sizeof(T));
  return v;
}

template <class T>
void put_le(std::vector<std::byte>& out, T v) {
  auto at = out.size();
  out.resize(at + sizeof(T));
  std::memcpy(out.data() + at, &v, sizeof(T));
}

inline std::vector<std::byte> encode_block(const PrimeTable& t) {
  std::vector<std::byte> out;
  out.reserve(block_size(t.p()));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.quartic_reps().size()));
  for (auto r : t.quartic_reps()) put_le<std::uint64_t>(out, r);
  auto at = out.size();
  out.resize(at + t.values().size_bytes());
  std::memcpy(out.data() + at, t.values().data(), t.values().size_bytes());
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.sextic_reps().size()));
  for (std::size_t j = 0; j < t.sextic_reps().size(); ++j) {
    put_le<std::uint64_t>(out, t.sextic_reps()[j]);
    put_le<std::int16_t>(out, t.sextic_values()[j]);
  }
  return out;
}

class MappedFile {
 public:
  explicit MappedFile(const std::filesystem::path& path) {
    int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) throw std::system_error(errno, std::generic_category(), "cannot open " + path.string());
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
      int err = errno;
      ::close(fd);
      throw std::system_error(err, std::generic_category(), "cannot stat " + path.string());
    }
    size_ = static_cast<std::size_t>(st.st_size);
    if (size_ > 0) {
      void* p = ::mmap(nullptr, size_, PROT_READ, MAP_SHARED, fd, 0);
      if (p == MAP_FAILED) {
        int err = errno;
        ::close(fd);
        throw std::system_error(err, std::generic_category(), "cannot map " + path.string());
      }
      data_ = static_cast<const std::byte*>(p);
    }
    ::close(fd);
  }
  ~MappedFile() {
    if (data_) ::munmap(const_cast<std::byte*>(data_), size_);
  }
  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;

  const std::byte* data() const noexcept { return data_; }
  std::size_t size() const noexcept { return size_; }

 private:
  const std::byte* data_ = nullptr;
  std::size_t size_ = 0;
};

}  // namespace detail

/// Result of reducing (A, B) to a stored entry.
struct LookupReduction {
  enum class Kind { quartic, sextic, zero };
  Kind kind = Kind::zero;
  std::size_t slot = 0;       // quartic row slot or sextic class index
  residue rep_a = 0;          // stored quartic rep (quartic kind)
  residue reduced_b = 0;      // b in [0, p) (quartic kind) or stored sextic rep
};

/// One prime's block as read from the mapping. Spans point into the file.
class PrimeBlock {
 public:
  PrimeBlock(PrimeModulus p, std::vector<residue> quartic, std::span<const std::int16_t> values,
             std::vector<residue> sextic, std::vector<std::int16_t> sextic_values)
      : modulus_(p),
        quartic_(std::move(quartic)),
        values_(values),
        sextic_(std::move(sextic)),
        sextic_values_(std::move(sextic_values)) {}

  const PrimeModulus& modulus() const noexcept { return modulus_; }
  std::uint64_t p() const noexcept { return modulus_.value(); }
  TableView view() const& noexcept { return {&modulus_, quartic_, values_, sextic_, sextic_values_}; }
  TableView view() const&& = delete;

 private:
  PrimeModulus modulus_;
  std::vector<residue> quartic_;
  std::span<const std::int16_t> values_;
  std::vector<residue> sextic_;
  std::vector<std::int16_t> sextic_values_;
};

/**
 * Maps (A, B) to the stored representative following the table layout.
 * For A != 0 the candidates a = 1, 2, ... are scanned for the first with
 * A/a a fourth power, l = (A/a)^(1/4) and b' = B l^-6. The scan is capped at
 * 2 * classes^2 candidates; overrunning it, or landing on a candidate that is
 * not stored, means the table is corrupt.
 */
inline LookupReduction reduce(const TableView& t, residue A, residue B) {
  const auto& p = *t.modulus;
  A %= p.value();
  B %= p.value();
  LookupReduction r;
  if (A == 0) {
    if (B == 0 || p.mod3() != 1) return r;
    r.kind = LookupReduction::Kind::sextic;
    for (std::size_t j = 0; j < t.sextic_reps.size(); ++j) {
      if (is_kth_power(p.mul(B, mod_inv(t.sextic_reps[j], p)), 6, p)) {
        r.slot = j;
        r.reduced_b = t.sextic_reps[j];
        return r;
      }
    }
    throw DatabaseError("no sextic class found for b=" + std::to_string(B) + " mod " + std::to_string(p.value()));
  }
  const std::size_t classes = t.quartic_reps.size() + 1;
  const std::size_t cap = 2 * classes * classes;
  for (residue a = 1; a <= cap && a < p.value(); ++a) {
    residue q = p.mul(A, mod_inv(a, p));
    if (!is_kth_power(q, 4, p)) continue;
    auto it = std::find(t.quartic_reps.begin(), t.quartic_reps.end(), a);
    if (it == t.quartic_reps.end())
      throw DatabaseError("quartic class of " + std::to_string(A) + " mod " + std::to_string(p.value()) +
                          " resolves to unstored candidate " + std::to_string(a));
    residue l = kth_root(q, 4, p);
    residue l6 = mod_pow(l, 6, p);
    r.kind = LookupReduction::Kind::quartic;
    r.slot = static_cast<std::size_t>(it - t.quartic_reps.begin());
    r.rep_a = a;
    r.reduced_b = p.mul(B, mod_inv(l6, p));
    return r;
  }
  throw DatabaseError("quartic class scan exceeded cap for A=" + std::to_string(A) + " mod " +
                      std::to_string(p.value()));
}

inline std::int64_t read_reduced(const TableView& t, const LookupReduction& r) {
  switch (r.kind) {
    case LookupReduction::Kind::zero: return 0;
    case LookupReduction::Kind::sextic: return t.sextic_values[r.slot];
    case LookupReduction::Kind::quartic: return t.row(r.slot)[r.reduced_b];
  }
  return 0;
}

/**
 * Dense reduction tables for one prime: for every A != 0 the row slot and the
 * multiplier l^-6, and for every B != 0 its sextic class. O(p) to build; after
 * that each lookup is two array reads and one multiply. Agrees with reduce()
 * on every value (the chosen l may differ by a fourth root of unity, which
 * maps b' to +-b', and rows are symmetric under b -> -b in that case).
 * Holds a view: the table it was built from must outlive it.
 */
class ReductionIndex {
 public:
  explicit ReductionIndex(const TableView& t) : view_(t), p_(t.p()) {
    const auto& p = *t.modulus;
    const auto m = p_;
    slot_.assign(m, 0);
    scale_.assign(m, 0);
    std::vector<std::uint32_t> inv(m, 0);
    inv[1] = 1;
    for (residue i = 2; i < m; ++i) inv[i] = static_cast<std::uint32_t>(m - (m / i) * inv[m % i] % m);
    std::vector<bool> seen(m, false);
    if (!t.sextic_reps.empty()) sextic_.assign(m, 0);
    for (residue l = 1; l < m; ++l) {
      residue l2 = p.mul(l, l);
      residue l4 = p.mul(l2, l2);
      residue il = inv[l];
      residue il2 = p.mul(il, il);
      residue il6 = p.mul(p.mul(il2, il2), il2);
      for (std::size_t s = 0; s < t.quartic_reps.size(); ++s) {
        residue A = p.mul(t.quartic_reps[s], l4);
        if (!seen[A]) {
          seen[A] = true;
          slot_[A] = static_cast<std::uint8_t>(s);
          scale_[A] = static_cast<std::uint32_t>(il6);
        }
      }
      if (!sextic_.empty()) {
        residue l6 = p.mul(l4, l2);
        for (std::size_t j = 0; j < t.sextic_reps.size(); ++j) sextic_[p.mul(t.sextic_reps[j], l6)] = static_cast<std::uint8_t>(j);
      }
    }
  }

  std::uint64_t p() const noexcept { return p_; }

  /// -a_p of y^2 = x^3 + Ax + B for A, B already reduced mod p.
  std::int64_t neg_ap(residue A, residue B) const noexcept {
    if (A == 0) {
      if (B == 0 || sextic_.empty()) return 0;
      return view_.sextic_values[sextic_[B]];
    }
    return view_.values[slot_[A] * p_ + B * scale_[A] % p_];
  }

 private:
  TableView view_;
  std::uint64_t p_;
  std::vector<std::uint8_t> slot_;
  std::vector<std::uint32_t> scale_;
  std::vector<std::uint8_t> sextic_;
};

/// Read-only handle on an .apdb file.
class ApDatabase {
 public:
  struct IndexEntry {
    std::uint64_t p;
    std::uint64_t offset;
  };

  explicit ApDatabase(const std::filesystem::path& path)
      : path_(path), file_(std::make_shared<detail::MappedFile>(path)) {
    const auto* base = file_->data();
    const auto size = file_->size();
    if (size < kHeaderSize || std::memcmp(base, kMagic.data(), kMagic.size()) != 0)
      throw FormatError(path.string() + ": not an apdb file (bad magic or short header)");
    auto version = detail::load_le<std::uint16_t>(base + 4);
    if (version != kFormatVersion) throw VersionError(version);
    auto flags = detail::load_le<std::uint16_t>(base + 6);
    if (flags != 0) throw FormatError(path.string() + ": unknown header flags");
    p_max_ = detail::load_le<std::uint64_t>(base + 8);
    auto count = detail::load_le<std::uint64_t>(base + 16);
    if (p_max_ < 3 || p_max_ > kMaxTablePrime) throw FormatError(path.string() + ": corrupt header (p_max)");
    auto expected = odd_primes_up_to(p_max_);
    if (count != expected.size()) throw FormatError(path.string() + ": corrupt header (prime count)");
    if (size < kHeaderSize + count * kIndexEntrySize) throw FormatError(path.string() + ": index truncated");

    std::vector<IndexEntry> index(count);
    std::uint64_t next_offset = kHeaderSize + count * kIndexEntrySize;
    for (std::size_t i = 0; i < count; ++i) {
      const auto* at = base + kHeaderSize + i * kIndexEntrySize;
      index[i] = {detail::load_le<std::uint64_t>(at), detail::load_le<std::uint64_t>(at + 8)};
      if (index[i].p != expected[i] || index[i].offset != next_offset)
        throw FormatError(path.string() + ": corrupt index entry " + std::to_string(i));
      next_offset += block_size(index[i].p);
    }
    for (const auto& e : index)
      if (e.offset + block_size(e.p) > size) throw TruncatedBlockError(e.p);
    index_ = std::move(index);
    moduli_.reserve(index_.size());
    for (const auto& e : index_) moduli_.emplace_back(e.p);
  }

  const std::filesystem::path& path() const noexcept { return path_; }
  std::uint64_t p_max() const noexcept { return p_max_; }
  std::size_t prime_count() const noexcept { return index_.size(); }
  const std::vector<IndexEntry>& index() const noexcept { return index_; }

  std::vector<std::uint64_t> primes() const {
    std::vector<std::uint64_t> out;
    out.reserve(index_.size());
    for (const auto& e : index_) out.push_back(e.p);
    return out;
  }

  bool contains(std::uint64_t p) const noexcept { return find(p) != index_.end(); }

  /// Parses the block for p; the value rows stay in the mapping.
  PrimeBlock block(std::uint64_t p) const {
    auto it = find(p);
    if (it == index_.end()) throw PrimeNotFound(p);
    const auto& modulus = moduli_[static_cast<std::size_t>(it - index_.begin())];
    const auto* at = file_->data() + it->offset;
    auto rep_count = detail::load_le<std::uint16_t>(at);
    if (rep_count != (p % 4 == 1 ? 4u : 2u)) throw FormatError("corrupt block header for prime " + std::to_string(p));
    at += 2;
    std::vector<residue> reps(rep_count);
    for (auto& r : reps) {
      r = detail::load_le<std::uint64_t>(at);
      at += 8;
    }
    std::span<const std::int16_t> values(reinterpret_cast<const std::int16_t*>(at), rep_count * p);
    at += values.size_bytes();
    auto sextic_count = detail::load_le<std::uint16_t>(at);
    if (sextic_count != (p % 3 == 1 ? 6u : 0u))
      throw FormatError("corrupt sextic section for prime " + std::to_string(p));
    at += 2;
    std::vector<residue> sextic(sextic_count);
    std::vector<std::int16_t> sextic_values(sextic_count);
    for (std::size_t j = 0; j < sextic_count; ++j) {
      sextic[j] = detail::load_le<std::uint64_t>(at);
      sextic_values[j] = detail::load_le<std::int16_t>(at + 8);
      at += 10;
    }
    return PrimeBlock(modulus, std::move(reps), values, std::move(sextic), std::move(sextic_values));
  }

  /// Raw bytes of the block for p, as written.
  std::span<const std::byte> block_bytes(std::uint64_t p) const {
    auto it = find(p);
    if (it == index_.end()) throw PrimeNotFound(p);
    return {file_->data() + it->offset, static_cast<std::size_t>(block_size(p))};
  }

  LookupReduction reduce(std::uint64_t p, residue A, residue B) const {
    auto b = block(p);
    return apbias::reduce(b.view(), A, B);
  }

  /// Stored -a_p for y^2 = x^3 + Ax + B over F_p.
  std::int64_t lookup_neg_ap(std::uint64_t p, residue A, residue B) const {
    auto b = block(p);
    auto r = apbias::reduce(b.view(), A, B);
    return read_reduced(b.view(), r);
  }

 private:
  std::vector<IndexEntry>::const_iterator find(std::uint64_t p) const noexcept {
    auto it = std::lower_bound(index_.begin(), index_.end(), p,
                               [](const IndexEntry& e, std::uint64_t v) { return e.p < v; });
    return it != index_.end() && it->p == p ? it : index_.end();
  }

  std::filesystem::path path_;
  std::shared_ptr<detail::MappedFile> file_;
  std::uint64_t p_max_ = 0;
  std::vector<IndexEntry> index_;
  std::vector<PrimeModulus> moduli_;
};

inline ApDatabase db_open(const std::filesystem::path& path) { return ApDatabase(path); }

struct BuildOptions {
  Kernel kernel = Kernel::naive;
  unsigned threads = default_thread_count();
  /// Called after each prime is written with (primes done, primes total).
  std::function<void(std::size_t, std::size_t)> progress;
};

/**
 * Builds every odd prime up to p_max and writes the database. Blocks are
 * computed in parallel batches and written in ascending order, so the file
 * does not depend on the thread count. Written to a temporary sibling and
 * renamed on success.
 */
inline ApDatabase db_create(const std::filesystem::path& path, std::uint64_t p_max, const BuildOptions& opts = {}) {
  if (p_max < 3) throw std::invalid_argument("p_max must be at least 3");
  if (p_max > kMaxTablePrime)
    throw std::invalid_argument("p_max " + std::to_string(p_max) + " exceeds the 16-bit trace bound");
  auto primes = odd_primes_up_to(p_max);

  std::vector<std::byte> head;
  head.insert(head.end(), reinterpret_cast<const std::byte*>(kMagic.data()),
              reinterpret_cast<const std::byte*>(kMagic.data()) + kMagic.size());
  detail::put_le<std::uint16_t>(head, kFormatVersion);
  detail::put_le<std::uint16_t>(head, 0);
  detail::put_le<std::uint64_t>(head, p_max);
  detail::put_le<std::uint64_t>(head, primes.size());
  std::uint64_t offset = kHeaderSize + primes.size() * kIndexEntrySize;
  for (auto p : primes) {
    detail::put_le<std::uint64_t>(head, p);
    detail::put_le<std::uint64_t>(head, offset);
    offset += block_size(p);
  }

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::system_error(errno, std::generic_category(), "cannot create " + tmp.string());
    out.write(reinterpret_cast<const char*>(head.data()), static_cast<std::streamsize>(head.size()));

    const unsigned threads = std::max(1u, opts.threads);
    const std::size_t batch = std::max<std::size_t>(4 * threads, 16);
    std::vector<std::vector<std::byte>> encoded;
    for (std::size_t start = 0; start < primes.size(); start += batch) {
      auto n = std::min(batch, primes.size() - start);
      encoded.assign(n, {});
      parallel_for(n, threads, [&](std::size_t i) {
        encoded[i] = detail::encode_block(build_prime_table(PrimeModulus(primes[start + i]), opts.kernel));
      });
      for (std::size_t i = 0; i < n; ++i) {
        out.write(reinterpret_cast<const char*>(encoded[i].data()), static_cast<std::streamsize>(encoded[i].size()));
        if (opts.progress) opts.progress(start + i + 1, primes.size());
      }
      if (!out) throw std::system_error(errno, std::generic_category(), "write failed for " + tmp.string());
    }
    out.close();
    if (!out) throw std::system_error(errno, std::generic_category(), "close failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
  return ApDatabase(path);
}

}  // namespace apbias
