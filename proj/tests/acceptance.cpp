// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [WORKDIR]
//
// Databases are built under WORKDIR (default: a fresh temp directory) and
// reused by later criteria. Exit status is 0 only if every criterion passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "apbias/apkernel.hpp"
#include "apbias/apstore.hpp"
#include "apbias/biasstats.hpp"
#include "apbias/families.hpp"
#include "apbias/famsearch.hpp"

using namespace apbias;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::filesystem::path workdir;

std::uint64_t fnv1a(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
    h ^= static_cast<unsigned char>(*it);
    h *= 0x100000001b3ULL;
  }
  return h;
}

const ApDatabase& database(std::uint64_t p_max, Kernel kernel) {
  static std::map<std::pair<std::uint64_t, Kernel>, std::unique_ptr<ApDatabase>> cache;
  auto key = std::pair{p_max, kernel};
  auto it = cache.find(key);
  if (it != cache.end()) return *it->second;
  auto path = workdir / ("db_" + std::to_string(p_max) + "_" + to_string(kernel) + ".apdb");
  auto start = std::chrono::steady_clock::now();
  db_create(path, p_max, {kernel, default_thread_count(), {}});
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("       built %s in %.1f s\n", path.filename().c_str(), secs);
  return *(cache[key] = std::make_unique<ApDatabase>(path));
}

std::vector<double> b2_values(const ApDatabase& db, const Family& f) {
  unsigned order[] = {2};
  return moment_series(db, f, order, {}, 0, default_thread_count()).normalized_values(2);
}

Outcome closed_form_second_moment() {
  const auto& db = database(5003, Kernel::naive);
  auto f = parse_family("1;0,0,0,1");
  unsigned order[] = {2};
  auto s = moment_series(db, f, order, {5, 5003}, 0, default_thread_count());
  std::size_t checked = 0;
  for (const auto& row : s.rows) {
    if (row.p % 3 != 2) continue;
    ++checked;
    if (row.raw[0] != static_cast<int128>(row.p) * row.p + row.p)
      return {false, "p=" + std::to_string(row.p) + " gives " + to_string(row.raw[0])};
  }
  return {checked > 0, std::to_string(checked) + " primes p = 2 mod 3 with A2 = p^2 + p"};
}

Outcome storage_and_hasse() {
  const auto& db = database(5003, Kernel::naive);
  std::size_t values = 0;
  for (auto p : db.primes()) {
    auto block = db.block(p);
    auto view = block.view();
    if (view.stored_count() != expected_count(p)) return {false, "stored count mismatch at p=" + std::to_string(p)};
    for (auto span : {view.values, view.sextic_values})
      for (std::int64_t v : span)
        if (static_cast<std::uint64_t>(v * v) > 4 * p) return {false, "Hasse violated at p=" + std::to_string(p)};
    values += view.stored_count();
  }
  return {true, std::to_string(db.prime_count()) + " primes, " + std::to_string(values) + " values"};
}

Outcome exhaustive_lookup() {
  const auto& db = database(5003, Kernel::naive);
  std::uint64_t pairs = 0;
  for (auto q : db.primes()) {
    if (q > 499) break;
    PrimeModulus p(q);
    for (residue A = 0; A < q; ++A)
      for (residue B = 0; B < q; ++B) {
        ++pairs;
        if (db.lookup_neg_ap(q, A, B) != trace_char_sum(A, B, p))
          return {false, "mismatch at p=" + std::to_string(q) + " A=" + std::to_string(A) + " B=" + std::to_string(B)};
      }
  }
  return {true, std::to_string(pairs) + " (p, A, B) triples"};
}

Outcome legendre_lemma() {
  std::uint64_t cases = 0;
  for (auto q : odd_primes_up_to(101)) {
    PrimeModulus p(q);
    std::vector<int> chi(2 * q);
    for (residue x = 0; x < 2 * q; ++x) chi[x] = legendre(x % q, p);
    std::vector<residue> lin(q);
    for (residue a = 1; a < q; ++a) {
      const int chi_a = legendre(a, p);
      for (residue b = 0; b < q; ++b) {
        int linear = 0;
        for (residue t = 0; t < q; ++t) {
          lin[t] = p.add(p.mul(p.mul(a, t), t), p.mul(b, t));
          linear += chi[p.add(p.mul(a, t), b)];
        }
        if (linear != 0) return {false, "linear sum nonzero at p=" + std::to_string(q)};
        for (residue c = 0; c < q; ++c) {
          int sum = 0;
          for (residue t = 0; t < q; ++t) sum += chi[lin[t] + c];
          bool degenerate = p.sub(p.mul(b, b), p.mul(p.reduce(4), p.mul(a, c))) == 0;
          int expected = degenerate ? static_cast<int>(q - 1) * chi_a : -chi_a;
          ++cases;
          if (sum != expected)
            return {false, "quadratic sum wrong at p=" + std::to_string(q) + " a=" + std::to_string(a) +
                               " b=" + std::to_string(b) + " c=" + std::to_string(c)};
        }
      }
    }
  }
  return {true, std::to_string(cases) + " (p, a, b, c) cases"};
}

Outcome kernel_equivalence() {
  std::size_t primes = 0;
  for (auto q : odd_primes_up_to(1009)) {
    ++primes;
    if (!(build_prime_table(q, Kernel::naive) == build_prime_table(q, Kernel::convolution)))
      return {false, "tables differ at p=" + std::to_string(q)};
  }
  return {true, std::to_string(primes) + " primes bit-identical"};
}

Outcome determinism() {
  auto one = workdir / "det_1.apdb", eight = workdir / "det_8.apdb";
  db_create(one, 2003, {Kernel::naive, 1, {}});
  db_create(eight, 2003, {Kernel::naive, 8, {}});
  auto a = fnv1a(one), b = fnv1a(eight);
  std::ostringstream os;
  os << "fnv1a " << std::hex << a << " vs " << b;
  return {a == b && std::filesystem::file_size(one) == std::filesystem::file_size(eight), os.str()};
}

Outcome variance_targets() {
  const auto& db = database(50000, Kernel::convolution);
  double v2 = population_variance(b2_values(db, parse_family("1,0,1,0,0,1;1")));
  double v1 = population_variance(b2_values(db, parse_family("1,1,0,1;0,0,1,0,1")));
  std::ostringstream os;
  os << "var(T^5+T^2+1; 1) = " << v2 << " in [1.6, 2.4], var(T^3+T+1; T^4+T^2) = " << v1 << " in [0.7, 1.3]";
  return {v2 >= 1.6 && v2 <= 2.4 && v1 >= 0.7 && v1 <= 1.3, os.str()};
}

Outcome search_replication() {
  const auto& db = database(5003, Kernel::naive);
  SearchConfig cfg;
  cfg.threads = default_thread_count();
  auto report = search(db, cfg);
  std::set<std::string> passed;
  for (const auto& r : report.passed) passed.insert(r.family.spec());
  const char* highlighted[] = {
      "0,1,0,1,0,1;1,1,1,1",
      "1,1,0,1,1,1;0,1,0,0,0,1",
      "1,1,0,0,0,1;1,1,1,1,1",
      "1,0,1,0,1;1,1,0,1",
      "1,0,1,0,1,1;0,0,1,0,1",
      "1,1,0,1;0,0,1,0,1",
  };
  int found = 0;
  std::string missing;
  for (auto spec : highlighted) {
    if (passed.count(parse_family(spec).spec())) ++found;
    else missing += std::string(" ") + spec;
  }
  bool control = passed.count("1;0,0,0,1") > 0;
  std::ostringstream os;
  os << found << "/6 highlighted families pass (" << report.passed.size() << " of " << report.candidates
     << " candidates)";
  if (!missing.empty()) os << ", missing:" << missing;
  os << ", x^3+x+T^3 " << (control ? "passes" : "does not pass");
  return {found >= 5 && !control, os.str()};
}

Outcome normalization_consistency() {
  const auto& db = database(5003, Kernel::naive);
  SearchConfig cfg;
  auto families = enumerate_families(cfg);
  auto primes = db.primes();
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<std::size_t> pick_f(0, families.size() - 1), pick_p(0, primes.size() - 1);
  unsigned orders[] = {2, 4, 6, 8, 10};
  double worst_ulps = 0;
  for (int i = 0; i < 100; ++i) {
    const auto& f = families[pick_f(rng)];
    auto p = primes[pick_p(rng)];
    auto row = moment_series(db, f, orders, {p, p}).rows.front();
    if (normalized_second_moment(row.raw[0], p) != row.normalized[0]->b)
      return {false, "B2 paths differ for " + f.spec() + " at p=" + std::to_string(p)};
    for (unsigned n = 1; n <= 5; ++n) {
      const auto& nm = *row.normalized[n - 1];
      double scaled = static_cast<double>(catalan(n)) * nm.b;
      double ulp = std::nextafter(std::abs(nm.b_prime), INFINITY) - std::abs(nm.b_prime);
      double err = std::abs(scaled - nm.b_prime) / ulp;
      worst_ulps = std::max(worst_ulps, err);
      if (err > 1)
        return {false, "B'_" + std::to_string(2 * n) + " off by " + std::to_string(err) + " ulp for " + f.spec() +
                           " at p=" + std::to_string(p)};
    }
  }
  return {true, "100 pairs, worst |C_n B - B'| = " + std::to_string(worst_ulps) + " ulp"};
}

Outcome sign_check() {
  const auto& db = database(50000, Kernel::convolution);
  unsigned order[] = {2};
  auto s = moment_series(db, parse_family("0,0,0,0,0,0,0,0,0,0,1;0,0,1,0,0,0,0,0,1"), order, {}, 0,
                         default_thread_count());
  auto report = running_averages(series_points(s));
  std::ostringstream os;
  os << "run_avg = " << report.final_run_avg() << ", log_avg = " << report.final_log_avg() << " at p = "
     << report.rows.back().p;
  return {report.final_run_avg() > 0 && report.final_log_avg() > 0, os.str()};
}

Outcome statistics_properties() {
  const auto& db = database(50000, Kernel::convolution);
  auto sample = b2_values(db, parse_family("1,1,0,1;0,0,1,0,1"));
  std::vector<std::string> failures;

  for (std::size_t buckets : {1u, 2u, 100u, 1000u}) {
    if (histogram(sample, buckets).total() != sample.size()) failures.push_back("histogram");
    if (histogram(sample, buckets, std::pair{-1.0, 1.0}).total() != sample.size()) failures.push_back("histogram");
  }

  auto fit = truncated_normal_fit(sample);
  auto ks = ks_statistic(sample, [fit](double x) { return fit.cdf(x); });
  if (ks.d < 0 || ks.d > 1 || ks.p_value < 0 || ks.p_value > 1) failures.push_back("ks range");
  double prev_p = 2;
  for (double d = 0; d <= 1; d += 0.001) {
    double q = kolmogorov_survival(std::sqrt(static_cast<double>(sample.size())) * d);
    if (q > prev_p) failures.push_back("ks monotonicity");
    prev_p = q;
  }

  const int n = 200000;
  double h = (fit.upper - fit.lower) / n;
  double simpson = fit.pdf(fit.lower) + fit.pdf(fit.upper);
  for (int i = 1; i < n; ++i) simpson += (i % 2 ? 4 : 2) * fit.pdf(fit.lower + i * h);
  double mass_err = std::abs(simpson * h / 3 - 1);
  if (mass_err > 1e-9) failures.push_back("truncated normal mass");

  auto trace = variance_trace(sample);
  double worst = 0;
  for (std::size_t k = 0; k < sample.size(); k += 97) {
    double m = 0, ss = 0;
    for (std::size_t i = 0; i <= k; ++i) m += sample[i];
    m /= static_cast<double>(k + 1);
    for (std::size_t i = 0; i <= k; ++i) ss += (sample[i] - m) * (sample[i] - m);
    double ref = ss / static_cast<double>(k + 1);
    worst = std::max(worst, std::abs(trace[k] - ref) / std::max(1.0, ref));
  }
  if (worst > 1e-12) failures.push_back("variance trace prefix");
  if (trace.back() != population_variance(sample)) failures.push_back("variance trace final");

  std::ostringstream os;
  os << sample.size() << " values; KS D = " << ks.d << ", |mass - 1| = " << mass_err << ", prefix var err = " << worst;
  for (const auto& f : failures) os << "; FAILED " << f;
  return {failures.empty(), os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  workdir = argc > 1 ? std::filesystem::path(argv[1])
                     : std::filesystem::temp_directory_path() / ("apbias_acceptance_" + std::to_string(::getpid()));
  std::filesystem::create_directories(workdir);

  struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {1, "closed-form second moment of x^3+x+T^3", closed_form_second_moment},
      {2, "storage formula and Hasse bound", storage_and_hasse},
      {3, "exhaustive lookup oracle, p <= 499", exhaustive_lookup},
      {4, "linear and quadratic Legendre sums, p <= 101", legendre_lemma},
      {5, "naive and convolution kernels agree, p <= 1009", kernel_equivalence},
      {6, "1 vs 8 build threads give identical files", determinism},
      {7, "variance targets at p_max 50000", variance_targets},
      {8, "family search replication", search_replication},
      {9, "flagship family running averages positive", sign_check},
      {10, "normalization consistency", normalization_consistency},
      {11, "statistics properties", statistics_properties},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failed;
    std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
  if (argc <= 1) std::filesystem::remove_all(workdir);
  return failed == 0 ? 0 : 1;
}
