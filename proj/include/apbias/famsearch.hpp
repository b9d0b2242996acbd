#pragma once

// Exhaustive search over families with small coefficient sets for a
// persistently positive running average of B_2. Stage one keeps families
// whose prefix running average is positive at more than `threshold` of the
// primes up to filter_p_max; an optional stage two re-evaluates the
// survivors up to a larger bound.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "apbias/biasstats.hpp"
#include "apbias/families.hpp"
#include "apbias/parallel.hpp"

namespace apbias {

struct SearchConfig {
  unsigned max_degree = 5;
  std::vector<std::int64_t> coefficients{0, 1};
  std::uint64_t filter_p_max = 1000;
  double threshold = 0.95;
  std::optional<std::uint64_t> stage2_p_max;
  unsigned threads = default_thread_count();
  std::optional<std::filesystem::path> checkpoint;
  std::size_t chunk_size = 32;
};

struct StageResult {
  double fraction_positive = 0;
  double final_run_avg = 0;
  double final_log_avg = 0;
  bool pass = false;
};

struct SearchResult {
  Family family;
  StageResult stage1;
  std::optional<StageResult> stage2;

  const StageResult& final_stage() const noexcept { return stage2 ? *stage2 : stage1; }
};

struct SearchReport {
  std::vector<SearchResult> passed;  // ranked by final running average, descending
  std::uint64_t raw_pairs = 0;       // coefficient pairs enumerated
  std::uint64_t candidates = 0;      // after dropping singular and constant-j families
  std::uint64_t resumed = 0;         // taken from the checkpoint instead of recomputed
};

namespace detail {

inline std::vector<std::vector<std::int64_t>> coefficient_vectors(const SearchConfig& cfg) {
  auto digits = cfg.coefficients;
  std::sort(digits.begin(), digits.end());
  digits.erase(std::unique(digits.begin(), digits.end()), digits.end());
  std::vector<std::vector<std::int64_t>> out;
  if (digits.empty()) return out;
  const std::size_t len = cfg.max_degree + 1;
  std::vector<std::size_t> odometer(len, 0);
  while (true) {
    std::vector<std::int64_t> v(len);
    for (std::size_t i = 0; i < len; ++i) v[i] = digits[odometer[i]];
    out.push_back(std::move(v));
    std::size_t pos = len;
    while (pos > 0 && ++odometer[pos - 1] == digits.size()) odometer[--pos] = 0;
    if (pos == 0) break;
  }
  return out;
}

}  // namespace detail

/**
 * Calls fn(family) for every (A, B) with coefficients from the set and degree
 * <= max_degree, A-major and lexicographic on (c0, c1, ...), skipping singular
 * surfaces and constant-j families. Returns the number of raw pairs.
 */
inline std::uint64_t enumerate_families(const SearchConfig& cfg, const std::function<void(const Family&)>& fn) {
  auto vectors = detail::coefficient_vectors(cfg);
  std::uint64_t pairs = 0;
  for (const auto& a : vectors) {
    for (const auto& b : vectors) {
      ++pairs;
      Family f{IntPolynomial(a), IntPolynomial(b)};
      if (f.is_singular_surface() || f.has_constant_j()) continue;
      fn(f);
    }
  }
  return pairs;
}

inline std::vector<Family> enumerate_families(const SearchConfig& cfg) {
  std::vector<Family> out;
  enumerate_families(cfg, [&](const Family& f) { out.push_back(f); });
  return out;
}

/// Fraction of prefixes with a strictly positive running average, and the final averages.
inline StageResult evaluate_stage(std::span<const SeriesPoint> b2, double threshold) {
  auto report = running_averages(b2);
  std::size_t positive = 0;
  for (const auto& row : report.rows)
    if (row.run_avg > 0) ++positive;
  StageResult r;
  r.fraction_positive = static_cast<double>(positive) / static_cast<double>(report.rows.size());
  r.final_run_avg = report.final_run_avg();
  r.final_log_avg = report.final_log_avg();
  r.pass = r.fraction_positive > threshold;
  return r;
}

inline std::vector<StageResult> bias_filter_batch(const ApDatabase& db, std::span<const Family> families,
                                                  std::uint64_t p_max, double threshold) {
  unsigned order[] = {2};
  auto series = moment_series_batch(db, families, order, {3, p_max}, 0, 1);
  std::vector<StageResult> out;
  for (const auto& s : series) out.push_back(evaluate_stage(series_points(s), threshold));
  return out;
}

inline SearchResult bias_filter(const ApDatabase& db, const Family& f, const SearchConfig& cfg) {
  if (f.is_singular_surface()) throw std::invalid_argument("family " + f.spec() + " is a singular surface");
  if (cfg.filter_p_max > db.p_max())
    throw std::invalid_argument("filter_p_max " + std::to_string(cfg.filter_p_max) + " exceeds database p_max");
  return {f, bias_filter_batch(db, std::span(&f, 1), cfg.filter_p_max, cfg.threshold).front(), std::nullopt};
}

/// Report/checkpoint row: "A;B",fraction_positive,final_run_avg,final_log_avg,pass
inline std::string search_row(const Family& f, const StageResult& r) {
  return "\"" + f.spec() + "\"," + format_double(r.fraction_positive) + "," + format_double(r.final_run_avg) + "," +
         format_double(r.final_log_avg) + "," + (r.pass ? "1" : "0");
}

inline void write_search_csv(std::ostream& os, const SearchReport& report) {
  os << "A_coeffs;B_coeffs,fraction_positive,final_run_avg,final_log_avg,pass\n";
  for (const auto& r : report.passed) os << search_row(r.family, r.final_stage()) << '\n';
}

/// Completed families from a checkpoint file, keyed by family spec.
inline std::map<std::string, StageResult> read_checkpoint(const std::filesystem::path& path) {
  std::map<std::string, StageResult> done;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.front() != '"') throw std::runtime_error("malformed checkpoint line: " + line);
    auto close = line.find('"', 1);
    if (close == std::string::npos || close + 1 >= line.size() || line[close + 1] != ',')
      throw std::runtime_error("malformed checkpoint line: " + line);
    auto spec = line.substr(1, close - 1);
    std::istringstream fields(line.substr(close + 2));
    std::string a, b, c, d;
    if (!std::getline(fields, a, ',') || !std::getline(fields, b, ',') || !std::getline(fields, c, ',') ||
        !std::getline(fields, d))
      throw std::runtime_error("malformed checkpoint line: " + line);
    done[spec] = {std::stod(a), std::stod(b), std::stod(c), d == "1"};
  }
  return done;
}

/**
 * Runs stage one over every enumerated family (in parallel chunks), then
 * stage two over the survivors when configured. With a checkpoint path,
 * each completed stage-one family is appended as a report row and families
 * already present are not recomputed. Output order does not depend on the
 * thread count.
 */
inline SearchReport search(const ApDatabase& db, const SearchConfig& cfg) {
  if (!(cfg.threshold > 0)) throw std::invalid_argument("threshold must be positive");
  if (cfg.filter_p_max < 3 || cfg.filter_p_max > db.p_max())
    throw std::invalid_argument("filter_p_max must lie in [3, database p_max]");
  if (cfg.stage2_p_max && (*cfg.stage2_p_max < 3 || *cfg.stage2_p_max > db.p_max()))
    throw std::invalid_argument("stage2_p_max must lie in [3, database p_max]");

  SearchReport report;
  std::vector<Family> families;
  report.raw_pairs = enumerate_families(cfg, [&](const Family& f) { families.push_back(f); });
  report.candidates = families.size();

  std::map<std::string, StageResult> done;
  if (cfg.checkpoint && std::filesystem::exists(*cfg.checkpoint)) done = read_checkpoint(*cfg.checkpoint);
  std::ofstream checkpoint;
  if (cfg.checkpoint) checkpoint.open(*cfg.checkpoint, std::ios::app);
  std::mutex checkpoint_mutex;

  std::vector<std::optional<StageResult>> stage1(families.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < families.size(); ++i) {
    if (auto it = done.find(families[i].spec()); it != done.end()) {
      stage1[i] = it->second;
      stage1[i]->pass = stage1[i]->fraction_positive > cfg.threshold;
      ++report.resumed;
    } else {
      todo.push_back(i);
    }
  }

  const std::size_t chunk = std::max<std::size_t>(1, cfg.chunk_size);
  const std::size_t chunks = (todo.size() + chunk - 1) / chunk;
  parallel_for(chunks, cfg.threads, [&](std::size_t c) {
    std::vector<Family> batch;
    for (std::size_t k = c * chunk; k < std::min(todo.size(), (c + 1) * chunk); ++k) batch.push_back(families[todo[k]]);
    auto results = bias_filter_batch(db, batch, cfg.filter_p_max, cfg.threshold);
    for (std::size_t k = 0; k < results.size(); ++k) stage1[todo[c * chunk + k]] = results[k];
    if (checkpoint.is_open()) {
      std::lock_guard lock(checkpoint_mutex);
      for (std::size_t k = 0; k < results.size(); ++k) checkpoint << search_row(batch[k], results[k]) << '\n';
      checkpoint.flush();
    }
  });

  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i < families.size(); ++i)
    if (stage1[i]->pass) survivors.push_back(i);

  std::vector<std::optional<StageResult>> stage2(families.size());
  if (cfg.stage2_p_max) {
    parallel_for(survivors.size(), cfg.threads, [&](std::size_t k) {
      auto i = survivors[k];
      stage2[i] = bias_filter_batch(db, std::span(&families[i], 1), *cfg.stage2_p_max, cfg.threshold).front();
    });
  }

  for (auto i : survivors) report.passed.push_back({families[i], *stage1[i], stage2[i]});
  std::stable_sort(report.passed.begin(), report.passed.end(), [](const SearchResult& a, const SearchResult& b) {
    return a.final_stage().final_run_avg > b.final_stage().final_run_avg;
  });
  return report;
}

}  // namespace apbias
