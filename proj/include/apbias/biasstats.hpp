#pragma once

/**
 * @file biasstats.hpp
 * @brief Bias and distribution statistics over normalized moment series.
 *
 * Running averages at each prime P over 2 < p <= P:
 *
 *     unweighted:   (1 / N(P))   sum B(p)
 *     log-weighted: (1 / N_w(P)) sum B(p) log p,   N_w(P) = sum log p
 *
 * plus the first-moment rank statistic, prefix variances, histograms,
 * truncated-normal fits and Kolmogorov-Smirnov distances.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "apbias/families.hpp"

namespace apbias {

struct SeriesPoint {
  std::uint64_t p;
  double value;
};

/// Pairs each prime of a moment series with B_order (or B'_order).
inline std::vector<SeriesPoint> series_points(const MomentSeries& s, unsigned order = 2, bool prime_variant = false) {
  auto values = s.normalized_values(order, prime_variant);
  std::vector<SeriesPoint> out;
  out.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out.push_back({s.rows[i].p, values[i]});
  return out;
}

struct BiasRow {
  std::uint64_t p;
  double value;
  double run_avg;
  double log_avg;
};

struct BiasReport {
  std::vector<BiasRow> rows;

  double final_run_avg() const { return rows.back().run_avg; }
  double final_log_avg() const { return rows.back().log_avg; }
};

inline BiasReport running_averages(std::span<const SeriesPoint> series) {
  BiasReport report;
  double sum = 0;
  double weighted = 0;
  double weights = 0;
  std::size_t count = 0;
  for (const auto& pt : series) {
    if (pt.p <= 2) continue;
    if (!report.rows.empty() && pt.p <= report.rows.back().p)
      throw std::invalid_argument("series primes must be strictly ascending");
    double w = std::log(static_cast<double>(pt.p));
    sum += pt.value;
    weighted += pt.value * w;
    weights += w;
    ++count;
    report.rows.push_back({pt.p, pt.value, sum / static_cast<double>(count), weighted / weights});
  }
  if (report.rows.empty()) throw std::invalid_argument("running averages of an empty series");
  return report;
}

/// -(1/X) sum_{3 <= p <= X} A_1(p) log p / p, an estimate of the rank over Q(T).
inline double rank_statistic(std::span<const std::pair<std::uint64_t, int128>> first_moments, std::uint64_t X) {
  if (X < 3) throw std::invalid_argument("rank statistic needs X >= 3");
  double sum = 0;
  for (const auto& [p, a1] : first_moments)
    if (p >= 3 && p <= X) sum += static_cast<double>(a1) * std::log(static_cast<double>(p)) / static_cast<double>(p);
  return -sum / static_cast<double>(X);
}

inline double rank_statistic(const ApDatabase& db, const Family& f, std::uint64_t X, unsigned threads = 1) {
  if (X < 3) throw std::invalid_argument("rank statistic needs X >= 3");
  unsigned order[] = {1};
  auto s = moment_series(db, f, order, {3, X}, 0, threads);
  std::vector<std::pair<std::uint64_t, int128>> a1;
  for (const auto& r : s.rows) a1.emplace_back(r.p, r.raw[0]);
  return rank_statistic(a1, X);
}

/// Population variance of each prefix (Welford); a one-element prefix reports 0.
inline std::vector<double> variance_trace(std::span<const double> values) {
  std::vector<double> out;
  out.reserve(values.size());
  double mean = 0;
  double m2 = 0;
  std::size_t n = 0;
  for (double x : values) {
    ++n;
    double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
    out.push_back(m2 / static_cast<double>(n));
  }
  return out;
}

inline double mean(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean of an empty sample");
  double s = 0;
  for (double x : values) s += x;
  return s / static_cast<double>(values.size());
}

inline double population_variance(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("variance of an empty sample");
  return variance_trace(values).back();
}

struct Histogram {
  double low = 0;
  double high = 0;
  std::vector<std::size_t> counts;
  std::size_t underflow = 0;  // only with explicit bounds
  std::size_t overflow = 0;

  double bucket_low(std::size_t i) const { return low + (high - low) * static_cast<double>(i) / counts.size(); }
  double bucket_high(std::size_t i) const { return low + (high - low) * static_cast<double>(i + 1) / counts.size(); }
  std::size_t total() const {
    std::size_t t = underflow + overflow;
    for (auto c : counts) t += c;
    return t;
  }
};

/**
 * Equal-width buckets over [min, max] of the sample, or explicit bounds.
 * Values equal to the upper bound land in the last bucket. A degenerate
 * range collapses to one bucket holding everything.
 */
inline Histogram histogram(std::span<const double> sample, std::size_t bucket_count = 100,
                           std::optional<std::pair<double, double>> bounds = std::nullopt) {
  if (sample.empty()) throw std::invalid_argument("histogram of an empty sample");
  if (bucket_count == 0) throw std::invalid_argument("histogram needs at least one bucket");
  Histogram h;
  if (bounds) {
    std::tie(h.low, h.high) = *bounds;
    if (!(h.low <= h.high)) throw std::invalid_argument("histogram bounds must satisfy low <= high");
  } else {
    auto [lo, hi] = std::minmax_element(sample.begin(), sample.end());
    h.low = *lo;
    h.high = *hi;
  }
  if (h.low == h.high) {
    h.counts.assign(1, 0);
    for (double x : sample) {
      if (x < h.low) ++h.underflow;
      else if (x > h.high) ++h.overflow;
      else ++h.counts[0];
    }
    return h;
  }
  h.counts.assign(bucket_count, 0);
  const double width = h.high - h.low;
  for (double x : sample) {
    if (x < h.low) {
      ++h.underflow;
    } else if (x > h.high) {
      ++h.overflow;
    } else {
      auto i = static_cast<std::size_t>((x - h.low) / width * static_cast<double>(bucket_count));
      h.counts[std::min(i, bucket_count - 1)]++;
    }
  }
  return h;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi); }

/// Normal(mu, sigma) restricted to [lower, upper] and renormalized.
struct TruncatedNormal {
  double mu;
  double sigma;
  double lower;
  double upper;

  double mass() const { return normal_cdf((upper - mu) / sigma) - normal_cdf((lower - mu) / sigma); }

  double pdf(double x) const {
    if (x < lower || x > upper) return 0;
    return normal_pdf((x - mu) / sigma) / (sigma * mass());
  }

  double cdf(double x) const {
    if (x <= lower) return 0;
    if (x >= upper) return 1;
    return (normal_cdf((x - mu) / sigma) - normal_cdf((lower - mu) / sigma)) / mass();
  }

  double mean() const {
    double a = (lower - mu) / sigma, b = (upper - mu) / sigma;
    return mu + sigma * (normal_pdf(a) - normal_pdf(b)) / mass();
  }

  double variance() const {
    double a = (lower - mu) / sigma, b = (upper - mu) / sigma, z = mass();
    double r = (normal_pdf(a) - normal_pdf(b)) / z;
    return sigma * sigma * (1 + (a * normal_pdf(a) - b * normal_pdf(b)) / z - r * r);
  }
};

enum class FitMethod {
  parent,        // parent normal takes the sample mean and variance
  moment_match,  // solve for the parent so the truncated law matches them
};

/**
 * Truncated normal on [min, max] of the sample. With FitMethod::parent the
 * parent normal is given the sample mean and population standard deviation.
 * With FitMethod::moment_match a damped Newton iteration finds the parent
 * parameters whose truncation reproduces them.
 */
inline TruncatedNormal truncated_normal_fit(std::span<const double> sample, FitMethod method = FitMethod::parent) {
  if (sample.size() < 2) throw std::invalid_argument("truncated normal fit needs at least two points");
  double m = mean(sample);
  double v = population_variance(sample);
  if (!(v > 0)) throw std::invalid_argument("truncated normal fit needs nonzero variance");
  auto [lo, hi] = std::minmax_element(sample.begin(), sample.end());
  TruncatedNormal fit{m, std::sqrt(v), *lo, *hi};
  if (method == FitMethod::parent) return fit;

  if (v >= (fit.upper - fit.lower) * (fit.upper - fit.lower) / 12)
    throw std::domain_error("sample variance exceeds what any truncated normal on its range can reach");
  auto residual = [&](double mu, double log_sigma) {
    TruncatedNormal t{mu, std::exp(log_sigma), fit.lower, fit.upper};
    return std::pair{t.mean() - m, t.variance() - v};
  };
  double mu = fit.mu, ls = std::log(fit.sigma);
  for (int iter = 0; iter < 200; ++iter) {
    auto [f1, f2] = residual(mu, ls);
    if (std::abs(f1) < 1e-13 * (1 + std::abs(m)) && std::abs(f2) < 1e-13 * v) break;
    const double h = 1e-7;
    auto [a1, a2] = residual(mu + h, ls);
    auto [b1, b2] = residual(mu, ls + h);
    double j11 = (a1 - f1) / h, j21 = (a2 - f2) / h, j12 = (b1 - f1) / h, j22 = (b2 - f2) / h;
    double det = j11 * j22 - j12 * j21;
    if (det == 0 || !std::isfinite(det)) throw std::domain_error("moment-matched fit did not converge");
    double dmu = (f1 * j22 - f2 * j12) / det;
    double dls = (j11 * f2 - j21 * f1) / det;
    double step = 1;
    double norm0 = std::hypot(f1, f2 / std::max(v, 1e-300));
    while (step > 1e-6) {
      auto [g1, g2] = residual(mu - step * dmu, ls - step * dls);
      if (std::isfinite(g1) && std::isfinite(g2) && std::hypot(g1, g2 / std::max(v, 1e-300)) < norm0) break;
      step /= 2;
    }
    mu -= step * dmu;
    ls -= step * dls;
  }
  auto [r1, r2] = residual(mu, ls);
  if (std::abs(r1) > 1e-8 * (1 + std::abs(m)) || std::abs(r2) > 1e-8 * v)
    throw std::domain_error("moment-matched fit did not converge");
  return {mu, std::exp(ls), fit.lower, fit.upper};
}

/**
 * Survival function of the Kolmogorov distribution,
 * Q(l) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 l^2). For small l the
 * equivalent theta-function form 1 - sqrt(2 pi)/l sum exp(-(2k-1)^2 pi^2 / (8 l^2))
 * converges faster. Terms are summed until they drop below 1e-12.
 */
inline double kolmogorov_survival(double lambda) {
  if (lambda <= 0) return 1;
  double q;
  if (lambda < 1.0) {
    double s = 0;
    for (int k = 1; k < 100; ++k) {
      double term = std::exp(-(2.0 * k - 1) * (2.0 * k - 1) * std::numbers::pi * std::numbers::pi / (8 * lambda * lambda));
      s += term;
      if (term < 1e-12) break;
    }
    q = 1 - std::sqrt(2 * std::numbers::pi) / lambda * s;
  } else {
    double s = 0;
    for (int k = 1; k < 100; ++k) {
      double term = std::exp(-2.0 * k * k * lambda * lambda);
      s += (k % 2 ? term : -term);
      if (term < 1e-12) break;
    }
    q = 2 * s;
  }
  return std::clamp(q, 0.0, 1.0);
}

struct KsResult {
  double d;
  double p_value;
};

/// One-sample KS distance against cdf and its asymptotic p-value (Q(sqrt(n) D)).
inline KsResult ks_statistic(std::span<const double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw std::invalid_argument("KS statistic of an empty sample");
  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    double f = cdf(sorted[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  d = std::clamp(d, 0.0, 1.0);
  return {d, kolmogorov_survival(std::sqrt(n) * d)};
}

/// Splits a series by p mod m, preserving order within each class.
inline std::map<std::uint64_t, std::vector<SeriesPoint>> partition_by_residue(std::span<const SeriesPoint> series,
                                                                              std::uint64_t m) {
  if (m < 2) throw std::invalid_argument("residue modulus must be at least 2");
  std::map<std::uint64_t, std::vector<SeriesPoint>> out;
  for (const auto& pt : series) out[pt.p % m].push_back(pt);
  return out;
}

struct DistributionSummary {
  std::vector<double> sample;
  double mean = 0;
  double variance = 0;
  Histogram histogram;
  TruncatedNormal fit{};
  KsResult ks{};
  std::vector<double> running_variance;
};

inline DistributionSummary summarize(std::span<const double> sample, std::size_t bucket_count = 100,
                                     std::optional<std::pair<double, double>> bounds = std::nullopt,
                                     FitMethod method = FitMethod::parent) {
  DistributionSummary s;
  s.sample.assign(sample.begin(), sample.end());
  s.mean = apbias::mean(sample);
  s.running_variance = variance_trace(sample);
  s.variance = s.running_variance.back();
  s.histogram = histogram(sample, bucket_count, bounds);
  s.fit = truncated_normal_fit(sample, method);
  auto fit = s.fit;
  s.ks = ks_statistic(sample, [fit](double x) { return fit.cdf(x); });
  return s;
}

inline void write_bias_csv(std::ostream& os, const BiasReport& r) {
  os << "p,B2,run_avg,log_avg\n";
  for (const auto& row : r.rows)
    os << row.p << ',' << format_double(row.value) << ',' << format_double(row.run_avg) << ','
       << format_double(row.log_avg) << '\n';
}

inline void write_histogram_csv(std::ostream& os, const Histogram& h) {
  os << "bucket_low,bucket_high,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i)
    os << format_double(h.bucket_low(i)) << ',' << format_double(h.bucket_high(i)) << ',' << h.counts[i] << '\n';
}

inline void write_variance_csv(std::ostream& os, std::span<const std::uint64_t> primes, std::span<const double> trace) {
  os << "p,variance\n";
  for (std::size_t i = 0; i < trace.size(); ++i) os << primes[i] << ',' << format_double(trace[i]) << '\n';
}

inline nlohmann::json fit_json(const TruncatedNormal& fit, const KsResult& ks) {
  return {{"mu", fit.mu}, {"sigma", fit.sigma}, {"lower", fit.lower},
          {"upper", fit.upper}, {"ks_d", ks.d}, {"ks_p", ks.p_value}};
}

}  // namespace apbias
