#pragma once

// Command-line driver: argument parsing into a validated Command, and
// execution against a database. All tabular output is CSV with a header
// row; fit output is one JSON object.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "apbias/apkernel.hpp"
#include "apbias/apstore.hpp"
#include "apbias/biasstats.hpp"
#include "apbias/families.hpp"
#include "apbias/famsearch.hpp"

namespace apbias::cli {

inline constexpr const char* kDbEnvVar = "APBIAS_DB";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Verb { build, lookup, moments, bias, hist, fit, search, rank, verify };

struct Command {
  Verb verb = Verb::build;
  std::filesystem::path db;
  std::optional<std::filesystem::path> out;

  // build
  std::uint64_t build_p_max = 0;
  Kernel kernel = Kernel::naive;
  unsigned threads = default_thread_count();

  // lookup
  std::uint64_t prime = 0;
  std::int64_t a = 0;
  std::int64_t b = 0;

  // family commands
  std::optional<Family> family;
  std::vector<unsigned> orders{2};
  PrimeRange range;
  std::size_t skip = 0;
  std::optional<std::uint64_t> modulus;
  std::optional<std::uint64_t> residue_class;
  bool variance = false;
  bool prime_variant = false;

  // hist / fit
  std::size_t buckets = 100;
  std::optional<std::pair<double, double>> bounds;
  FitMethod fit_method = FitMethod::parent;

  // search
  SearchConfig search;

  // rank
  std::uint64_t rank_x = 0;

  // verify
  std::size_t sample = 1000;
};

namespace detail {

inline std::vector<unsigned> parse_orders(const std::string& text) {
  std::vector<unsigned> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != tok.size() || v < 1 || v > kMaxMomentOrder)
      throw UsageError("--orders: invalid order '" + tok + "'");
    out.push_back(static_cast<unsigned>(v));
  }
  if (out.empty()) throw UsageError("--orders: no orders given");
  return out;
}

inline std::vector<std::int64_t> parse_coeffs(const std::string& text) {
  std::vector<std::int64_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != tok.size()) throw UsageError("--coeffs: invalid coefficient '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--coeffs: empty coefficient set");
  return out;
}

}  // namespace detail

using EnvLookup = std::function<std::optional<std::string>(const char*)>;

inline std::optional<std::string> process_env(const char* name) {
  if (const char* v = std::getenv(name)) return std::string(v);
  return std::nullopt;
}

/// Parses argv (without the program name) into a validated Command. Throws UsageError.
inline Command parse_args(const std::vector<std::string>& args, const EnvLookup& env = process_env) {
  CLI::App app{"apbias: Frobenius trace database and second-moment bias statistics"};
  app.require_subcommand(1, 1);

  Command cmd;
  std::string db, out, kernel = "naive", family, orders = "2", coeffs = "0,1", method = "parent";
  std::uint64_t pmin = 3, pmax = 0, mod = 0, cls = 0, stage2 = 0;
  std::vector<double> bounds;
  std::string checkpoint;

  auto add_db = [&](CLI::App* sub) { sub->add_option("--db", db, "database path (default $APBIAS_DB)"); };
  auto add_out = [&](CLI::App* sub) { sub->add_option("--out", out, "output file (default stdout)"); };
  auto add_family = [&](CLI::App* sub) {
    sub->add_option("--family", family, "family spec 'c0,c1,...;d0,d1,...'");
    sub->add_option("--pmin", pmin, "smallest prime");
    sub->add_option("--pmax", pmax, "largest prime (default database p_max)");
    sub->add_option("--skip", cmd.skip, "drop the first K primes in range");
  };

  auto* build = app.add_subcommand("build", "build a database");
  build->add_option("--pmax", cmd.build_p_max, "largest prime bound");
  build->add_option("--out", out, "database file to write");
  build->add_option("--kernel", kernel, "naive | convolution");
  build->add_option("--threads", cmd.threads, "worker threads");

  auto* lookup = app.add_subcommand("lookup", "print -a_p for one curve");
  add_db(lookup);
  lookup->add_option("--prime", cmd.prime, "prime p");
  lookup->add_option("--a", cmd.a, "coefficient a");
  lookup->add_option("--b", cmd.b, "coefficient b");

  auto* moments = app.add_subcommand("moments", "raw and normalized moments per prime");
  add_db(moments);
  add_out(moments);
  add_family(moments);
  moments->add_option("--orders", orders, "comma-separated orders 1..10");
  moments->add_option("--threads", cmd.threads, "worker threads");

  auto* bias = app.add_subcommand("bias", "running averages of B_2");
  add_db(bias);
  add_out(bias);
  add_family(bias);
  bias->add_option("--mod", mod, "restrict to primes p = class mod M");
  bias->add_option("--class", cls, "residue class used with --mod");
  bias->add_flag("--variance", cmd.variance, "emit the running variance trace instead");
  bias->add_option("--threads", cmd.threads, "worker threads");

  auto* hist = app.add_subcommand("hist", "histogram of normalized moments");
  add_db(hist);
  add_out(hist);
  add_family(hist);
  hist->add_option("--order", cmd.orders[0], "even moment order");
  hist->add_flag("--prime-variant", cmd.prime_variant, "use B' instead of B");
  hist->add_option("--buckets", cmd.buckets, "bucket count");
  hist->add_option("--bounds", bounds, "explicit LO HI")->expected(2);
  hist->add_option("--threads", cmd.threads, "worker threads");

  auto* fit = app.add_subcommand("fit", "truncated-normal fit and KS statistic");
  add_db(fit);
  add_out(fit);
  add_family(fit);
  fit->add_option("--order", cmd.orders[0], "even moment order");
  fit->add_flag("--prime-variant", cmd.prime_variant, "use B' instead of B");
  fit->add_option("--method", method, "parent | moment");
  fit->add_option("--threads", cmd.threads, "worker threads");

  auto* search = app.add_subcommand("search", "exhaustive family search for positive bias");
  add_db(search);
  add_out(search);
  search->add_option("--max-degree", cmd.search.max_degree, "max degree of A and B");
  search->add_option("--coeffs", coeffs, "coefficient set, e.g. 0,1");
  search->add_option("--filter-pmax", cmd.search.filter_p_max, "stage-one prime bound");
  search->add_option("--threshold", cmd.search.threshold, "positive fraction to pass");
  search->add_option("--stage2-pmax", stage2, "re-evaluate survivors up to this bound");
  search->add_option("--checkpoint", checkpoint, "checkpoint file (resumes if present)");
  search->add_option("--threads", cmd.threads, "worker threads");

  auto* rank = app.add_subcommand("rank", "first-moment rank statistic");
  add_db(rank);
  add_family(rank);
  rank->add_option("--x", cmd.rank_x, "prime bound X");
  rank->add_option("--threads", cmd.threads, "worker threads");

  auto* verify = app.add_subcommand("verify", "check every block of a database");
  add_db(verify);
  verify->add_option("--sample", cmd.sample, "re-derived entries per prime");
  verify->add_option("--threads", cmd.threads, "worker threads");

  std::vector<const char*> argv{"apbias"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    throw UsageError(app.help());
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  auto given = [&](const char* opt) { return sub->count(opt) > 0; };
  auto require = [&](const char* opt) {
    if (!given(opt)) throw UsageError(name + ": missing required option " + opt);
  };

  static const std::map<std::string, Verb> verbs{{"build", Verb::build},   {"lookup", Verb::lookup},
                                                 {"moments", Verb::moments}, {"bias", Verb::bias},
                                                 {"hist", Verb::hist},     {"fit", Verb::fit},
                                                 {"search", Verb::search}, {"rank", Verb::rank},
                                                 {"verify", Verb::verify}};
  cmd.verb = verbs.at(name);
  if (cmd.threads == 0) throw UsageError("--threads must be at least 1");
  if (!out.empty()) cmd.out = out;

  if (cmd.verb == Verb::build) {
    require("--pmax");
    require("--out");
    if (cmd.build_p_max < 3 || cmd.build_p_max > kMaxTablePrime)
      throw UsageError("--pmax must lie in [3, " + std::to_string(kMaxTablePrime) + "]");
    try {
      cmd.kernel = parse_kernel(kernel);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--kernel: ") + e.what());
    }
    return cmd;
  }

  if (db.empty()) {
    if (auto v = env(kDbEnvVar)) db = *v;
  }
  if (db.empty()) throw UsageError(name + ": missing --db (or set " + kDbEnvVar + ")");
  cmd.db = db;

  bool family_verb = cmd.verb == Verb::moments || cmd.verb == Verb::bias || cmd.verb == Verb::hist ||
                     cmd.verb == Verb::fit || cmd.verb == Verb::rank;
  if (family_verb) {
    require("--family");
    try {
      cmd.family = parse_family(family);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--family: ") + e.what());
    }
    if (cmd.family->is_singular_surface()) throw UsageError("--family: 4A^3 + 27B^2 vanishes identically");
    cmd.range.min = pmin;
    if (pmax != 0) cmd.range.max = pmax;
    if (cmd.range.min > cmd.range.max) throw UsageError("--pmin exceeds --pmax");
  }

  switch (cmd.verb) {
    case Verb::lookup:
      require("--prime");
      require("--a");
      require("--b");
      break;
    case Verb::moments:
      cmd.orders = detail::parse_orders(orders);
      break;
    case Verb::bias:
      if (given("--mod") != given("--class")) throw UsageError("--mod and --class must be given together");
      if (given("--mod")) {
        if (mod < 2) throw UsageError("--mod must be at least 2");
        if (cls >= mod) throw UsageError("--class must be below --mod");
        cmd.modulus = mod;
        cmd.residue_class = cls;
      }
      break;
    case Verb::hist:
    case Verb::fit:
      if (cmd.orders[0] == 0 || cmd.orders[0] % 2 != 0 || cmd.orders[0] > kMaxMomentOrder)
        throw UsageError("--order must be an even order in 2..10");
      if (cmd.buckets == 0) throw UsageError("--buckets must be at least 1");
      if (!bounds.empty()) {
        if (!(bounds[0] <= bounds[1])) throw UsageError("--bounds: LO must not exceed HI");
        cmd.bounds = std::pair{bounds[0], bounds[1]};
      }
      if (method == "parent") cmd.fit_method = FitMethod::parent;
      else if (method == "moment") cmd.fit_method = FitMethod::moment_match;
      else throw UsageError("--method must be 'parent' or 'moment'");
      break;
    case Verb::search:
      cmd.search.coefficients = detail::parse_coeffs(coeffs);
      if (!(cmd.search.threshold > 0)) throw UsageError("--threshold must be positive");
      if (cmd.search.max_degree > 10) throw UsageError("--max-degree is capped at 10");
      if (given("--stage2-pmax")) cmd.search.stage2_p_max = stage2;
      if (!checkpoint.empty()) cmd.search.checkpoint = checkpoint;
      cmd.search.threads = cmd.threads;
      break;
    case Verb::rank:
      require("--x");
      if (cmd.rank_x < 3) throw UsageError("--x must be at least 3");
      break;
    default:
      break;
  }
  return cmd;
}

namespace detail {

inline std::vector<double> values_of(std::span<const SeriesPoint> pts) {
  std::vector<double> out;
  for (const auto& p : pts) out.push_back(p.value);
  return out;
}

inline std::string describe_filters(const Command& cmd, std::size_t primes) {
  std::ostringstream os;
  os << "filters: pmin=" << cmd.range.min << " pmax=";
  if (cmd.range.max == std::numeric_limits<std::uint64_t>::max()) os << "db";
  else os << cmd.range.max;
  os << " skip=" << cmd.skip;
  if (cmd.modulus) os << " mod=" << *cmd.modulus << " class=" << *cmd.residue_class;
  os << " primes=" << primes;
  return os.str();
}

}  // namespace detail

/// Runs a validated command. Returns the process exit status.
inline int execute(const Command& cmd, std::ostream& out, std::ostream& err) {
  try {
    if (cmd.verb == Verb::build) {
      BuildOptions opts;
      opts.kernel = cmd.kernel;
      opts.threads = cmd.threads;
      std::size_t last_pct = 101;
      opts.progress = [&](std::size_t done, std::size_t total) {
        auto pct = done * 100 / total;
        if (pct != last_pct && (pct % 5 == 0 || done == total)) {
          err << "built " << done << "/" << total << " primes (" << pct << "%)\n";
          last_pct = pct;
        }
      };
      auto db = db_create(*cmd.out, cmd.build_p_max, opts);
      err << "wrote " << db.prime_count() << " primes up to " << db.p_max() << " to " << cmd.out->string() << "\n";
      return 0;
    }

    ApDatabase db(cmd.db);
    switch (cmd.verb) {
      case Verb::lookup: {
        if (!db.contains(cmd.prime)) throw PrimeNotFound(cmd.prime);
        PrimeModulus p(cmd.prime);
        out << db.lookup_neg_ap(cmd.prime, p.reduce(cmd.a), p.reduce(cmd.b)) << "\n";
        return 0;
      }
      case Verb::moments: {
        auto s = moment_series(db, *cmd.family, cmd.orders, cmd.range, cmd.skip, cmd.threads);
        write_series_csv(out, s);
        return 0;
      }
      case Verb::bias: {
        unsigned order[] = {2};
        auto s = moment_series(db, *cmd.family, order, cmd.range, cmd.skip, cmd.threads);
        auto pts = series_points(s);
        if (cmd.modulus) {
          auto parts = partition_by_residue(pts, *cmd.modulus);
          pts = parts[*cmd.residue_class];
          if (pts.empty()) throw std::invalid_argument("no primes in the requested residue class");
        }
        err << detail::describe_filters(cmd, pts.size()) << "\n";
        if (cmd.variance) {
          auto values = detail::values_of(pts);
          std::vector<std::uint64_t> primes;
          for (const auto& p : pts) primes.push_back(p.p);
          write_variance_csv(out, primes, variance_trace(values));
        } else {
          write_bias_csv(out, running_averages(pts));
        }
        return 0;
      }
      case Verb::hist:
      case Verb::fit: {
        unsigned order[] = {cmd.orders[0]};
        auto s = moment_series(db, *cmd.family, order, cmd.range, cmd.skip, cmd.threads);
        auto values = s.normalized_values(cmd.orders[0], cmd.prime_variant);
        err << detail::describe_filters(cmd, values.size()) << "\n";
        if (cmd.verb == Verb::hist) {
          auto h = histogram(values, cmd.buckets, cmd.bounds);
          write_histogram_csv(out, h);
          if (h.underflow || h.overflow) err << "outside bounds: below=" << h.underflow << " above=" << h.overflow << "\n";
        } else {
          auto fit = truncated_normal_fit(values, cmd.fit_method);
          auto ks = ks_statistic(values, [fit](double x) { return fit.cdf(x); });
          out << fit_json(fit, ks).dump() << "\n";
        }
        return 0;
      }
      case Verb::search: {
        auto report = search(db, cmd.search);
        err << "enumerated " << report.raw_pairs << " pairs, " << report.candidates << " candidates, "
            << report.resumed << " resumed from checkpoint, " << report.passed.size() << " passed\n";
        write_search_csv(out, report);
        return 0;
      }
      case Verb::rank: {
        out << format_double(rank_statistic(db, *cmd.family, std::min(cmd.rank_x, db.p_max()), cmd.threads)) << "\n";
        return 0;
      }
      case Verb::verify: {
        auto primes = db.primes();
        std::vector<VerificationReport> reports(primes.size());
        parallel_for(primes.size(), cmd.threads, [&](std::size_t i) {
          auto block = db.block(primes[i]);
          reports[i] = verify_table(block.view(), cmd.sample);
        });
        for (const auto& r : reports) {
          if (!r.ok) {
            err << "verify failed: " << r.failure << "\n";
            return 1;
          }
        }
        err << "verified " << primes.size() << " primes up to " << db.p_max() << "\n";
        return 0;
      }
      default:
        return 2;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

/// Entry point shared by the binary: parse, open --out if given, execute.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
               const EnvLookup& env = process_env) {
  Command cmd;
  try {
    cmd = parse_args(args, env);
  } catch (const UsageError& e) {
    err << e.what() << "\n";
    return 2;
  }
  if (cmd.out && cmd.verb != Verb::build) {
    std::ofstream file(*cmd.out);
    if (!file) {
      err << "error: cannot write " << cmd.out->string() << "\n";
      return 1;
    }
    return execute(cmd, file, err);
  }
  return execute(cmd, out, err);
}

}  // namespace apbias::cli
