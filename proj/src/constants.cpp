#include "nsync/constants.hpp"

#include "nsync/parallel.hpp"
#include "nsync/rng.hpp"
#include "nsync/stats.hpp"

#include <cmath>

namespace nsync {

SchemeConstants SchemeConstants::synchronous(int p_max) {
  SchemeConstants c;
  c.p_max = p_max;
  c.a0_1 = c.a0_2 = {1.0, 0.0};
  const std::vector<McEstimate> ones(static_cast<std::size_t>(p_max) + 1, McEstimate{1.0, 0.0});
  c.a = c.f11 = c.f12 = c.f22 = ones;
  c.windows = "exact";
  return c;
}

void SchemeConstants::validate() const {
  const auto expect = static_cast<std::size_t>(p_max) + 1;
  if (p_max < 1) throw DomainError("scheme constants need p_max >= 1");
  if (a.size() != expect || f11.size() != expect || f12.size() != expect || f22.size() != expect)
    throw DomainError("scheme constants: list lengths must equal p_max + 1");
  if (!(a0_1.mean > 0.0) || !(a0_2.mean > 0.0)) throw DomainError("a0 must be positive");
  for (const auto* list : {&a, &f11, &f22}) {
    for (const auto& e : *list) {
      if (!(e.mean >= -1e-12)) throw DomainError("scheme constants must be nonnegative");
    }
  }
}

int choose_p_max(double rho_max) {
  if (!(rho_max >= 0.0) || !(rho_max < 1.0)) throw DomainError("rho_max must lie in [0, 1)");
  const double r2 = rho_max * rho_max;
  int p = 40;
  while (std::pow(r2, p + 1) / (1.0 - r2) >= 1e-12) ++p;
  return p;
}

namespace {

struct Replicate {
  double a0_2 = 0.0;
  std::vector<double> a, f11, f12, f22;
  std::vector<double> count_moments;
  std::vector<double> empty_frequency;
};

constexpr double kUnits[] = {1.0, 2.0, 4.0, 8.0};

// Per-unit-time average over windows 1..K-2 of a window table column.
double retained_rate(const WindowTable& t, int p, int first, int last) {
  double v = 0.0, len = 0.0;
  for (int k = first; k <= last; ++k) {
    v += t.values(k, p);
    len += t.window_length[static_cast<std::size_t>(k)];
  }
  return v / len;
}

void gap_proxies(const SamplingScheme& s, Replicate& r) {
  const double h = s.h_n();
  const double horizon = s.horizon();
  const long cells = static_cast<long>(std::floor(horizon / h + 1e-9));
  r.count_moments.assign(4, 0.0);
  r.empty_frequency.assign(std::size(kUnits), 0.0);
  int samples = 0;
  for (int l = 1; l <= 2; ++l) {
    const auto& g = s.grid(l);
    // Counts of interior points in consecutive cells of length h_n.
    std::vector<int> counts(static_cast<std::size_t>(cells), 0);
    for (std::size_t i = 1; i + 1 < g.size(); ++i) {
      const long c = static_cast<long>(g[i] / h);
      if (c < cells) ++counts[static_cast<std::size_t>(c)];
    }
    for (int c : counts) {
      for (int q = 1; q <= 4; ++q) r.count_moments[q - 1] += std::pow(c, q);
    }
    samples += static_cast<int>(cells);
    for (std::size_t u = 0; u < std::size(kUnits); ++u) {
      const long width = static_cast<long>(kUnits[u]);
      long empty = 0, total = 0;
      for (long start = 0; start + width <= cells; start += width) {
        int sum = 0;
        for (long c = start; c < start + width; ++c) sum += counts[static_cast<std::size_t>(c)];
        empty += (sum == 0);
        ++total;
      }
      if (total > 0) r.empty_frequency[u] += 0.5 * static_cast<double>(empty) / total;
    }
  }
  for (auto& m : r.count_moments) m /= std::max(samples, 1);
}

}  // namespace

ConstantsResult estimate_constants(const SchemeGenerator& generator, const ConstantsOptions& opts) {
  if (opts.replications < 2)
    throw ConfigError("constant estimation needs at least 2 replications for a standard error");
  if (opts.p_max < 1) throw ConfigError("p_max must be at least 1");
  const double horizon = static_cast<double>(opts.n) * opts.h_n;
  const Partition windows = opts.windows ? *opts.windows : Partition::uniform(horizon);
  windows.validate(horizon, 1.0);
  const int first = 1;
  const int last = windows.windows() - 2;
  if (last < first)
    throw ConfigError("horizon too short: need at least three windows to trim both boundaries");

  const auto R = static_cast<std::size_t>(opts.replications);
  const int P = opts.p_max;
  std::vector<Replicate> reps(R);
  parallel_for(R, opts.workers, [&](std::size_t r) {
    const SamplingScheme s = generator.generate(opts.n, opts.h_n, derive_seed(opts.seed, r));
    const OverlapMatrix g = build_overlap(s);
    const WindowTable traces = trace_powers(s, g, P, windows);
    const WeightedTables weighted = weighted_functionals(s, g, P, windows);
    const std::vector<double> counts2 = window_counts(s, 2, windows);
    Replicate& out = reps[r];
    double c2 = 0.0, len = 0.0;
    for (int k = first; k <= last; ++k) {
      c2 += counts2[static_cast<std::size_t>(k)];
      len += windows.length(k);
    }
    out.a0_2 = c2 / len;
    for (int p = 0; p <= P; ++p) {
      out.a.push_back(retained_rate(traces, p, first, last));
      out.f11.push_back(retained_rate(weighted.f11, p, first, last));
      out.f12.push_back(retained_rate(weighted.f12, p, first, last));
      out.f22.push_back(retained_rate(weighted.f22, p, first, last));
    }
    gap_proxies(s, out);
  });

  auto summarize = [&](auto getter) {
    std::vector<double> v(R);
    for (std::size_t r = 0; r < R; ++r) v[r] = getter(reps[r]);
    const auto m = stats::mean_sd(v);
    return McEstimate{m.mean, m.sd / std::sqrt(static_cast<double>(R))};
  };

  ConstantsResult out;
  SchemeConstants& c = out.constants;
  c.p_max = P;
  c.replications = opts.replications;
  c.retained_windows = last - first + 1;
  c.windows = opts.windows ? "custom partition" : "unit windows";
  for (int p = 0; p <= P; ++p) {
    const auto idx = static_cast<std::size_t>(p);
    c.a.push_back(summarize([idx](const Replicate& r) { return r.a[idx]; }));
    c.f11.push_back(summarize([idx](const Replicate& r) { return r.f11[idx]; }));
    c.f12.push_back(summarize([idx](const Replicate& r) { return r.f12[idx]; }));
    c.f22.push_back(summarize([idx](const Replicate& r) { return r.f22[idx]; }));
  }
  c.a0_1 = c.a[0];
  c.a0_2 = summarize([](const Replicate& r) { return r.a0_2; });

  GapDiagnostics& d = out.diagnostics;
  d.count_moments.assign(4, 0.0);
  d.empty_frequency.assign(std::size(kUnits), 0.0);
  d.u_values.assign(std::begin(kUnits), std::end(kUnits));
  for (const auto& r : reps) {
    for (std::size_t q = 0; q < 4; ++q) d.count_moments[q] += r.count_moments[q] / R;
    for (std::size_t u = 0; u < d.empty_frequency.size(); ++u)
      d.empty_frequency[u] += r.empty_frequency[u] / R;
  }
  return out;
}

}  // namespace nsync
