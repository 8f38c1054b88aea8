#include "nsync/sampling.hpp"

#include "nsync/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace nsync {

namespace {

void check_grid(const std::vector<double>& g, double horizon, int l) {
  const std::string name = "grid " + std::to_string(l);
  if (g.size() < 2) throw DomainError(name + " needs at least one interval");
  if (g.front() != 0.0) throw DomainError(name + " must start at 0");
  if (g.back() != horizon) throw DomainError(name + " must end at n*h_n");
  for (std::size_t i = 1; i < g.size(); ++i) {
    if (!(g[i] > g[i - 1]))
      throw DomainError(name + " is not strictly increasing at index " + std::to_string(i));
  }
}

}  // namespace

SamplingScheme::SamplingScheme(std::vector<double> grid1, std::vector<double> grid2, long n,
                               double h_n)
    : grid1_(std::move(grid1)), grid2_(std::move(grid2)), n_(n), h_n_(h_n) {
  if (n_ < 1) throw DomainError("n must be positive");
  if (!(h_n_ > 0.0) || !std::isfinite(h_n_)) throw DomainError("h_n must be positive");
  check_grid(grid1_, horizon(), 1);
  check_grid(grid2_, horizon(), 2);
}

Interval SamplingScheme::stacked_interval(int k) const {
  return k < m1() ? interval(1, k + 1) : interval(2, k - m1() + 1);
}

namespace {

std::vector<double> poisson_grid(double rate, double horizon, Rng& rng) {
  std::exponential_distribution<double> gap(rate);
  std::vector<double> g{0.0};
  double t = gap(rng);
  while (t < horizon) {
    g.push_back(t);
    t += gap(rng);
  }
  g.push_back(horizon);
  return g;
}

}  // namespace

SamplingScheme generate_poisson(double lambda1, double lambda2, long n, double h_n,
                                std::uint64_t seed) {
  if (!(lambda1 > 0.0) || !(lambda2 > 0.0)) throw DomainError("Poisson intensities must be > 0");
  if (n < 1 || !(h_n > 0.0)) throw DomainError("need n >= 1 and h_n > 0");
  const double horizon = static_cast<double>(n) * h_n;
  int retries = 0;
  std::vector<double> grids[2];
  const double rates[2] = {lambda1 / h_n, lambda2 / h_n};
  for (int l = 0; l < 2; ++l) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      Rng rng = make_rng(seed, 2 * attempt + static_cast<std::uint64_t>(l));
      grids[l] = poisson_grid(rates[l], horizon, rng);
      if (grids[l].size() > 2) break;
      ++retries;
    }
  }
  SamplingScheme s(std::move(grids[0]), std::move(grids[1]), n, h_n);
  s.retries = retries;
  return s;
}

SamplingScheme generate_equidistant(long n, double h_n, double offset2) {
  if (n < 1 || !(h_n > 0.0)) throw DomainError("need n >= 1 and h_n > 0");
  if (!(offset2 >= 0.0) || !(offset2 < 1.0)) throw DomainError("offset2 must lie in [0, 1)");
  const double horizon = static_cast<double>(n) * h_n;
  std::vector<double> g1(static_cast<std::size_t>(n) + 1);
  for (long i = 0; i <= n; ++i) g1[static_cast<std::size_t>(i)] = static_cast<double>(i) * h_n;
  g1.back() = horizon;
  std::vector<double> g2;
  if (offset2 == 0.0) {
    g2 = g1;
  } else {
    g2.push_back(0.0);
    for (long i = 0; i < n; ++i) g2.push_back((static_cast<double>(i) + offset2) * h_n);
    g2.push_back(horizon);
  }
  return SamplingScheme(std::move(g1), std::move(g2), n, h_n);
}

double max_gap(const SamplingScheme& scheme) {
  double r = 0.0;
  for (int l = 1; l <= 2; ++l) {
    const auto& g = scheme.grid(l);
    for (std::size_t i = 1; i < g.size(); ++i) r = std::max(r, g[i] - g[i - 1]);
  }
  return r;
}

SamplingScheme SchemeGenerator::generate(long n, double h_n, std::uint64_t seed) const {
  switch (kind) {
    case Kind::poisson: return generate_poisson(lambda1, lambda2, n, h_n, seed);
    case Kind::equidistant: return generate_equidistant(n, h_n, offset2);
  }
  throw ContractError("unknown generator");
}

std::string SchemeGenerator::name() const {
  return kind == Kind::poisson ? "poisson" : "equidistant";
}

// ---------------------------------------------------------------------------

Partition Partition::uniform(double horizon, double length) {
  if (!(length > 0.0) || !(horizon > 0.0)) throw DomainError("partition needs positive lengths");
  Partition p;
  p.bounds.push_back(0.0);
  for (long k = 1;; ++k) {
    const double s = static_cast<double>(k) * length;
    p.bounds.push_back(s);
    if (s >= horizon * (1.0 - 1e-12)) break;
  }
  return p;
}

Partition Partition::random(double horizon, std::uint64_t seed, double min_gap) {
  if (!(min_gap > 0.0) || !(min_gap <= 1.0)) throw DomainError("min_gap must lie in (0, 1]");
  Rng rng(seed);
  std::uniform_real_distribution<double> gap(min_gap, 1.0);
  Partition p;
  p.bounds.push_back(0.0);
  while (p.bounds.back() < horizon) p.bounds.push_back(p.bounds.back() + gap(rng));
  return p;
}

int Partition::locate(double t) const {
  if (!(t > 0.0)) return -1;
  // Points sitting on a window edge up to rounding belong to the window they close.
  const double eps = 1e-12 * std::max(1.0, std::abs(t));
  auto it = std::lower_bound(bounds.begin() + 1, bounds.end(), t - eps);
  if (it == bounds.end()) return windows() - 1;
  return static_cast<int>(it - bounds.begin()) - 1;
}

void Partition::validate(double horizon, double max_gap) const {
  if (bounds.size() < 2 || bounds.front() != 0.0)
    throw DomainError("partition must start at 0 and contain at least one window");
  for (std::size_t k = 1; k < bounds.size(); ++k) {
    const double gap = bounds[k] - bounds[k - 1];
    if (!(gap > 0.0) || gap > max_gap * (1.0 + 1e-12)) {
      std::ostringstream os;
      os << "partition gaps must lie in (0, " << max_gap << "]";
      throw DomainError(os.str());
    }
  }
  if (bounds.back() < horizon * (1.0 - 1e-12))
    throw DomainError("partition does not cover the horizon");
}

// ---------------------------------------------------------------------------

void write_scheme(std::ostream& os, const SamplingScheme& scheme) {
  os << std::setprecision(17);
  os << scheme.n() << ' ' << scheme.h_n() << '\n';
  for (int l = 1; l <= 2; ++l) {
    const auto& g = scheme.grid(l);
    for (std::size_t i = 0; i < g.size(); ++i) os << (i ? " " : "") << g[i];
    os << '\n';
  }
}

namespace {

std::vector<double> parse_line(const std::string& line, int line_no) {
  std::vector<double> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw DataError("line " + std::to_string(line_no) + ": cannot parse '" + tok + "'");
    }
  }
  return out;
}

}  // namespace

SamplingScheme read_scheme(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("line 1: missing header");
  std::istringstream head(line);
  long n = 0;
  double h = 0.0;
  if (!(head >> n >> h)) throw DataError("line 1: expected 'n h_n'");
  std::vector<double> grids[2];
  for (int l = 0; l < 2; ++l) {
    if (!std::getline(is, line)) throw DataError("line " + std::to_string(l + 2) + ": missing grid");
    grids[l] = parse_line(line, l + 2);
  }
  try {
    return SamplingScheme(std::move(grids[0]), std::move(grids[1]), n, h);
  } catch (const DomainError& e) {
    throw DataError(std::string("invalid scheme: ") + e.what());
  }
}

}  // namespace nsync
