#include "nsync/asymptotics.hpp"
#include "nsync/estimator.hpp"
#include "nsync/overlap.hpp"
#include "nsync/stats.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace nsync;
using Catch::Approx;
using testing::vec;

namespace {

SchemeConstants poisson_constants(double rho_max) {
  ConstantsOptions o;
  o.replications = 100;
  o.p_max = choose_p_max(rho_max);
  o.n = 500;
  o.h_n = 0.1;
  o.seed = 4242;
  return estimate_constants(SchemeGenerator{}, o).constants;
}

/// Exact Fisher information of N(dV, S) with respect to the correlation of the
/// unit-variance model, and the GLS information for mu = (theta, theta).
struct Fisher {
  double sigma = 0.0;
  double theta = 0.0;
};

Fisher exact_fisher(const SamplingScheme& s, double rho) {
  Matrix2 sig;
  sig << 1.0, rho, rho, 1.0;
  Matrix2 dsig;
  dsig << 0.0, 1.0, 1.0, 0.0;
  const Matrix S = testing::dense_covariance(s, sig);
  const Matrix dS = testing::dense_covariance(s, dsig);
  Eigen::LLT<Matrix> llt(S);
  const Matrix x = llt.solve(dS);
  Vector d(s.m());
  for (int k = 0; k < s.m(); ++k) d[k] = s.stacked_interval(k).length();
  return {0.5 * (x.cwiseProduct(x.transpose())).sum(), d.dot(llt.solve(d))};
}

}  // namespace

TEST_CASE("A series") {
  const auto sync = SchemeConstants::synchronous(choose_p_max(0.8));
  CHECK(a_series(0.0, sync).value == 0.0);
  CHECK(a_series(0.0, sync, 1).value == 0.0);
  for (double r : {0.1, -0.5, 0.79}) {
    CHECK(a_series(r, sync).value == Approx(r * r / (1 - r * r)).epsilon(1e-10));
    CHECK(a_series(r, sync, 1).value == Approx(2 * r / std::pow(1 - r * r, 2)).epsilon(1e-9));
  }
  const auto few = SchemeConstants::synchronous(3);
  const auto v = a_series(0.5, few);
  const double exact = 0.25 / 0.75;
  CHECK(exact - v.value > 0.0);
  CHECK(exact - v.value <= v.tail_bound * (1 + 1e-12));
  const auto d = a_series(0.5, few, 1);
  CHECK(2 * 0.5 / (0.75 * 0.75) - d.value <= d.tail_bound * (1 + 1e-12));
}

TEST_CASE("Gamma1 closed forms on the synchronous scheme") {
  const auto sync = SchemeConstants::synchronous(choose_p_max(0.95));
  auto scale = testing::scale_model(1.0, 0.5);
  for (double s0 : {0.5, 1.0, 2.5}) {
    const auto g = gamma1(scale, sync, vec({s0}));
    CHECK(g.value(0, 0) == Approx(4.0 / (s0 * s0)).epsilon(1e-8));
    CHECK(g.policy == "pointwise");
  }
  // Correlation only: per-observation Fisher information (1 + rho^2) / (1 - rho^2)^2.
  auto rho = testing::rho_model(0.5, 1.0, 0.8);
  const auto sync8 = SchemeConstants::synchronous(choose_p_max(0.8));
  for (double r : {0.0, 0.3, -0.6}) {
    const double expect = (1 + r * r) / std::pow(1 - r * r, 2);
    CHECK(gamma1(rho, sync8, vec({r})).value(0, 0) == Approx(expect).epsilon(1e-7));
  }
  // rho = 0: only the a_0 terms survive.
  SchemeConstants c = sync;
  c.a0_1.mean = 2.0;
  c.a0_2.mean = 0.5;
  CHECK(gamma1(scale, c, vec({1.0})).value(0, 0) == Approx(2.0 * (2.0 + 0.5)).epsilon(1e-8));
}

TEST_CASE("Gamma2 closed forms on the synchronous scheme") {
  const auto sync = SchemeConstants::synchronous(choose_p_max(0.8));
  auto rho = testing::rho_model(0.0, 1.0, 0.8);
  CHECK(gamma2(rho, sync, vec({0.0}), vec({1.0})).value(0, 0) == Approx(2.0).epsilon(1e-10));
  for (double r : {0.3, -0.5}) {
    CHECK(gamma2(rho, sync, vec({r}), vec({1.0})).value(0, 0) ==
          Approx(2.0 / (1.0 + r)).epsilon(1e-10));
  }
  // Drift only in the first coordinate.
  DiffusionSpec d;
  d.free = {"rho"};
  DriftSpec m;
  m.directions = {Vector2(1.0, 0.0)};
  ParamSpace space{testing::box({-0.8}, {0.8}), testing::box({-2.0}, {2.0}), vec({0.0}), vec({0.0})};
  auto one = make_constant_model(d, m, space, {1e-3, 1e3, 0.8});
  CHECK(gamma2(one, sync, vec({0.0}), vec({0.0})).value(0, 0) == Approx(1.0).epsilon(1e-10));
  CHECK(gamma2(one, sync, vec({0.6}), vec({0.0})).value(0, 0) ==
        Approx(1.0 / (1.0 - 0.36)).epsilon(1e-10));
}

TEST_CASE("two-parameter Gamma matches Gaussian information per observation") {
  auto model = testing::scale_rho_model(1.3, 0.4);
  const auto sync = SchemeConstants::synchronous(choose_p_max(0.9));
  const Vector s0 = vec({1.3, 0.4});
  // Expected log-likelihood of one N(0, Sigma(s)) draw when the truth is Sigma(s0).
  const Matrix2 sig0 = model.sigma_matrix(0.0, s0);
  auto ell = [&](const Vector& s) {
    const Matrix2 sig = model.sigma_matrix(0.0, s);
    return -0.5 * (sig.inverse() * sig0).trace() - 0.5 * std::log(sig.determinant());
  };
  const Matrix fisher = -fd_hessian(ell, s0, model.space().sigma);
  const Matrix g1 = gamma1(model, sync, s0).value;
  CHECK((g1 - fisher).norm() <= 1e-5 * fisher.norm());
  const Matrix g2 = gamma2(model, sync, s0, vec({0.5, -0.5})).value;
  CHECK((g2 - Matrix(sig0.inverse())).norm() <= 1e-9);
}

TEST_CASE("Gamma under Poisson sampling matches exact Fisher information") {
  const double rho0 = 0.5;
  auto model = testing::rho_model(rho0, 1.0, 0.8);
  const auto c = poisson_constants(0.8);
  const double g1 = gamma1(model, c, vec({rho0})).value(0, 0);
  const double g2 = gamma2(model, c, vec({rho0}), vec({1.0})).value(0, 0);
  std::vector<double> f1, f2;
  const long n = 500;
  const double h = 0.1;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto s = generate_poisson(1.0, 1.0, n, h, 900 + seed);
    const Fisher f = exact_fisher(s, rho0);
    f1.push_back(f.sigma / static_cast<double>(n));
    f2.push_back(f.theta / s.horizon());
  }
  const auto m1 = stats::mean_sd(f1), m2 = stats::mean_sd(f2);
  INFO("Gamma1 " << g1 << " vs Fisher " << m1.mean << " +- " << m1.sd / std::sqrt(8.0));
  INFO("Gamma2 " << g2 << " vs Fisher " << m2.mean << " +- " << m2.sd / std::sqrt(8.0));
  CHECK(std::abs(g1 - m1.mean) <= 3.0 * m1.sd / std::sqrt(8.0) + 0.01 * g1);
  CHECK(std::abs(g2 - m2.mean) <= 3.0 * m2.sd / std::sqrt(8.0) + 0.01 * g2);
}

TEST_CASE("y1 and y2") {
  auto model = testing::rho_model(0.5, 1.0, 0.8);
  const auto sync = SchemeConstants::synchronous(choose_p_max(0.8));
  CHECK(y1(vec({0.5}), model, sync, vec({0.5})) == Approx(0.0).margin(1e-14));
  CHECK(y2(vec({1.0}), model, sync, vec({0.5}), vec({1.0})) == 0.0);
  for (double r : {-0.7, 0.0, 0.3, 0.7}) CHECK(y1(vec({r}), model, sync, vec({0.5})) < 0.0);

  // Curvature of y1 at the truth is -Gamma1.
  auto f = [&](const Vector& s) { return y1(s, model, sync, vec({0.5})); };
  const double curv = fd_hessian(f, vec({0.5}), model.space().sigma)(0, 0);
  CHECK(-curv == Approx(gamma1(model, sync, vec({0.5})).value(0, 0)).epsilon(1e-4));

  // Exact Gaussian expected log-likelihood difference per observation on the synchronous grid.
  auto gauss = [](double r, double r0) {
    Matrix2 s, s0;
    s << 1, r, r, 1;
    s0 << 1, r0, r0, 1;
    return -0.5 * (s.inverse() * s0).trace() - 0.5 * std::log(s.determinant());
  };
  CHECK(y1(vec({-0.2}), model, sync, vec({0.5})) == Approx(gauss(-0.2, 0.5) - gauss(0.5, 0.5)));

  // Linear drift with rho = 0: y2 = -(theta - theta0)^2 since Gamma2 = 2.
  auto zero = testing::rho_model(0.0, 1.0, 0.8);
  CHECK(y2(vec({2.5}), zero, sync, vec({0.0}), vec({1.0})) == Approx(-2.25));
}

TEST_CASE("n^-1 (H1(sigma) - H1(sigma0)) approaches y1") {
  auto model = testing::rho_model(0.5, 1.0, 0.8);
  const auto c = poisson_constants(0.8);
  const long n = 2000;
  const double h = 1.0 / std::sqrt(2000.0);
  for (double probe : {0.1, 0.7}) {
    std::vector<double> v;
    for (std::uint64_t r = 0; r < 20; ++r) {
      const auto s = generate_poisson(1.0, 1.0, n, h, 50 + r);
      const auto ov = build_overlap(s);
      // Zero drift: a nonzero mean adds an O(h_n) term to the contrast difference.
      const Vector dx = simulate_increments(s, ov, model, vec({0.5}), vec({0.0}), 80 + r);
      const Observation obs{s, ov, dx};
      v.push_back((h1(vec({probe}), obs, model) - h1(vec({0.5}), obs, model)) / n);
    }
    const auto ms = stats::mean_sd(v);
    const double limit = y1(vec({probe}), model, c, vec({0.5}));
    INFO("probe " << probe << ": MC " << ms.mean << " +- " << ms.sd / std::sqrt(20.0) << ", limit " << limit);
    CHECK(std::abs(ms.mean - limit) <= 4.0 * ms.sd / std::sqrt(20.0) + 0.02 * std::abs(limit));
  }
}

TEST_CASE("time averaging policies agree on constant coefficients") {
  const auto sync = SchemeConstants::synchronous(choose_p_max(0.9));
  DiffusionSpec d;
  d.rho = 0.3;
  d.free = {"scale"};
  DriftSpec m;
  m.directions = {Vector2(1.0, 0.5)};
  ParamSpace space{testing::box({0.2}, {3.0}), testing::box({-3.0}, {3.0}), vec({1.0}), vec({0.5})};
  auto flat = make_constant_model(d, m, space, {1e-3, 1e3, 0.9});
  auto periodic = make_periodic_model(d, m, PeriodicSpec{}, space, {1e-3, 1e3, 0.9});
  CoefficientModel general(
      space, [&](double t, const Vector& th) { return flat.drift(t, th); },
      [&](double t, const Vector& s) { return flat.diffusion(t, s); }, TimeStructure::general, 0.0,
      true, {1e-3, 1e3, 0.9});
  const auto a = gamma1(flat, sync, vec({1.2}));
  const auto b = gamma1(periodic, sync, vec({1.2}));
  const auto g = gamma1(general, sync, vec({1.2}), {20.0});
  CHECK(b.policy == "period");
  CHECK(g.policy.find("numeric") != std::string::npos);
  CHECK(a.value(0, 0) == Approx(b.value(0, 0)).epsilon(1e-10));
  CHECK(a.value(0, 0) == Approx(g.value(0, 0)).epsilon(1e-10));
  CHECK(g.averaging_gap < 1e-10);
  CHECK(gamma2(flat, sync, vec({1.2}), vec({0.5})).value(0, 0) ==
        Approx(gamma2(periodic, sync, vec({1.2}), vec({0.5})).value(0, 0)).epsilon(1e-10));

  // A genuinely periodic model: the period average equals a brute-force average.
  PeriodicSpec p{2.0, 0.3, 0.2, 0.5};
  auto wave = make_periodic_model(d, m, p, space, {1e-3, 1e3, 0.9});
  const double avg = gamma2(wave, sync, vec({1.0}), vec({0.5})).value(0, 0);
  double brute = 0.0;
  const int cells = 4000;
  for (int k = 0; k < cells; ++k) {
    const double t = 2.0 * (k + 0.5) / cells;
    const Matrix2 s = wave.sigma_matrix(t, vec({1.0}));
    const double slope = 1.0 + 0.5 * std::sin(std::numbers::pi * t);
    const Vector2 dm(slope * 1.0, slope * 0.5);
    brute += dm.dot(s.inverse() * dm) / cells;
  }
  CHECK(avg == Approx(brute).epsilon(1e-6));
}

TEST_CASE("guards") {
  auto model = testing::rho_model(0.5, 1.0, 0.8);
  CHECK_THROWS_AS(gamma1(model, SchemeConstants::synchronous(5), vec({0.5})), DomainError);

  // A diffusion that ignores sigma carries no information.
  ParamSpace space{testing::box({-1.0}, {1.0}), testing::box({-1.0}, {1.0}), vec({0.0}), vec({0.0})};
  CoefficientModel flat(
      space, [](double, const Vector& th) { return Vector2(th[0], th[0]); },
      [](double, const Vector&) { return Matrix2::Identity().eval(); }, TimeStructure::constant, 0.0,
      true, {1e-3, 1e3, 0.5});
  try {
    gamma1(flat, SchemeConstants::synchronous(choose_p_max(0.8)), vec({0.0}));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("Gamma1") != std::string::npos);
  }
  CHECK_THROWS_AS(inverse_sqrt(-Matrix::Identity(2, 2), "X"), NumericError);
}

TEST_CASE("epsilon_n") {
  const Matrix one = Matrix::Identity(1, 1);
  const Matrix e = epsilon_n(100, 0.1, one, one);
  CHECK(e(0, 0) == Approx(0.1));
  CHECK(e(1, 1) == Approx(1.0 / std::sqrt(10.0)));
  CHECK(e(0, 1) == 0.0);
  Matrix g(2, 2);
  g << 2.0, 0.5, 0.5, 1.0;
  const Matrix r = inverse_sqrt(g, "G");
  CHECK((r * g * r).isApprox(Matrix::Identity(2, 2), 1e-12));
  CHECK(r.isApprox(r.transpose()));
}

TEST_CASE("LAN: zero direction gives a zero log ratio") {
  auto model = testing::rho_model(0.5, 1.0, 0.8);
  LanOptions o;
  o.u = Vector::Zero(2);
  o.n = 200;
  o.h_n = 0.1;
  o.replications = 5;
  const auto s = lan_experiment(model, SchemeGenerator{}, SchemeConstants::synchronous(choose_p_max(0.8)), o);
  for (double v : s.log_ratios) CHECK(v == 0.0);
  CHECK(s.reference_mean == 0.0);
  o.u = Vector::Constant(2, 50.0);
  CHECK_THROWS_AS(lan_experiment(model, SchemeGenerator{}, SchemeConstants::synchronous(choose_p_max(0.8)), o),
                  ConfigError);
}
