#include "nsync/estimator.hpp"
#include "nsync/overlap.hpp"
#include "nsync/stats.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace nsync;
using Catch::Approx;
using testing::vec;

namespace {

struct Data {
  SamplingScheme scheme;
  OverlapMatrix overlap;
  Vector dx;
  Observation obs() const { return {scheme, overlap, dx}; }
};

Data simulate(const CoefficientModel& model, long n, double h, std::uint64_t seed,
              double lambda2 = 1.0) {
  auto s = generate_poisson(1.0, lambda2, n, h, seed);
  auto ov = build_overlap(s);
  Vector dx = simulate_increments(s, ov, model, *model.space().sigma_true,
                                  *model.space().theta_true, seed + 1000);
  return {std::move(s), std::move(ov), std::move(dx)};
}

SchemeConstants poisson_constants() {
  ConstantsOptions o;
  o.replications = 40;
  o.p_max = choose_p_max(0.8);
  o.n = 300;
  o.h_n = 0.1;
  o.seed = 77;
  return estimate_constants(SchemeGenerator{}, o).constants;
}

}  // namespace

TEST_CASE("h1 basics") {
  auto model = testing::rho_model(0.5);
  const auto d = simulate(model, 200, 0.1, 1);
  CHECK(h1(vec({0.5}), d.obs(), model) - h1(vec({0.5}), d.obs(), model) == 0.0);

  // rho = 0: the likelihood splits over intervals.
  CovarianceOperator op(d.scheme, d.overlap, model, vec({0.0}));
  double expect = 0.0;
  for (int i = 0; i < d.scheme.m(); ++i)
    expect -= 0.5 * (d.dx[i] * d.dx[i] / op.diagonal()[i] + std::log(op.diagonal()[i]));
  CHECK(h1(vec({0.0}), d.obs(), model) == Approx(expect).epsilon(1e-12));
}

TEST_CASE("h1 is maximized on average at the truth") {
  auto model = testing::rho_model(0.5);
  std::vector<double> below, above;
  for (std::uint64_t r = 0; r < 40; ++r) {
    const auto d = simulate(model, 400, 0.05, 100 + r);
    const double at = h1(vec({0.5}), d.obs(), model);
    below.push_back(h1(vec({0.2}), d.obs(), model) - at);
    above.push_back(h1(vec({0.75}), d.obs(), model) - at);
  }
  CHECK(stats::mean_sd(below).mean < 0.0);
  CHECK(stats::mean_sd(above).mean < 0.0);
}

TEST_CASE("maximize_h1 contract") {
  auto model = testing::scale_rho_model(1.2, -0.3);
  const auto d = simulate(model, 300, 0.1, 5, 1.5);
  OptimizerConfig cfg;
  const auto r1 = maximize_h1(d.obs(), model, cfg);
  const auto r2 = maximize_h1(d.obs(), model, cfg);
  CHECK(r1.x == r2.x);
  CHECK(r1.value == r2.value);
  CHECK(r1.starts.size() == 9);
  for (double v : r1.start_values) CHECK(r1.value >= v);
  CHECK(r1.converged);
  CHECK(std::abs(r1.x[0] - 1.2) < 0.2);
  CHECK(std::abs(r1.x[1] + 0.3) < 0.2);
}

TEST_CASE("h2 and the GLS step") {
  auto model = testing::rho_model(0.4, 1.0);
  const auto d = simulate(model, 300, 0.1, 9);
  CovarianceOperator s_hat(d.scheme, d.overlap, model, vec({0.4}));

  // Noiseless data: zero residual at theta*, and GLS returns theta* exactly.
  const Vector clean = drift_increments(d.scheme, model, vec({1.7}));
  const Observation noiseless{d.scheme, d.overlap, clean};
  CHECK(h2(vec({1.7}), s_hat, noiseless, model) == Approx(0.0).margin(1e-20));
  const auto g = gls_theta(s_hat, noiseless, model);
  REQUIRE(g);
  CHECK((*g)[0] == Approx(1.7).epsilon(1e-12));

  // Exactly quadratic in theta: constant second differences.
  auto f = [&](double t) { return h2(vec({t}), s_hat, d.obs(), model); };
  const double q1 = f(-1.0) - 2 * f(0.0) + f(1.0);
  const double q2 = f(1.0) - 2 * f(2.0) + f(3.0);
  CHECK(q1 == Approx(q2).epsilon(1e-9));

  OptimizerConfig cfg;
  const auto gls = maximize_h2(s_hat, d.obs(), model, cfg);
  CHECK(gls.method == "gls");
  cfg.closed_form = false;
  const auto simplex = maximize_h2(s_hat, d.obs(), model, cfg);
  CHECK(simplex.method == "simplex");
  CHECK(std::abs(gls.x[0] - simplex.x[0]) <= 1e-6);
  CHECK(gls.value >= simplex.value - 1e-9);
}

TEST_CASE("GLS on a synchronous grid is the pooled mean slope") {
  auto model = testing::scale_model(1.0, 0.5);
  const auto s = generate_equidistant(400, 0.05, 0.0);
  const auto ov = build_overlap(s);
  const Vector dx = simulate_increments(s, ov, model, vec({1.0}), vec({0.5}), 4);
  CovarianceOperator op(s, ov, model, vec({1.0}));
  const Observation obs{s, ov, dx};
  const auto g = gls_theta(op, obs, model);
  REQUIRE(g);
  CHECK((*g)[0] == Approx(dx.sum() / (2.0 * s.horizon())).epsilon(1e-12));
}

TEST_CASE("projection and boundary flags") {
  auto truth = testing::rho_model(0.5, 1.0);
  const auto d = simulate(truth, 400, 0.05, 12);
  // Same family with a box whose edge sits below the truth.
  DiffusionSpec ds;
  ds.free = {"rho"};
  DriftSpec m;
  m.directions = {Vector2(1.0, 1.0)};
  ParamSpace space{testing::box({-0.8}, {0.2}), testing::box({-2.0}, {0.0}), std::nullopt,
                   std::nullopt};
  auto narrow = make_constant_model(ds, m, space, {1e-3, 1e3, 0.8});
  const auto rep = estimate(d.obs(), narrow, OptimizerConfig{}, nullptr);
  CHECK(rep.sigma_hat[0] == Approx(0.2).margin(1e-6));
  CHECK(rep.stage1.boundary[0]);
  CHECK(rep.theta_hat[0] == 0.0);
  CHECK(rep.stage2.method == "gls-projected");
  CHECK(rep.stage2.boundary[0]);
}

TEST_CASE("estimate: standard errors with and without constants") {
  auto model = testing::rho_model(0.5, 1.0);
  const auto d = simulate(model, 2000, 1.0 / std::sqrt(2000.0), 31);
  const auto bare = estimate(d.obs(), model, OptimizerConfig{}, nullptr);
  CHECK_FALSE(bare.cov_sigma_plugin);
  CHECK_FALSE(bare.gamma1);
  REQUIRE(bare.cov_sigma_observed);
  REQUIRE(bare.cov_theta_observed);
  CHECK(bare.ci_source == "observed");
  CHECK(bare.ci_sigma(0, 0) < bare.sigma_hat[0]);
  CHECK(bare.ci_sigma(0, 1) > bare.sigma_hat[0]);

  const auto c = poisson_constants();
  const auto full = estimate(d.obs(), model, OptimizerConfig{}, &c);
  REQUIRE(full.cov_sigma_plugin);
  REQUIRE(full.cov_theta_plugin);
  CHECK(full.ci_source == "plug-in");
  CHECK(full.sigma_hat == bare.sigma_hat);
  const double s_plug = std::sqrt((*full.cov_sigma_plugin)(0, 0));
  const double s_obs = std::sqrt((*full.cov_sigma_observed)(0, 0));
  const double t_plug = std::sqrt((*full.cov_theta_plugin)(0, 0));
  const double t_obs = std::sqrt((*full.cov_theta_observed)(0, 0));
  CHECK(std::abs(s_plug / s_obs - 1.0) < 0.25);
  CHECK(std::abs(t_plug / t_obs - 1.0) < 0.25);
  CHECK(full.se_sigma()[0] == Approx(s_plug));
  CHECK(full.m1 == d.scheme.m1());
  CHECK(full.r_n == max_gap(d.scheme));
  CHECK(full.rho_bar == Approx(std::abs(full.sigma_hat[0])).epsilon(1e-10));
}

TEST_CASE("fd_hessian") {
  const Box b = testing::box({-1.0, -1.0}, {1.0, 1.0});
  auto f = [](const Vector& x) { return -(3 * x[0] * x[0] + x[0] * x[1] + 2 * x[1] * x[1]); };
  for (const Vector& at : {vec({0.1, -0.2}), vec({1.0, -1.0})}) {
    const Matrix h = fd_hessian(f, at, b);
    CHECK(h(0, 0) == Approx(-6.0).epsilon(1e-5));
    CHECK(h(0, 1) == Approx(-1.0).epsilon(1e-5));
    CHECK(h(1, 0) == h(0, 1));
    CHECK(h(1, 1) == Approx(-4.0).epsilon(1e-5));
  }
}

TEST_CASE("Hayashi-Yoshida") {
  auto model = testing::rho_model(0.5);
  const auto s = generate_equidistant(50, 0.2, 0.0);
  const auto ov = build_overlap(s);
  const Vector dx = simulate_increments(s, ov, model, vec({0.5}), vec({1.0}), 3);
  CHECK(hayashi_yoshida(dx, ov) == Approx(dx.head(50).dot(dx.tail(50))).epsilon(1e-14));

  for (double rho : {0.5, 0.0}) {
    auto m = testing::rho_model(rho, 0.0);
    std::vector<double> hy;
    for (std::uint64_t r = 0; r < 300; ++r) {
      const auto sc = generate_poisson(1.0, 1.0, 200, 0.1, r);
      const auto o = build_overlap(sc);
      hy.push_back(hayashi_yoshida(simulate_increments(sc, o, m, vec({rho}), vec({0.0}), r + 7), o));
    }
    const auto ms = stats::mean_sd(hy);
    CHECK(std::abs(ms.mean - rho * 20.0) <= 3.0 * ms.sd / std::sqrt(300.0));
  }
}

TEST_CASE("Nelder-Mead and multistart") {
  const Box b = testing::box({-2.0, -2.0}, {2.0, 2.0});
  OptimizerConfig cfg;
  auto rosen = [](const Vector& x) {
    return -(100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2));
  };
  const auto r = multistart_max(rosen, b, cfg);
  CHECK(r.x[0] == Approx(1.0).margin(1e-4));
  CHECK(r.x[1] == Approx(1.0).margin(1e-4));
  CHECK(r.starts.size() == 9);
  CHECK(r.starts[0][0] == Approx(-2.0 + 4.0 / 6.0));

  // Maximum outside the box lands on the edge; NaN regions are avoided.
  auto edge = [](const Vector& x) { return x[0] > 1.5 ? std::nan("") : x[0] + x[1]; };
  const auto e = multistart_max(edge, b, cfg);
  CHECK(e.x[0] == Approx(1.5).margin(1e-3));
  CHECK(e.x[1] == Approx(2.0).margin(1e-6));
  const auto flags = boundary_contact(e.x, b, 1e-6);
  CHECK_FALSE(flags[0]);
  CHECK(flags[1]);

  auto nothing = [](const Vector&) { return -std::numeric_limits<double>::infinity(); };
  CHECK_THROWS_AS(multistart_max(nothing, b, cfg), EstimationError);
  cfg.xtol = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("summary statistics") {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0, 10.0};
  const auto ms = stats::mean_sd(x);
  CHECK(ms.mean == Approx(4.0));
  CHECK(ms.sd == Approx(std::sqrt(12.5)));
  CHECK(stats::skewness(std::vector<double>{1.0, 2.0, 3.0}) == Approx(0.0).margin(1e-14));
  CHECK(stats::skewness(x) > 0.0);
  CHECK(stats::normal_cdf(0.0) == 0.5);
  CHECK(stats::normal_cdf(1.959963984540054) == Approx(0.975).epsilon(1e-12));
  CHECK(stats::ks_normal(std::vector<double>{0.0}) == Approx(0.5));

  Rng rng(1);
  std::normal_distribution<double> z;
  std::vector<double> big(20000);
  for (auto& v : big) v = z(rng);
  CHECK(std::abs(stats::skewness(big)) < 0.1);
  CHECK(std::abs(stats::excess_kurtosis(big)) < 0.15);
  CHECK(stats::ks_normal(big) < 0.015);
  for (auto& v : big) v = std::abs(v);
  CHECK(stats::ks_normal(big) > 0.3);
}
