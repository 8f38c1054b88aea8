#include "nsync/gaussian.hpp"
#include "nsync/overlap.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <numbers>
#include <sstream>

using namespace nsync;
using Catch::Approx;
using testing::vec;

namespace {

Matrix2 corr(double rho) {
  Matrix2 s;
  s << 1.0, rho, rho, 1.0;
  return s;
}

/// Raw moments of X'AX from its cumulants k_r = 2^{r-1} (r-1)! tr((AV)^r).
double moment_from_cumulants(const Matrix& a, const Matrix& v, int order) {
  const Matrix as = 0.5 * (a + a.transpose());
  const Matrix m = as * v;
  Matrix p = m;
  double k[5] = {0, 0, 0, 0, 0};
  double fact = 1.0;
  for (int r = 1; r <= 4; ++r) {
    if (r > 1) fact *= (r - 1);
    k[r] = std::pow(2.0, r - 1) * fact * p.trace();
    p = p * m;
  }
  switch (order) {
    case 2: return k[2] + k[1] * k[1];
    case 3: return k[3] + 3 * k[2] * k[1] + std::pow(k[1], 3);
    default:
      return k[4] + 4 * k[3] * k[1] + 3 * k[2] * k[2] + 6 * k[2] * k[1] * k[1] + std::pow(k[1], 4);
  }
}

/// Dense S_n for a time-varying model by composite midpoint integration of Sigma_t.
Matrix dense_by_midpoints(const SamplingScheme& s, const CoefficientModel& model,
                          const Vector& sigma, int cells = 400) {
  const int m = s.m();
  Matrix out = Matrix::Zero(m, m);
  for (int a = 0; a < m; ++a) {
    for (int b = 0; b < m; ++b) {
      const auto ia = s.stacked_interval(a), ib = s.stacked_interval(b);
      const double lo = std::max(ia.lo, ib.lo), hi = std::min(ia.hi, ib.hi);
      if (hi <= lo) continue;
      const int ca = s.stacked_coordinate(a) - 1, cb = s.stacked_coordinate(b) - 1;
      const double dt = (hi - lo) / cells;
      double sum = 0.0;
      for (int c = 0; c < cells; ++c) sum += model.sigma_matrix(lo + (c + 0.5) * dt, sigma)(ca, cb);
      out(a, b) = sum * dt;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("hand-evaluated 3x3 covariance") {
  SamplingScheme s({0.0, 2.0}, {0.0, 1.0, 2.0}, 2, 1.0);
  const auto ov = build_overlap(s);
  for (double rho : {0.0, 0.3, -0.6}) {
    auto model = testing::rho_model(0.0, 1.0, 0.8);
    CovarianceOperator op(s, ov, model, vec({rho}));
    Matrix expect(3, 3);
    expect << 2.0, rho, rho, rho, 1.0, 0.0, rho, 0.0, 1.0;
    CHECK(op.to_dense().isApprox(expect, 1e-14));
    CHECK(op.logdet() == Approx(std::log(2.0 - 2.0 * rho * rho)).margin(1e-14));
    CHECK(op.quad_form(vec({1.0, 0.0, 0.0})) == Approx(1.0 / (2.0 - 2.0 * rho * rho)));
    CHECK(op.quad_form(Vector::Zero(3)) == 0.0);
  }
}

TEST_CASE("diagonal and synchronous structure") {
  const auto s = generate_poisson(1.0, 1.0, 40, 0.25, 3);
  const auto ov = build_overlap(s);
  auto model = testing::rho_model();
  CovarianceOperator op(s, ov, model, vec({0.0}));
  const Matrix d = op.to_dense();
  CHECK((d - Matrix(d.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0);
  const Vector v = Vector::LinSpaced(s.m(), -1.0, 2.0);
  CHECK(op.quad_form(v) == Approx((v.array().square() / op.diagonal().array()).sum()));
  CHECK(op.logdet() == Approx(op.diagonal().array().log().sum()));

  const auto sync = generate_equidistant(10, 0.5, 0.0);
  const auto so = build_overlap(sync);
  CovarianceOperator sop(sync, so, model, vec({0.4}));
  const Matrix sd = sop.to_dense();
  CHECK(sd.topLeftCorner(10, 10).isApprox(0.5 * Matrix::Identity(10, 10)));
  CHECK(sd.bottomRightCorner(10, 10).isApprox(0.5 * Matrix::Identity(10, 10)));
  CHECK(sd.topRightCorner(10, 10).isApprox(0.2 * Matrix::Identity(10, 10)));
}

TEST_CASE("operator matches dense oracle on random schemes") {
  auto model = testing::rho_model(0.5, 1.0, 0.8);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto s = generate_poisson(1.0, 1.5, 60, 0.3, seed);
    const auto ov = build_overlap(s);
    const double rho = -0.7 + 0.2 * static_cast<double>(seed);
    CovarianceOperator op(s, ov, model, vec({rho}));
    const Matrix dense = testing::dense_covariance(s, corr(rho));
    CHECK(op.to_dense().isApprox(dense, 1e-13));
    Eigen::LLT<Matrix> llt(dense);
    const double ld = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    CHECK(op.logdet() == Approx(ld).epsilon(1e-11));
    Rng rng(seed);
    std::normal_distribution<double> z;
    Vector v(s.m());
    for (auto& x : v) x = z(rng);
    CHECK((op.solve(v) - llt.solve(v)).norm() <= 1e-10 * llt.solve(v).norm());
    CHECK((op.multiply(v) - dense * v).norm() <= 1e-12 * (dense * v).norm());
    CHECK(op.quad_form(v) == Approx(v.dot(llt.solve(v))).epsilon(1e-11));
    // correlate gives a square root: C C' = S.
    Matrix c(s.m(), s.m());
    for (int k = 0; k < s.m(); ++k) c.col(k) = op.correlate(Vector::Unit(s.m(), k));
    CHECK((c * c.transpose()).isApprox(dense, 1e-12));
  }
}

TEST_CASE("time-varying model matches midpoint oracle") {
  DiffusionSpec d;
  d.rho = 0.3;
  d.free = {"scale"};
  DriftSpec m;
  m.directions = {Vector2(1.0, 0.5)};
  PeriodicSpec p{1.0, 0.3, 0.2, 0.5};
  ParamSpace space{testing::box({0.2}, {3.0}), testing::box({-3.0}, {3.0}), vec({1.0}), vec({0.5})};
  auto model = make_periodic_model(d, m, p, space, {1e-3, 1e3, 0.9});
  const auto s = generate_poisson(1.0, 2.0, 12, 0.25, 4);
  const auto ov = build_overlap(s);
  CovarianceOperator op(s, ov, model, vec({1.3}));
  CHECK(op.to_dense().isApprox(dense_by_midpoints(s, model, vec({1.3})), 1e-5));

  // Drift increments against the same midpoint rule.
  const Vector dv = drift_increments(s, model, vec({0.7}));
  for (int k = 0; k < s.m(); ++k) {
    const auto iv = s.stacked_interval(k);
    const int l = s.stacked_coordinate(k);
    double sum = 0.0;
    const int cells = 2000;
    const double dt = iv.length() / cells;
    for (int c = 0; c < cells; ++c) sum += model.drift(iv.lo + (c + 0.5) * dt, vec({0.7}))[l - 1];
    CHECK(dv[k] == Approx(sum * dt).epsilon(1e-6));
  }
}

TEST_CASE("factorization failure reports the pivot") {
  // Perfectly correlated coordinates on synchronous grids: S_n is singular.
  ParamSpace space{testing::box({-1.0}, {1.0}), testing::box({-1.0}, {1.0}), vec({0.0}), vec({0.0})};
  CoefficientModel singular(
      space, [](double, const Vector&) { return Vector2::Zero().eval(); },
      [](double, const Vector&) {
        Matrix2 b;
        b << 1.0, 0.0, 1.0, 0.0;
        return b;
      },
      TimeStructure::constant, 0.0, true, {1e-3, 1e3, 0.999});
  const auto s = generate_equidistant(5, 1.0, 0.0);
  const auto ov = build_overlap(s);
  try {
    CovarianceOperator op(s, ov, singular, vec({0.0}));
    FAIL("expected NotPositiveDefinite");
  } catch (const NotPositiveDefinite& e) {
    // Time order puts grid 1 first on ties, so the first failure is a grid-2 index.
    CHECK(e.pivot() >= 5);
    CHECK(e.pivot() < 10);
  }
}

TEST_CASE("rho_bar") {
  const auto s = generate_poisson(1.0, 1.0, 50, 0.2, 8);
  const auto ov = build_overlap(s);
  auto model = testing::rho_model(0.5, 1.0, 0.8);
  CHECK(rho_bar(s, ov, model, vec({0.0})) == 0.0);
  CHECK(rho_bar(s, ov, model, vec({-0.6})) == Approx(0.6).epsilon(1e-12));
  CovarianceOperator op(s, ov, model, vec({-0.6}));
  CHECK(op.rho_pairs() == Approx(0.6).epsilon(1e-12));
  CHECK(rho_bar(s, ov, model, model.space().sigma) == Approx(0.8).epsilon(1e-12));

  // Periodic correlation: interval averages never exceed the pointwise supremum.
  DiffusionSpec d;
  d.rho = 0.3;
  d.free = {"scale"};
  DriftSpec m;
  m.directions = {Vector2(1.0, 0.0)};
  PeriodicSpec p{1.0, 0.0, 0.4, 0.0};
  ParamSpace space{testing::box({0.5}, {2.0}), testing::box({-1.0}, {1.0}), vec({1.0}), vec({0.0})};
  auto wave = make_periodic_model(d, m, p, space, {1e-3, 1e3, 0.8});
  CovarianceOperator wop(s, ov, wave, vec({1.0}));
  CHECK(wop.rho_pairs() <= 0.7 + 1e-12);
  CHECK(rho_bar(s, ov, wave, vec({1.0})) == Approx(0.7).epsilon(1e-3));
}

TEST_CASE("log-determinant series with certified tail") {
  auto model = testing::rho_model(0.5, 1.0, 0.8);
  for (double rho : {0.0, 0.3, 0.6, 0.8}) {
    const auto s = generate_poisson(1.0, 1.0, 100, 0.1, 21);
    const auto ov = build_overlap(s);
    CovarianceOperator op(s, ov, model, vec({rho}));
    for (int p_max : {1, 5, 60}) {
      const auto chk = logdet_series_check(op, p_max);
      // Neglected terms are all negative: the truncated series sits above the exact value.
      CHECK(chk.value >= op.logdet() - 1e-9);
      CHECK(chk.value - op.logdet() <= chk.tail_bound + 1e-9);
    }
    if (rho == 0.0) {
      CHECK(logdet_series_check(op, 3).value == Approx(op.diagonal().array().log().sum()));
      CHECK(logdet_series_check(op, 3).tail_bound == 0.0);
    }
  }
}

TEST_CASE("exact simulation reproduces mean and covariance") {
  auto model = testing::rho_model(0.5, 1.0, 0.8);
  SamplingScheme s({0.0, 0.7, 1.5, 2.6, 4.0}, {0.0, 1.1, 1.9, 3.2, 4.0}, 4, 1.0);
  const auto ov = build_overlap(s);
  CovarianceOperator op(s, ov, model, vec({0.5}));
  const Vector mean = drift_increments(s, model, vec({1.0}));
  const Matrix target = op.to_dense();
  const int draws = 40000;
  Rng rng(2024);
  Matrix sum = Matrix::Zero(8, 8), sq = Matrix::Zero(8, 8);
  Vector mean_sum = Vector::Zero(8);
  for (int r = 0; r < draws; ++r) {
    const Vector x = draw_increments(op, mean, rng) - mean;
    mean_sum += x;
    const Matrix xx = x * x.transpose();
    sum += xx;
    sq += xx.cwiseProduct(xx);
  }
  const Matrix emp = sum / draws;
  const Matrix se = ((sq / draws - emp.cwiseProduct(emp)) / draws).cwiseSqrt();
  for (int i = 0; i < 8; ++i) {
    CHECK(std::abs(mean_sum[i] / draws) <= 5.0 * std::sqrt(target(i, i) / draws));
    for (int j = 0; j < 8; ++j) CHECK(std::abs(emp(i, j) - target(i, j)) <= 5.0 * se(i, j));
  }
  // Same seed, same path.
  CHECK(simulate_increments(s, ov, model, vec({0.5}), vec({1.0}), 9) ==
        simulate_increments(s, ov, model, vec({0.5}), vec({1.0}), 9));
}

TEST_CASE("quadratic-form moments") {
  const Matrix id = Matrix::Identity(2, 2);
  CHECK(gaussian_quadform_moments(id, id, 2) == 8.0);
  for (int k : {2, 3, 4})
    CHECK(gaussian_quadform_moments(Matrix::Zero(3, 3), Matrix::Identity(3, 3), k) == 0.0);
  Rng rng(5);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 10; ++trial) {
    const int m = 1 + trial % 5;
    Matrix a(m, m), b(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        a(i, j) = z(rng);
        b(i, j) = z(rng);
      }
    const Matrix v = b * b.transpose() + 0.1 * Matrix::Identity(m, m);
    for (int k : {2, 3, 4}) {
      const double expect = moment_from_cumulants(a, v, k);
      CHECK(gaussian_quadform_moments(a, v, k) == Approx(expect).epsilon(1e-10));
    }
  }
  CHECK_THROWS_AS(gaussian_quadform_moments(id, id, 5), ContractError);
}

TEST_CASE("increment and covariance dumps") {
  const Vector dx = vec({0.25, -1.5, 3.0, 1e-17, 2.0});
  std::stringstream ss;
  write_increments(ss, dx, 2, 3);
  CHECK(read_increments(ss, 2, 3) == dx);

  std::stringstream wrong("3 2\n1 2 3\n4 5\n");
  CHECK_THROWS_AS(read_increments(wrong, 2, 3), DataError);
  std::stringstream junk("2 3\n1 2\n4 oops 6\n");
  try {
    read_increments(junk, 2, 3);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  SamplingScheme s({0.0, 2.0}, {0.0, 1.0, 2.0}, 2, 1.0);
  const auto ov = build_overlap(s);
  auto model = testing::rho_model();
  CovarianceOperator op(s, ov, model, vec({0.5}));
  std::stringstream coo;
  op.write_coo(coo);
  std::string header;
  std::getline(coo, header);
  CHECK(header.rfind("1 2", 0) == 0);
  int lines = 0, r = 0, c = 0;
  double v = 0.0;
  while (coo >> r >> c >> v) {
    ++lines;
    CHECK(op.to_dense()(r - 1, c - 1) == Approx(v));
  }
  CHECK(lines == 7);  // three diagonal entries and two overlap pairs in both triangles
}
