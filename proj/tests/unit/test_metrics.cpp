#include <doctest.h>

#include <random>

#include "afford/error.hpp"
#include "afford/metrics.hpp"

using namespace afford;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::IoError;
}

Plane<double> plane(Eigen::Index r, Eigen::Index c, std::initializer_list<double> v) {
  Plane<double> p(r, c);
  auto it = v.begin();
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) p(i, j) = *it++;
  return p;
}

// scalar loops over row-major pixels, written without Eigen reductions
double oracle_kld(const Plane<double>& p, const Plane<double>& g) {
  double sp = 0, sg = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j) sp += p(i, j), sg += g(i, j);
  double out = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const double pi = p(i, j) / sp, gi = g(i, j) / sg;
      out += gi * std::log(2.2204e-16 + gi / (2.2204e-16 + pi));
    }
  return out;
}

double oracle_sim(const Plane<double>& p, const Plane<double>& g) {
  double sp = 0, sg = 0, out = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j) sp += p(i, j), sg += g(i, j);
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j) out += std::min(p(i, j) / sp, g(i, j) / sg);
  return out;
}

double oracle_nss(const Plane<double>& p, const Plane<double>& g) {
  const double n = double(p.size());
  double mean = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) mean += p(i);
  mean /= n;
  double var = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) var += (p(i) - mean) * (p(i) - mean);
  const double sd = std::sqrt(var / n);
  double total = 0;
  int count = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (g(i) > 0) total += (p(i) - mean) / sd, ++count;
  return total / count;
}

Plane<double> random_map(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double zero_rate = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Plane<double> p(r, c);
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = u(rng) < zero_rate ? 0.0 : u(rng);
  if (p.sum() == 0.0) p(0) = 1.0;
  return p;
}

}  // namespace

TEST_CASE("metric worked examples") {
  const Plane<double> pred = plane(1, 2, {1, 1}), gt = plane(1, 2, {1, 0});
  CHECK(kld(pred, gt) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(sim(pred, gt) == doctest::Approx(0.5));

  const Plane<double> spike = plane(2, 2, {1, 0, 0, 0});
  CHECK(nss(spike, spike).value == doctest::Approx(std::sqrt(3.0)));
  CHECK(sim(plane(2, 2, {1, 0, 0, 0}), plane(2, 2, {0.25, 0.25, 0.25, 0.25})) == doctest::Approx(0.25));

  CHECK(kld(spike, spike) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sim(spike, spike) == doctest::Approx(1.0));
}

TEST_CASE("metric preconditions") {
  const Plane<double> z = Plane<double>::Zero(2, 2), one = Plane<double>::Ones(2, 2);
  CHECK(code_of([&] { kld(z, one); }) == ErrorCode::ZeroMass);
  CHECK(code_of([&] { sim(one, z); }) == ErrorCode::ZeroMass);
  CHECK(code_of([&] { nss(one, z); }) == ErrorCode::EmptyFixationSet);
  CHECK(code_of([&] { kld(one, Plane<double>::Ones(2, 3)); }) == ErrorCode::DimensionMismatch);
  const NssResult flat = nss(one, one);
  CHECK(flat.degenerate);
  CHECK(flat.value == 0.0);
  // threshold is exclusive
  CHECK(code_of([&] { nss(plane(1, 2, {0, 1}), plane(1, 2, {0.5, 0.5}), 0.5); }) == ErrorCode::EmptyFixationSet);
}

TEST_CASE("metrics agree with scalar-loop oracles on 8x8 maps") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const Plane<double> p = random_map(rng, 8, 8, 0.3), g = random_map(rng, 8, 8, 0.5);
    CHECK(std::abs(kld(p, g) - oracle_kld(p, g)) < 1e-9 * (1.0 + std::abs(oracle_kld(p, g))));
    CHECK(std::abs(sim(p, g) - oracle_sim(p, g)) < 1e-12);
    if (p.maxCoeff() > p.minCoeff()) CHECK(std::abs(nss(p, g).value - oracle_nss(p, g)) < 1e-9);
  }
}

TEST_CASE("metric invariants") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index r = std::uniform_int_distribution<Eigen::Index>(1, 7)(rng);
    const Eigen::Index c = std::uniform_int_distribution<Eigen::Index>(1, 7)(rng);
    const Plane<double> p = random_map(rng, r, c, 0.2), g = random_map(rng, r, c, 0.4);
    const double s = sim(p, g), k = kld(p, g);
    CHECK(s >= -1e-12);
    CHECK(s <= 1.0 + 1e-12);
    CHECK(s == doctest::Approx(sim(g, p)));
    CHECK(k >= -1e-9);
    // scale invariance of the density-based metrics
    const double a = u(rng);
    CHECK(sim(Plane<double>(p * a), g) == doctest::Approx(s));
    CHECK(kld(Plane<double>(p * a), g) == doctest::Approx(k).epsilon(1e-9));
    CHECK(sim(p, p) == doctest::Approx(1.0));
    CHECK(kld(p, p) <= 1e-9);
    // NSS is invariant to positive affine changes of the prediction
    if (p.maxCoeff() > p.minCoeff()) {
      const double shift = u(rng);
      CHECK(nss(Plane<double>(p * a + shift), g).value == doctest::Approx(nss(p, g).value).epsilon(1e-9));
    }
  }
}

TEST_CASE("batch evaluation keeps skipped pairs out of the means") {
  const Plane<double> gt = plane(1, 2, {1, 0});
  std::vector<EvalPair> pairs = {
      {"a", plane(1, 2, {1, 1}), gt},
      {"b", plane(1, 2, {1, 0}), gt},
      {"c", std::nullopt, gt},
      {"d", Plane<double>::Zero(1, 2), gt},
      {"e", plane(1, 3, {1, 1, 1}), gt},
  };
  const MetricSummary s = evaluate_batch(pairs);
  CHECK(s.evaluated == 2);
  CHECK(s.skipped == 3);
  REQUIRE(s.records.size() == 5);
  CHECK(s.records[2].skipped);
  CHECK(s.records[2].skip_reason == "missing prediction");
  CHECK(s.records[3].skip_reason.find("ZeroMass") != std::string::npos);
  CHECK(s.records[4].skip_reason.find("DimensionMismatch") != std::string::npos);
  CHECK(s.mean_sim == doctest::Approx((0.5 + 1.0) / 2));
  CHECK(s.mean_kld == doctest::Approx(std::log(2.0) / 2).epsilon(1e-9));
  CHECK(s.mean_nss == doctest::Approx((0.0 + 1.0) / 2));

  CHECK(code_of([&] { evaluate_batch({{"x", std::nullopt, gt}}); }) == ErrorCode::AllPairsSkipped);
  const std::string json = report_json(s);
  CHECK(json.find("\"summary\"") != std::string::npos);
  CHECK(json.find("\"items\"") != std::string::npos);
}
