#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "streamkit/oracle.hpp"
#include "streamkit/sensitivity.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace streamkit;
using namespace streamkit::testutil;

namespace {

Dataset empty_dataset(Eigen::Index d, double delta) {
  Dataset out;
  out.points.resize(0, d);
  out.weights.resize(0);
  out.delta = delta;
  return out;
}

}  // namespace

TEST_CASE("batch_sens on the first stream point returns 1") {
  Dataset batch = make_dataset({{7, 9}});
  BatchSensOptions opts;
  opts.k = 1;
  auto s = batch_sens(empty_dataset(2, 16.0), batch, opts);
  REQUIRE(s.size() == 1);
  CHECK(s[0].value == doctest::Approx(1.0));
}

TEST_CASE("batch_sens never returns zero away from existing centers") {
  Rng rng(301);
  Dataset z_set = random_mixture(rng, 40, 2, 2, 64.0);
  Dataset batch = make_dataset({{200, 200}});
  batch.delta = 256.0;
  BatchSensOptions opts;
  opts.k = 2;
  auto s = batch_sens(z_set, batch, opts);
  CHECK(s[0].value > 0.0);
}

TEST_CASE("duplicates plus a distinct point: estimate tracks the oracle") {
  int m = 12;
  Dataset x;
  x.points.resize(m + 1, 2);
  x.weights = Vector::Ones(m + 1);
  x.delta = 64.0;
  for (int i = 0; i < m; ++i) {
    x.points(i, 0) = 8;
    x.points(i, 1) = 8;
  }
  x.points(m, 0) = 40;
  x.points(m, 1) = 40;

  BatchSensOptions opts;
  opts.k = 1;
  opts.z = 2.0;
  auto s = batch_sens(empty_dataset(2, 64.0), x, opts);
  double tau = oracle::exact_medoids_sensitivity(x, m, 1, 2.0);
  double envelope = std::pow(2.0, 3 * 2.0 + 10);
  CHECK(s[static_cast<std::size_t>(m)].value >= tau / envelope);
  CHECK(s[static_cast<std::size_t>(m)].value <= envelope * tau);
}

TEST_CASE("batch_sens factor envelope against the oracle") {
  Rng rng(302);
  for (int rep = 0; rep < 8; ++rep) {
    double z = rep % 2 == 0 ? 1.0 : 2.0;
    int k = 1 + rep % 2;
    double envelope = std::pow(2.0, 3 * z + 10);
    Dataset x = random_mixture(rng, 20 + 4 * rep, 2, 2, 64.0, 0.1);
    BatchSensOptions opts;
    opts.k = k;
    opts.z = z;
    opts.seed = 900 + rep;
    auto s = batch_sens(empty_dataset(2, 64.0), x, opts);
    for (Eigen::Index q = 0; q < x.size(); ++q) {
      double tau = oracle::exact_medoids_sensitivity(x, q, k, z);
      double ratio = s[static_cast<std::size_t>(q)].value / tau;
      CHECK(ratio >= 1.0 / envelope);
      CHECK(ratio <= envelope);
    }
  }
}

TEST_CASE("coreset-relative sandwich: reweighted Z shifts estimates boundedly") {
  Rng rng(303);
  Dataset z_set = random_mixture(rng, 30, 2, 2, 64.0);
  Dataset batch = random_mixture(rng, 4, 2, 2, 64.0);
  BatchSensOptions opts;
  opts.k = 2;
  opts.seed = 42;

  auto s1 = batch_sens(z_set, batch, opts);
  auto s1_again = batch_sens(z_set, batch, opts);
  for (std::size_t i = 0; i < s1.size(); ++i)
    CHECK(s1[i].value == s1_again[i].value);  // determinism

  Dataset heavier = z_set;
  heavier.weights *= 2.0;
  auto s2 = batch_sens(heavier, batch, opts);
  double gamma = 2.0;
  double slack = std::pow(2.0, 3 * 2.0 + 10);
  for (std::size_t i = 0; i < s1.size(); ++i) {
    CHECK(s2[i].value <= gamma * slack * s1[i].value);
    CHECK(s2[i].value >= s1[i].value / (gamma * slack));
  }
}

TEST_CASE("medoids_vs_clustering_gap on trivial and symmetric instances") {
  Dataset singleton = make_dataset({{5.0, 5.0}});
  GapReport rep = medoids_vs_clustering_gap(singleton, 0, 1, 2.0, 1.0);
  CHECK(rep.medoid_sensitivity == doctest::Approx(1.0));
  CHECK(rep.grid_sensitivity == doctest::Approx(1.0));
  CHECK(rep.ratio == doctest::Approx(1.0));

  Dataset square = make_dataset({{2, 2}, {2, 6}, {6, 2}, {6, 6}});
  GapReport sq = medoids_vs_clustering_gap(square, 0, 1, 2.0, 1.0);
  double gamma = std::pow(2.0, 2.0 + 1.0) * 101.0;
  CHECK(sq.grid_sensitivity >= sq.medoid_sensitivity - 1e-12);
  CHECK(sq.grid_sensitivity <= gamma * sq.medoid_sensitivity);
}

TEST_CASE("gap ratios stay inside the constant-factor window on random instances") {
  Rng rng(304);
  for (int rep = 0; rep < 6; ++rep) {
    double z = rep % 2 == 0 ? 1.0 : 2.0;
    Dataset x = random_mixture(rng, 12, 2, 2, 16.0, 0.15);
    double gamma = std::pow(2.0, z + 1.0) * 101.0;
    for (Eigen::Index q = 0; q < x.size(); q += 4) {
      GapReport g = medoids_vs_clustering_gap(x, q, 1, z, 1.0);
      CHECK(g.medoid_sensitivity <= g.grid_sensitivity * (1.0 + 1e-9));
      CHECK(g.grid_sensitivity <= gamma * g.medoid_sensitivity);
    }
  }
}

TEST_CASE("online sampler keeps everything at unit sensitivity") {
  Rng rng(305);
  auto kept = online_sensitivity_sample(
      50, [](Eigen::Index) { return 1.0; }, 1.0, rng);
  REQUIRE(kept.size() == 50);
  for (const auto& s : kept) {
    CHECK(s.weight == doctest::Approx(1.0));
    CHECK(s.probability == doctest::Approx(1.0));
  }
}

TEST_CASE("repeated-point stream samples about lambda log n points") {
  // The online medoid sensitivity of the t-th duplicate is 1/t.
  Rng rng(306);
  const Eigen::Index n = 4000;
  const double lambda = 5.0;
  double mean = 0.0;
  const int seeds = 40;
  for (int s = 0; s < seeds; ++s) {
    Rng r = rng.derive("seed", s);
    auto kept = online_sensitivity_sample(
        n, [](Eigen::Index t) { return 1.0 / (1.0 + static_cast<double>(t)); },
        lambda, r);
    mean += static_cast<double>(kept.size());
  }
  mean /= seeds;
  double expected = 0.0;
  for (Eigen::Index t = 0; t < n; ++t)
    expected += std::min(1.0, lambda / (1.0 + static_cast<double>(t)));
  CHECK(mean >= 0.8 * expected);
  CHECK(mean <= 1.2 * expected);
  CHECK(mean <= 4.0 * lambda * std::log(static_cast<double>(n)));
}

TEST_CASE("sampler preserves clustering cost in expectation") {
  Rng rng(307);
  Dataset x = random_mixture(rng, 400, 2, 3, 256.0, 0.05);
  BatchSensOptions opts;
  opts.k = 3;
  opts.z = 2.0;
  auto sens = batch_sens(empty_dataset(2, 256.0), x, opts);

  Matrix c = random_matrix(rng, 3, 2, 100.0);
  c.array() += 128.0;
  CenterSet centers(c);
  double exact = clustering_cost(x, centers, 2.0);

  const int seeds = 400;
  double sum = 0.0, sum_sq = 0.0;
  for (int s = 0; s < seeds; ++s) {
    Rng r = rng.derive("mc", s);
    auto kept = online_sensitivity_sample(
        x.size(),
        [&](Eigen::Index t) { return sens[static_cast<std::size_t>(t)].value; },
        20.0, r);
    Dataset sampled;
    sampled.delta = x.delta;
    sampled.points.resize(static_cast<Eigen::Index>(kept.size()), 2);
    sampled.weights.resize(static_cast<Eigen::Index>(kept.size()));
    for (std::size_t i = 0; i < kept.size(); ++i) {
      sampled.points.row(static_cast<Eigen::Index>(i)) =
          x.points.row(kept[i].index);
      sampled.weights(static_cast<Eigen::Index>(i)) =
          x.weights(kept[i].index) * kept[i].weight;
    }
    double cost = sampled.empty() ? 0.0 : clustering_cost(sampled, centers, 2.0);
    sum += cost;
    sum_sq += cost * cost;
  }
  double mean = sum / seeds;
  double var = std::max(0.0, sum_sq / seeds - mean * mean);
  double stderr_mean = std::sqrt(var / seeds);
  CHECK(std::abs(mean - exact) <= 3.0 * stderr_mean + 1e-9 * exact);
}
