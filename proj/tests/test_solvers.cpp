#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "streamkit/oracle.hpp"
#include "streamkit/solvers.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace streamkit;
using namespace streamkit::testutil;

namespace {

Dataset two_clusters(Rng& rng, int per_cluster, double gap) {
  Dataset out;
  out.points.resize(2 * per_cluster, 2);
  out.weights = Vector::Ones(2 * per_cluster);
  out.delta = gap + 10.0;
  for (int i = 0; i < per_cluster; ++i) {
    out.points(i, 0) = std::round(5 + rng.uniform() * 2);
    out.points(i, 1) = std::round(5 + rng.uniform() * 2);
    out.points(per_cluster + i, 0) = std::round(5 + gap + rng.uniform() * 2);
    out.points(per_cluster + i, 1) = std::round(5 + rng.uniform() * 2);
  }
  return out;
}

}  // namespace

TEST_CASE("local search returns all points when k covers the support") {
  Dataset x = make_dataset({{1, 1}, {2, 2}, {3, 3}});
  CenterSet c = local_search_medoids(x, 3, 2.0);
  CHECK(c.size() == 3);
  CHECK(clustering_cost(x, c, 2.0) == 0.0);
  CenterSet more = local_search_medoids(x, 5, 2.0);
  CHECK(more.size() == 3);
}

TEST_CASE("local search finds per-cluster medoids on separated clusters") {
  Rng rng(201);
  Dataset x = two_clusters(rng, 5, 200.0);
  CenterSet c = local_search_medoids(x, 2, 2.0);
  auto [opt_centers, opt_cost] = oracle::exact_medoids_opt(x, 2, 2.0);
  CHECK(clustering_cost(x, c, 2.0) == doctest::Approx(opt_cost));
}

TEST_CASE("local search stays within the desk envelope of the optimum") {
  Rng rng(202);
  for (int rep = 0; rep < 5; ++rep) {
    Dataset x = random_mixture(rng, 30, 2, 3, 256.0, 0.05);
    CenterSet c =
        local_search_medoids(x, 3, 2.0, 0, rng.derive("ls", rep));
    auto [opt_centers, opt_cost] = oracle::exact_medoids_opt(x, 3, 2.0);
    double cost = clustering_cost(x, c, 2.0);
    CHECK(cost >= opt_cost - 1e-9);
    if (opt_cost > 0) CHECK(cost <= 25.0 * opt_cost);
  }
}

TEST_CASE("adaptive sampling draws the first center by weight") {
  Dataset x;
  x.points.resize(11, 2);
  x.weights.resize(11);
  x.delta = 100.0;
  for (int i = 0; i < 10; ++i) {
    x.points(i, 0) = i;
    x.points(i, 1) = 0;
    x.weights(i) = 1.0;
  }
  x.points(10, 0) = 50;
  x.points(10, 1) = 50;
  x.weights(10) = 1e6;

  Rng rng(203);
  int heavy_first = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    Rng r = rng.derive("trial", rep);
    CenterSet c = adaptive_sampling_seed(x, 2, 2.0, r);
    if (c.centers(0, 0) == 50 && c.centers(0, 1) == 50) ++heavy_first;
  }
  CHECK(heavy_first >= 990);
}

TEST_CASE("adaptive sampling hits both separated clusters") {
  Rng rng(204);
  Dataset x = two_clusters(rng, 20, 500.0);
  int both = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    Rng r = rng.derive("trial", rep);
    CenterSet c = adaptive_sampling_seed(x, 2, 2.0, r);
    bool left = false, right = false;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      if (c.centers(i, 0) < 250)
        left = true;
      else
        right = true;
    }
    if (left && right) ++both;
  }
  CHECK(both >= 950);
}

TEST_CASE("fast_kz_approx collapses duplicates to zero cost") {
  Dataset x;
  x.points = Matrix::Constant(50, 2, 7.0);
  x.weights = Vector::Ones(50);
  x.delta = 16.0;
  FastKzParams params;
  params.k = 3;
  params.z = 2.0;
  FastKzResult res = fast_kz_approx(x, params);
  CHECK(res.cost_estimate == 0.0);
}

TEST_CASE("fast_kz_approx with k = n reaches zero cost") {
  Rng rng(205);
  Dataset x = random_mixture(rng, 12, 2, 3, 64.0);
  FastKzParams params;
  params.k = 12;
  params.z = 2.0;
  FastKzResult res = fast_kz_approx(x, params);
  CHECK(res.cost_estimate == 0.0);
}

TEST_CASE("fast_kz_approx estimate is crude but bounded on a planted mixture") {
  Rng rng(206);
  Dataset x = random_mixture(rng, 1000, 2, 5, 4096.0, 0.01);
  FastKzParams params;
  params.k = 5;
  params.z = 1.0;
  params.iota = 0.25;
  params.seed = 207;
  FastKzResult res = fast_kz_approx(x, params);
  CenterSet ls = local_search_medoids(x, 5, 1.0, 0, Rng(208));
  double ls_cost = clustering_cost(x, ls, 1.0);
  CHECK(res.cost_estimate >= 0.0);
  CHECK(res.cost_estimate <= 100.0 * std::max(ls_cost, 1.0));
}

TEST_CASE("constrained_with_center sanity when x is already a center") {
  Rng rng(209);
  Dataset x = random_mixture(rng, 25, 2, 3, 64.0);
  CenterSet sol = local_search_medoids(x, 3, 2.0, 0, rng.derive("s"));
  sol = prepare_swap_bookkeeping(x, sol);
  Vector q = sol.centers.row(0).transpose();
  auto [swap, psi_total] = constrained_with_center(x, sol, q, 2.0);
  CHECK(psi_total >= clustering_cost(x, sol, 2.0) - 1e-9);
  CHECK(swap.psi >= 0.0);
  CHECK(swap.removed_center >= 0);
}

TEST_CASE("constrained_with_center hand computation for k = 1") {
  // X = n copies of c plus the query x itself.
  int n = 6;
  Dataset x;
  x.points.resize(n + 1, 2);
  x.weights = Vector::Ones(n + 1);
  x.delta = 32.0;
  for (int i = 0; i < n; ++i) {
    x.points(i, 0) = 4;
    x.points(i, 1) = 4;
  }
  x.points(n, 0) = 10;
  x.points(n, 1) = 12;
  CenterSet c = make_centers({{4, 4}});
  c = prepare_swap_bookkeeping(x, c);
  Vector q(2);
  q << 10, 12;
  double dist_xq = std::sqrt(36.0 + 64.0);
  auto [swap, psi_total] = constrained_with_center(x, c, q, 2.0);
  // psi = n_c * min(r_c, dist(c, x))^2 with n_c = n + 1 (x itself is served
  // by c); Cost(X, C) keeps x's own contribution.
  double expected_psi = (n + 1) * dist_xq * dist_xq;
  double expected_total = dist_xq * dist_xq + expected_psi;
  CHECK(swap.psi == doctest::Approx(expected_psi));
  CHECK(psi_total == doctest::Approx(expected_total));
}

TEST_CASE("constrained estimate brackets the enumerated constrained optimum") {
  Rng rng(210);
  double z = 2.0;
  double envelope = std::pow(2.0, 3 * z + 7);
  Dataset x = random_mixture(rng, 20, 2, 2, 64.0);
  CenterSet sol = local_search_medoids(x, 2, z, 0, rng.derive("sol"));
  sol = prepare_swap_bookkeeping(x, sol);
  double base = clustering_cost(x, sol, z);
  for (int qi = 0; qi < 10; ++qi) {
    Eigen::Index q = (qi * 2) % x.size();
    Vector point = x.points.row(q).transpose();
    auto [swap, psi_total] = constrained_swap_estimate(sol, point, z, base);

    // Enumerated optimum over all size-2 subsets containing q.
    double opt = std::numeric_limits<double>::infinity();
    for (Eigen::Index b = 0; b < x.size(); ++b) {
      double cost = 0.0;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        double dq = (x.points.row(i) - x.points.row(q)).norm();
        double db = (x.points.row(i) - x.points.row(b)).norm();
        cost += x.weights(i) * pow_z(std::min(dq, db), z);
      }
      opt = std::min(opt, cost);
    }
    CHECK(psi_total >= opt / envelope);
    CHECK(psi_total <= envelope * std::max(opt, 1e-12));
  }
}

TEST_CASE("cached nearest-other distances stay within 2^{z+1} for c != u") {
  Rng rng(211);
  double z = 2.0;
  Dataset x = random_mixture(rng, 30, 2, 4, 64.0);
  CenterSet sol = local_search_medoids(x, 4, z, 0, rng.derive("sol"));
  sol = prepare_swap_bookkeeping(x, sol);
  for (int qi = 0; qi < 10; ++qi) {
    Vector q = x.points.row((qi * 3) % x.size()).transpose();
    Eigen::Index u = nearest_center(q, sol.centers);
    for (Eigen::Index c = 0; c < sol.size(); ++c) {
      if (c == u) continue;
      double cached = (*sol.nearest_other)(c);
      double truth = std::numeric_limits<double>::infinity();
      for (Eigen::Index o = 0; o < sol.size(); ++o)
        if (o != c)
          truth = std::min(truth,
                           (sol.centers.row(c) - sol.centers.row(o)).norm());
      truth = std::min(truth, (sol.centers.row(c).transpose() - q).norm());
      CHECK(pow_z(cached, z) <= pow_z(2.0, z + 1.0) * pow_z(truth, z) + 1e-9);
      CHECK(pow_z(cached, z) >= pow_z(truth, z) - 1e-9);
    }
  }
}
