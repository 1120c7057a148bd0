#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "streamkit/oracle.hpp"
#include "streamkit/quadtree.hpp"
#include "streamkit/sensitivity.hpp"
#include "streamkit/solvers.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace streamkit;
using namespace streamkit::testutil;

namespace {

CrudeQuadTree build_unchecked(const IntMatrix& pts, std::int64_t zeta,
                              std::uint64_t seed, double kappa = 8.0) {
  Vector w = Vector::Ones(pts.rows());
  TreeBuildOptions opts;
  opts.zeta = zeta;
  opts.kappa = kappa;
  opts.max_retries = 1;
  Rng rng(seed);
  return build_tree_checked(pts, w, opts, rng);
}

}  // namespace

TEST_CASE("tree_dist is zero on identical points and walks levels") {
  IntMatrix pts(2, 1);
  pts << 3, 4;
  CrudeQuadTree tree = build_unchecked(pts, 4, 1);
  tree.shift.setZero();  // pin the shift for the hand computation

  IntVector a(1), b(1);
  a << 3;
  b << 4;
  CHECK(tree.tree_dist(a, a) == 0.0);
  // With zeta = 4 and zero shift: level 0 separates (side 1), level 1
  // separates (cells 0 and 1), level 2 merges (both in cell 0) -> the
  // first common level is 2 and TreeDist = sqrt(1) * 4^2.
  CHECK(tree.first_common_level(a, b) == 2);
  CHECK(tree.tree_dist(a, b) == doctest::Approx(16.0));
  CHECK(tree.tree_dist(a, b) >= dist(a.cast<double>(), b.cast<double>()));
}

TEST_CASE("contraction never violated over random pairs") {
  Rng rng(401);
  const Eigen::Index n = 500;
  IntMatrix pts(n, 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j)
      pts(i, j) = 1 + static_cast<std::int64_t>(rng.uniform_int(4096));
  Vector w = Vector::Ones(n);
  TreeBuildOptions opts;
  opts.zeta = 8;
  opts.kappa = 16.0;
  Rng trng(402);
  CrudeQuadTree tree = build_tree_checked(pts, w, opts, trng);

  int violations = 0;
  for (int rep = 0; rep < 100000; ++rep) {
    Eigen::Index a = static_cast<Eigen::Index>(rng.uniform_int(n));
    Eigen::Index b = static_cast<Eigen::Index>(rng.uniform_int(n));
    double td = tree.tree_dist(pts.row(a).transpose(), pts.row(b).transpose());
    double ed =
        dist(pts.row(a).transpose().cast<double>(),
             pts.row(b).transpose().cast<double>());
    if (ed > td * (1 + 1e-12)) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("level count stays O(1/iota)") {
  Rng rng(403);
  IntMatrix pts(100, 2);
  for (Eigen::Index i = 0; i < 100; ++i)
    for (int j = 0; j < 2; ++j)
      pts(i, j) = 1 + static_cast<std::int64_t>(rng.uniform_int(65536));
  for (std::int64_t zeta : {2, 4, 16, 64}) {
    CrudeQuadTree tree = build_unchecked(pts, zeta, 404);
    int bound = static_cast<int>(std::ceil(
                    std::log(2.0 * static_cast<double>(tree.delta)) /
                    std::log(static_cast<double>(zeta)))) +
                1;
    CHECK(tree.levels <= bound);
  }
}

TEST_CASE("single point accepts the first shift almost always") {
  IntMatrix pts(1, 2);
  pts << 1700, 2300;
  Vector w = Vector::Ones(1);
  TreeBuildOptions opts;
  opts.zeta = 4;
  opts.kappa = 200.0;
  Rng rng(405);
  int first_shift_ok = 0;
  for (int s = 0; s < 100; ++s) {
    Rng r = rng.derive("seed", s);
    CrudeQuadTree tree = build_tree_checked(pts, w, opts, r);
    CHECK(tree.margin_ok);
    if (tree.retries_used == 1) ++first_shift_ok;
  }
  CHECK(first_shift_ok >= 95);
}

TEST_CASE("accepted trees satisfy the dilation bound for all input pairs") {
  Rng rng(406);
  const Eigen::Index n = 24;
  IntMatrix pts(n, 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j)
      pts(i, j) = 1 + static_cast<std::int64_t>(rng.uniform_int(512));
  Vector w = Vector::Ones(n);
  TreeBuildOptions opts;
  opts.zeta = 8;
  opts.kappa = 64.0;
  opts.max_retries = 400;
  Rng trng(407);
  CrudeQuadTree tree = build_tree_checked(pts, w, opts, trng);
  REQUIRE(tree.margin_ok);
  double bound = opts.kappa * std::sqrt(2.0) * static_cast<double>(tree.zeta);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a + 1; b < n; ++b) {
      double ed = dist(pts.row(a).transpose().cast<double>(),
                       pts.row(b).transpose().cast<double>());
      double td = tree.tree_dist(pts.row(a).transpose(), pts.row(b).transpose());
      if (ed > 0) CHECK(td <= bound * ed * (1 + 1e-12));
    }
}

TEST_CASE("two points at half the grid span keep treedist within the bound") {
  IntMatrix pts(2, 2);
  pts << 10, 10, 10 + 256, 10;
  Vector w = Vector::Ones(2);
  TreeBuildOptions opts;
  opts.zeta = 8;
  opts.kappa = 32.0;
  opts.max_retries = 200;
  Rng rng(408);
  CrudeQuadTree tree = build_tree_checked(pts, w, opts, rng);
  REQUIRE(tree.margin_ok);
  double ed = 256.0;
  double td = tree.tree_dist(pts.row(0).transpose(), pts.row(1).transpose());
  CHECK(td >= ed);
  CHECK(td <= opts.kappa * std::sqrt(2.0) * tree.zeta * ed);
}

TEST_CASE("grid-aligned points accept at least as often as the lemma bound") {
  // Points on multiples of zeta^2 share their offsets at every level, so
  // the per-level margin events coincide across points.
  const int n_pts = 8;
  const int d = 2;
  // 4 x 2 lattice on multiples of 4096: offsets coincide across points at
  // every checked level, so the per-level margin events collapse.
  IntMatrix pts(n_pts, d);
  for (int i = 0; i < n_pts; ++i) {
    pts(i, 0) = 4096 * (1 + i % 4);
    pts(i, 1) = 4096 * (1 + i / 4);
  }
  Vector w = Vector::Ones(n_pts);
  double kappa = 100.0 * d * n_pts;
  TreeBuildOptions opts;
  opts.zeta = 8;
  opts.kappa = kappa;
  opts.max_retries = 1;

  Rng rng(409);
  int accepted = 0;
  const int seeds = 1000;
  for (int s = 0; s < seeds; ++s) {
    Rng r = rng.derive("seed", s);
    CrudeQuadTree tree = build_tree_checked(pts, w, opts, r);
    if (tree.margin_ok) ++accepted;
  }
  double acceptance = static_cast<double>(accepted) / seeds;
  CHECK(acceptance >= 1.0 - static_cast<double>(d * n_pts) / kappa);
}

TEST_CASE("retry exhaustion degrades gracefully") {
  // Expected margin failures per shift ~ n*d*levels/kappa >> 1, so every
  // retry fails with overwhelming probability.
  Rng rng(410);
  const Eigen::Index n = 500;
  IntMatrix pts(n, 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j)
      pts(i, j) = 1 + static_cast<std::int64_t>(rng.uniform_int(65536));
  Vector w = Vector::Ones(n);
  TreeBuildOptions opts;
  opts.zeta = 16;
  opts.kappa = 50.0;
  opts.max_retries = 5;
  Rng trng(411);
  CrudeQuadTree tree = build_tree_checked(pts, w, opts, trng);
  CHECK_FALSE(tree.margin_ok);
  CHECK(tree.retries_used == 5);
  CHECK(tree.achieved_margin >= 0.0);
  CHECK(tree.achieved_margin < 1.0 / opts.kappa);
  // The structure is still usable: contraction holds regardless.
  for (int rep = 0; rep < 1000; ++rep) {
    Eigen::Index a = static_cast<Eigen::Index>(trng.uniform_int(n));
    Eigen::Index b = static_cast<Eigen::Index>(trng.uniform_int(n));
    double td = tree.tree_dist(pts.row(a).transpose(), pts.row(b).transpose());
    double ed = dist(pts.row(a).transpose().cast<double>(),
                     pts.row(b).transpose().cast<double>());
    CHECK(ed <= td * (1 + 1e-12));
  }
}

TEST_CASE("rough_sens on a singleton stream returns 1") {
  Dataset z_set;
  z_set.points.resize(0, 2);
  z_set.weights.resize(0);
  z_set.delta = 64.0;
  Dataset batch = make_dataset({{5, 9}});
  RoughSensParams params;
  params.k = 1;
  auto s = rough_sens(z_set, batch, params);
  REQUIRE(s.size() == 1);
  CHECK(s[0].value == doctest::Approx(1.0));
  CHECK(s[0].quality == SensQuality::kCrude);
}

TEST_CASE("rough_sens brackets the oracle within the crude window") {
  Rng rng(412);
  const double alpha = 0.3;
  const double c_max = 4.0;
  for (int rep = 0; rep < 5; ++rep) {
    double z = rep % 2 == 0 ? 2.0 : 1.0;
    int k = 1 + rep % 2;
    Dataset x = random_mixture(rng, 30 + 5 * rep, 2, 2, 64.0, 0.1);
    double n = static_cast<double>(x.size());
    double window = std::pow(n, c_max * alpha);

    Dataset empty;
    empty.points.resize(0, 2);
    empty.weights.resize(0);
    empty.delta = 64.0;
    RoughSensParams params;
    params.k = k;
    params.z = z;
    params.alpha = alpha;
    params.iota = 0.25;
    params.seed = 500 + rep;
    auto s = rough_sens(empty, x, params);
    for (Eigen::Index q = 0; q < x.size(); q += 3) {
      double tau = oracle::exact_medoids_sensitivity(x, q, k, z);
      double ratio = s[static_cast<std::size_t>(q)].value / tau;
      CHECK(ratio >= 1.0 / window);
      CHECK(ratio <= window);
    }
  }
}

TEST_CASE("rough_sens separates duplicates from an outlier") {
  int m = 16;
  Dataset x;
  x.points.resize(m + 1, 2);
  x.weights = Vector::Ones(m + 1);
  x.delta = 128.0;
  for (int i = 0; i < m; ++i) {
    x.points(i, 0) = 16;
    x.points(i, 1) = 16;
  }
  x.points(m, 0) = 80;
  x.points(m, 1) = 80;

  Dataset empty;
  empty.points.resize(0, 2);
  empty.weights.resize(0);
  empty.delta = 128.0;
  RoughSensParams params;
  params.k = 1;
  params.z = 2.0;
  params.seed = 413;
  auto s = rough_sens(empty, x, params);
  double n = static_cast<double>(m + 1);
  CHECK(s[static_cast<std::size_t>(m)].value >= 1.0 / (n * n));
  CHECK(s[0].value <= 8.0 / m);
  CHECK(s[static_cast<std::size_t>(m)].value >= s[0].value);
}

TEST_CASE("rough and refined estimates agree within the crude window") {
  Rng rng(414);
  const double alpha = 0.3;
  const double c_max = 4.0;
  Dataset x = random_mixture(rng, 40, 2, 2, 64.0, 0.1);
  double window = std::pow(static_cast<double>(x.size()), c_max * alpha);

  Dataset empty;
  empty.points.resize(0, 2);
  empty.weights.resize(0);
  empty.delta = 64.0;
  RoughSensParams rp;
  rp.k = 2;
  rp.z = 2.0;
  rp.alpha = alpha;
  rp.seed = 415;
  auto rough = rough_sens(empty, x, rp);
  BatchSensOptions bp;
  bp.k = 2;
  bp.z = 2.0;
  auto refined = batch_sens(empty, x, bp);
  for (Eigen::Index q = 0; q < x.size(); ++q) {
    double ratio = rough[static_cast<std::size_t>(q)].value /
                   refined[static_cast<std::size_t>(q)].value;
    CHECK(ratio >= 1.0 / window);
    CHECK(ratio <= window);
  }
}
