#include "medrep/phantom.hpp"
#include "medrep/skeleton.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <set>

using namespace medrep;

namespace {

// Direct evaluation of the flux sum with a closed-form gradient.
double analytic_flux(const std::function<Vec3(const Vec3&)>& grad, const Vec3& q, double radius, int dirs) {
  double s = 0.0;
  for (const Vec3& n : fibonacci_sphere(dirs)) s += grad(q + radius * n).dot(n);
  return s / dirs;
}

// 13-layer slab (k = 1..13, mid-plane k = 7) in a 25 x 25 x 15 grid.
BinaryMask thick_slab() {
  GridGeometry g;
  g.dims = {25, 25, 15};
  return testing::box_mask(g, {0, 0, 1}, {24, 24, 13});
}

double fraction_near(const MedialSkeleton& s, const MedialSheet& sheet, double tol) {
  int good = 0;
  for (const Vec3& p : s.points) good += sheet.distance(p) <= tol;
  return static_cast<double>(good) / static_cast<double>(s.size());
}

}  // namespace

TEST_CASE("fibonacci lattice is unit length and includes both poles") {
  const auto d = fibonacci_sphere(64);
  REQUIRE(d.size() == 64);
  for (const Vec3& v : d) CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(d.front().isApprox(Vec3(0, 0, 1)));
  CHECK(d.back().z() == doctest::Approx(-1.0));
  Vec3 mean = Vec3::Zero();
  for (const Vec3& v : d) mean += v;
  CHECK(mean.norm() / 64 < 0.02);
}

TEST_CASE("sphere centre flux is -1") {
  PhantomSpec spec;
  spec.kind = PhantomKind::kSphere;
  spec.half_thickness = 8.0;
  const Phantom ph = generate_phantom(spec);
  const GradientField grad = gradient_field(distance_transform(ph.mask));
  for (int dirs : {60, 64, 128}) {
    const FluxField flux = average_outward_flux(grad, default_flux_radius(ph.mask.geom), dirs);
    const Vec3i c = (ph.mask.geom.dims - Vec3i::Ones()) / 2;
    CHECK(flux(c.x(), c.y(), c.z()) == doctest::Approx(-1.0).epsilon(0.05));
  }
}

TEST_CASE("slab flux matches the analytic-gradient sum") {
  const BinaryMask m = thick_slab();
  const GradientField grad = gradient_field(distance_transform(m));
  const double r = default_flux_radius(m.geom);
  const FluxField flux = average_outward_flux(grad, r, 64);
  const double mid_z = 7.0;
  auto slab_grad = [mid_z](const Vec3& p) -> Vec3 {
    if (p.z() == mid_z) return Vec3::Zero();
    return Vec3(0, 0, p.z() < mid_z ? 1.0 : -1.0);
  };

  const double mid = flux(12, 12, 7);
  const double mid_ref = analytic_flux(slab_grad, m.geom.world(12, 12, 7), r, 64);
  CHECK(mid <= -0.5);
  CHECK(mid_ref <= -0.5);
  CHECK(mid == doctest::Approx(mid_ref).epsilon(1e-9));

  for (int k : {4, 10}) {
    const double off = flux(12, 12, k);
    const double off_ref = analytic_flux(slab_grad, m.geom.world(12, 12, k), r, 64);
    CHECK(std::abs(off) < 0.1);
    CHECK(std::abs(off_ref) < 0.1);
    CHECK(off == doctest::Approx(off_ref).epsilon(1e-9));
  }
}

TEST_CASE("flux is bounded and NaN outside the mask") {
  const Phantom ph = generate_phantom(PhantomSpec{});
  const FluxField flux = average_outward_flux(gradient_field(distance_transform(ph.mask)), 1.5, 64);
  for (std::size_t i = 0; i < flux.size(); ++i) {
    if (ph.mask.data[i]) {
      REQUIRE(std::abs(flux.data[i]) <= 1.0 + 1e-6);
    } else {
      REQUIRE(std::isnan(flux.data[i]));
    }
  }
}

TEST_CASE("flux preconditions") {
  const BinaryMask m = thick_slab();
  const GradientField grad = gradient_field(distance_transform(m));
  CHECK_THROWS_AS(average_outward_flux(grad, 1.5, 20), ComputeError);
  CHECK_THROWS_AS(average_outward_flux(grad, 0.5, 64), ComputeError);
  GridGeometry g;
  g.dims = {6, 6, 3};
  const GradientField flat = gradient_field(distance_transform(testing::box_mask(g, {0, 0, 1}, {5, 5, 1})));
  CHECK_THROWS_AS(average_outward_flux(flat, 1.5, 64), ComputeError);
}

TEST_CASE("flux under a 90 degree rotation about z") {
  const Phantom ph = generate_phantom(PhantomSpec{});
  const BinaryMask& m = ph.mask;
  const Vec3i d = m.geom.dims;
  GridGeometry rg = m.geom;
  rg.dims = {d.y(), d.x(), d.z()};
  BinaryMask rot(rg, 0);
  // (i, j, k) -> (ny - 1 - j, i, k)
  for (int k = 0; k < d.z(); ++k)
    for (int j = 0; j < d.y(); ++j)
      for (int i = 0; i < d.x(); ++i) rot(d.y() - 1 - j, i, k) = m(i, j, k);
  const GradientField ga = gradient_field(distance_transform(m));
  const GradientField gb = gradient_field(distance_transform(rot));
  auto worst_diff = [&](DirectionLattice lattice) {
    const FluxField a = average_outward_flux(ga, 1.5, 64, lattice);
    const FluxField b = average_outward_flux(gb, 1.5, 64, lattice);
    double worst = 0.0, mean = 0.0;
    int n = 0;
    for (int k = 0; k < d.z(); ++k)
      for (int j = 0; j < d.y(); ++j)
        for (int i = 0; i < d.x(); ++i) {
          if (!m(i, j, k)) continue;
          const double diff = std::abs(a(i, j, k) - b(d.y() - 1 - j, i, k));
          worst = std::max(worst, diff);
          mean += diff;
          ++n;
        }
    return std::pair{worst, mean / n};
  };
  SUBCASE("cubed lattice is exactly invariant") {
    CHECK(worst_diff(DirectionLattice::kCubed).first < 1e-3);
  }
  SUBCASE("fibonacci lattice differs only at quadrature level") {
    const auto [worst, mean] = worst_diff(DirectionLattice::kFibonacci);
    CHECK(worst < 0.1);
    CHECK(mean < 1e-2);
  }
}

TEST_CASE("cubed lattice") {
  const auto d = cubed_sphere(64);
  CHECK(d.size() == 96);
  for (const Vec3& v : d) CHECK(v.norm() == doctest::Approx(1.0));
  CHECK(cubed_sphere(54).size() == 54);
  // Slab mid-plane and sphere centre hold with this lattice too.
  const BinaryMask m = thick_slab();
  const FluxField flux = average_outward_flux(gradient_field(distance_transform(m)), 1.5, 64, DirectionLattice::kCubed);
  CHECK(flux(12, 12, 7) <= -0.5);
  CHECK(std::abs(flux(12, 12, 4)) < 0.1);
}

TEST_CASE("extract_skeleton thresholds") {
  const BinaryMask m = thick_slab();
  const FluxField flux = average_outward_flux(gradient_field(distance_transform(m)), 1.5, 64);
  CHECK_THROWS_AS(extract_skeleton(flux, -1.1), ComputeError);
  const MedialSkeleton all = extract_skeleton(flux, 1.1);
  CHECK(all.size() == count(m));
  const MedialSkeleton s = extract_skeleton(flux, -0.2);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s.flux[i] < -0.2);
}

TEST_CASE("upsample_points examples") {
  GridGeometry g;
  g.dims = {1, 1, 2};
  BinaryMask two(g, 1);
  const PointCloud p2 = upsample_points(two);
  REQUIRE(p2.size() == 4);
  std::set<double> zs;
  for (const Vec3& p : p2) {
    CHECK(p.x() == 0.0);
    CHECK(p.y() == 0.0);
    zs.insert(p.z());
  }
  const std::vector<double> expect{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
  std::size_t i = 0;
  for (double z : zs) CHECK(z == doctest::Approx(expect[i++]).epsilon(1e-12));

  BinaryMask one(testing::cube_geometry(3), 0);
  one(1, 1, 1) = 1;
  CHECK(upsample_points(one).size() == 1);

  GridGeometry lg;
  lg.dims = {3, 1, 1};
  CHECK(upsample_points(BinaryMask(lg, 1)).size() == 7);

  CHECK_THROWS_AS(upsample_points(two, 0.4), ComputeError);
}

TEST_CASE("refined mask contains every upsampled point") {
  const Phantom ph = generate_phantom(PhantomSpec{});
  const BinaryMask fine = refine_mask(ph.mask, 3);
  for (const Vec3& p : upsample_points(ph.mask)) {
    const Vec3 u = fine.geom.to_index(p);
    const Vec3 r = u.array().round();
    REQUIRE((u - r).cwiseAbs().maxCoeff() < 1e-9);
    REQUIRE(in_mask(fine, static_cast<int>(r.x()), static_cast<int>(r.y()), static_cast<int>(r.z())));
  }
}

TEST_CASE("skeleton recovers the analytic sheet of slab and bent tube") {
  const double tol = std::sqrt(3.0);
  SUBCASE("slab") {
    PhantomSpec spec;
    spec.kind = PhantomKind::kSlab;
    spec.length = 24.0;
    const Phantom ph = generate_phantom(spec);
    const MedialSkeleton s = skeletonize(ph.mask, SkeletonOptions{});
    REQUIRE(s.size() > 0);
    CHECK(fraction_near(s, *ph.sheet, tol) >= 0.9);
    // Voxels on the analytic sheet with a skeleton point within one voxel.
    int mid = 0, hit = 0;
    for (std::size_t idx = 0; idx < ph.mask.size(); ++idx) {
      const Vec3 c = ph.mask.geom.world(idx);
      if (!ph.mask.data[idx] || ph.sheet->distance(c) > 1e-9) continue;
      ++mid;
      for (const Vec3& p : s.points)
        if ((p - c).norm() <= 1.0) {
          ++hit;
          break;
        }
    }
    CHECK(static_cast<double>(hit) / mid >= 0.95);
  }
  SUBCASE("bent tube") {
    const Phantom ph = generate_phantom(PhantomSpec{});
    const MedialSkeleton s = skeletonize(ph.mask, SkeletonOptions{});
    REQUIRE(s.size() > 0);
    CHECK(fraction_near(s, *ph.sheet, tol) >= 0.9);
    int grid = 0;
    for (PointSource src : s.source) grid += src == PointSource::kGridVoxel;
    CHECK(grid > 0);
    CHECK(grid < static_cast<int>(s.size()));
  }
}

TEST_CASE("skeleton csv round trip") {
  MedialSkeleton s;
  s.points = {Vec3(0.1, -2.5, 3.0), Vec3(1.0 / 3.0, 2.0, 1e-7)};
  s.flux = {-0.75, -0.3333333333333333};
  s.source = {PointSource::kGridVoxel, PointSource::kInterpolated};
  const auto dir = testing::temp_dir("skel_csv");
  write_skeleton_csv(s, dir / "s.csv");
  const MedialSkeleton back = read_skeleton_csv(dir / "s.csv");
  REQUIRE(back.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(back.points[i] == s.points[i]);
    CHECK(back.flux[i] == s.flux[i]);
    CHECK(back.source[i] == s.source[i]);
  }
}
