#include "medrep/surface.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>

using namespace medrep;
using std::numbers::pi;

namespace {

using Map = std::function<Vec3(const ParamCoord&)>;

std::vector<ParamCoord> lattice(int m) {
  std::vector<ParamCoord> t;
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) t.emplace_back(i / (m - 1.0), j / (m - 1.0));
  return t;
}

PrincipalSurface interpolate(const Map& f, int m = 15, double lambda = 0.0) {
  const auto t = lattice(m);
  PointCloud y;
  for (const auto& p : t) y.push_back(f(p));
  return fit_tps(t, y, lambda);
}

Vec3 plane(const ParamCoord& t) { return Vec3(t.x(), t.y(), 0.0); }

// Quarter cylinder of radius 20 around the z axis, height 20.
Vec3 cylinder(const ParamCoord& t) {
  const double th = 0.5 * pi * t.x();
  return Vec3(20 * std::cos(th), 20 * std::sin(th), 20 * t.y());
}

Vec3 sphere10(const ParamCoord& t) {
  const double th = 0.5 * pi * t.x(), ph = 0.25 * pi + 0.5 * pi * t.y();
  return 10.0 * Vec3(std::sin(ph) * std::cos(th), std::sin(ph) * std::sin(th), std::cos(ph));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

}  // namespace

TEST_SUITE("pca_parameterize") {
  TEST_CASE("planar rectangle fills the unit square, t1 along the long side") {
    PointCloud pts;
    for (int j = 0; j <= 8; ++j)
      for (int i = 0; i <= 4; ++i) pts.emplace_back(0.5 * i, 0.5 * j, 0.0);
    const auto t = pca_parameterize(pts);
    for (std::size_t k = 0; k < pts.size(); ++k) {
      CHECK(t[k].x() == doctest::Approx(pts[k].y() / 4.0).epsilon(1e-12));
      CHECK(t[k].y() == doctest::Approx(pts[k].x() / 2.0).epsilon(1e-12));
    }
  }

  TEST_CASE("unit square corners map to corners") {
    const PointCloud pts{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
    const auto t = pca_parameterize(pts);
    for (const auto& p : t) {
      CHECK((std::abs(p.x()) < 1e-12 || std::abs(p.x() - 1) < 1e-12));
      CHECK((std::abs(p.y()) < 1e-12 || std::abs(p.y() - 1) < 1e-12));
    }
    CHECK((t[0] - t[3]).norm() == doctest::Approx(std::sqrt(2.0)));
  }

  TEST_CASE("collinear points are rejected") {
    const PointCloud pts{{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {3, 3, 3}};
    CHECK_THROWS_AS(pca_parameterize(pts), ComputeError);
  }

  TEST_CASE("noisy plane is reconstructed") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::normal_distribution<double> noise(0.0, 0.01);
    PointCloud pts;
    for (int i = 0; i < 300; ++i) pts.emplace_back(u(rng), 0.5 * u(rng), noise(rng));
    const auto t = pca_parameterize(pts);
    const PrincipalSurface s = fit_tps(t, pts, select_lambda_gcv(t, pts));
    double ss = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) ss += (s(t[i]) - pts[i]).squaredNorm();
    CHECK(std::sqrt(ss / pts.size()) < 0.05);
  }
}

TEST_SUITE("fit_tps") {
  TEST_CASE("affine data is reproduced at lambda 0") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::Matrix<double, 3, 3> A = Eigen::Matrix<double, 3, 3>::Random();
    std::vector<ParamCoord> t;
    PointCloud y;
    for (int i = 0; i < 40; ++i) {
      t.emplace_back(u(rng), u(rng));
      y.push_back(A.col(0) + t.back().x() * A.col(1) + t.back().y() * A.col(2));
    }
    const PrincipalSurface s = fit_tps(t, y, 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK((s(t[i]) - y[i]).cwiseAbs().maxCoeff() < 1e-8);
    const ParamCoord off(0.37, 0.81);
    CHECK((s(off) - (A.col(0) + off.x() * A.col(1) + off.y() * A.col(2))).norm() < 1e-8);
  }

  TEST_CASE("huge lambda tends to the least-squares plane") {
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<ParamCoord> t;
    PointCloud y;
    for (int i = 0; i < 60; ++i) {
      t.emplace_back(u(rng), u(rng));
      y.emplace_back(std::sin(4 * t.back().x()), t.back().y() * t.back().y(), std::exp(t.back().x() * t.back().y()));
    }
    const PrincipalSurface s = fit_tps(t, y, 1e9);
    Eigen::MatrixXd P(60, 3), Y(60, 3);
    for (int i = 0; i < 60; ++i) {
      P.row(i) << 1.0, t[i].x(), t[i].y();
      Y.row(i) = y[i].transpose();
    }
    const Eigen::MatrixXd beta = P.colPivHouseholderQr().solve(Y);
    const Eigen::MatrixXd plane_fit = P * beta;
    for (int i = 0; i < 60; ++i) CHECK((s(t[i]) - plane_fit.row(i).transpose()).norm() < 1e-4);
  }

  TEST_CASE("bump is interpolated at lambda 0") {
    const PrincipalSurface s = interpolate([](const ParamCoord& t) {
      return Vec3(t.x(), t.y(), std::exp(-20 * (t - ParamCoord(0.5, 0.5)).squaredNorm()));
    }, 9);
    for (const auto& t : lattice(9))
      CHECK(std::abs(s(t).z() - std::exp(-20 * (t - ParamCoord(0.5, 0.5)).squaredNorm())) < 1e-8);
  }

  TEST_CASE("preconditions") {
    const auto t = lattice(4);
    PointCloud y;
    for (const auto& p : t) y.push_back(plane(p));
    CHECK_THROWS_AS(fit_tps(t, y, -1.0), ComputeError);
    CHECK_THROWS_AS(fit_tps({t.begin(), t.begin() + 5}, {y.begin(), y.begin() + 5}, 0.0), ComputeError);
    std::vector<ParamCoord> line;
    PointCloud ly;
    for (int i = 0; i < 8; ++i) {
      line.emplace_back(i / 7.0, i / 7.0);
      ly.emplace_back(i, i, 0);
    }
    CHECK_THROWS_AS(fit_tps(line, ly, 0.0), ComputeError);
    // Duplicated sites are merged rather than making the system singular.
    auto t2 = t;
    auto y2 = y;
    t2.push_back(t[3]);
    y2.push_back(y[3] + Vec3(0, 0, 2));
    const PrincipalSurface s = fit_tps(t2, y2, 0.0);
    CHECK(s(t[3]).z() == doctest::Approx(1.0));
  }

  TEST_CASE("gcv picks a penalty from the grid") {
    std::mt19937 rng(2);
    std::normal_distribution<double> noise(0.0, 0.05);
    const auto t = lattice(10);
    PointCloud y;
    for (const auto& p : t) y.push_back(cylinder(p) + Vec3(noise(rng), noise(rng), noise(rng)));
    const double lambda = select_lambda_gcv(t, y);
    const auto grid = default_lambda_grid();
    CHECK(std::find(grid.begin(), grid.end(), lambda) != grid.end());
  }
}

TEST_SUITE("projection") {
  TEST_CASE("point on the surface projects to itself") {
    const PrincipalSurface s = interpolate(cylinder);
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (int i = 0; i < 50; ++i) {
      const ParamCoord t(u(rng), u(rng));
      const Projection p = project_to_surface(s, s(t));
      CHECK((p.t - t).norm() < 1e-4);
      CHECK(p.distance < 1e-6);
    }
  }

  TEST_CASE("plane perpendicular foot") {
    const PrincipalSurface s = interpolate(plane, 6);
    const Projection p = project_to_surface(s, Vec3(0.3, 0.4, 2.0));
    CHECK(p.distance == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(p.t.x() == doctest::Approx(0.3).epsilon(1e-7));
    CHECK(p.t.y() == doctest::Approx(0.4).epsilon(1e-7));
    // Outside the domain the foot is clamped to the edge.
    const Projection e = project_to_surface(s, Vec3(1.5, 0.5, 0.0));
    CHECK(e.t.x() == 1.0);
    CHECK(e.distance == doctest::Approx(0.5));
  }

  TEST_CASE("matches a 512 x 512 brute-force grid") {
    const PrincipalSurface s = interpolate(cylinder);
    const int m = 512;
    PointCloud grid(static_cast<std::size_t>(m) * m);
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < m; ++i) grid[static_cast<std::size_t>(i + m * j)] = s(ParamCoord(i / (m - 1.0), j / (m - 1.0)));
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0), off(1.0, 4.0);
    std::bernoulli_distribution side(0.5);
    for (int k = 0; k < 100; ++k) {
      const ParamCoord t(u(rng), u(rng));
      const Vec3 q = s(t) + (side(rng) ? 1.0 : -1.0) * off(rng) * surface_normal(s, t);
      double brute = std::numeric_limits<double>::infinity();
      for (const Vec3& g : grid) brute = std::min(brute, (g - q).squaredNorm());
      brute = std::sqrt(brute);
      const double d = project_to_surface(s, q).distance;
      CHECK(d <= brute + 1e-3);
      CHECK(std::abs(d - brute) < 1e-3);
    }
  }

  TEST_CASE("projection is deterministic") {
    const PrincipalSurface s = interpolate(sphere10);
    const Vec3 q(1.0, 2.0, 0.5);
    const Projection a = project_to_surface(s, q), b = project_to_surface(s, q);
    CHECK(a.t == b.t);
    CHECK(a.distance == b.distance);
  }
}

TEST_SUITE("iterate_fit") {
  TEST_CASE("planar skeleton converges immediately") {
    PointCloud pts;
    for (int j = 0; j < 12; ++j)
      for (int i = 0; i < 20; ++i) pts.emplace_back(i * 0.7, j * 0.9, 5.0);
    FitOptions opts;
    opts.lambda = 0.0;
    const PrincipalSurface s = iterate_fit(pts, opts);
    CHECK(s.converged);
    CHECK(s.stop_reason == "displacement");
    CHECK(s.log.size() <= 3);
    CHECK(s.log.back().mean_sq_residual < 1e-6);
  }

  TEST_CASE("infinite tolerance fits once") {
    PointCloud pts;
    for (const auto& t : lattice(8)) pts.push_back(cylinder(t));
    FitOptions opts;
    opts.tol = std::numeric_limits<double>::infinity();
    const PrincipalSurface s = iterate_fit(pts, opts);
    CHECK(s.log.size() == 1);
    CHECK(s.stop_reason == "single-fit");
  }

  TEST_CASE("residual is non-increasing over accepted iterations") {
    std::mt19937 rng(8);
    std::normal_distribution<double> noise(0.0, 0.3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PointCloud pts;
    for (int i = 0; i < 300; ++i) pts.push_back(cylinder({u(rng), u(rng)}) + Vec3(noise(rng), noise(rng), noise(rng)));
    const PrincipalSurface s = iterate_fit(pts, FitOptions{});
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& r : s.log) {
      if (!r.accepted) continue;
      CHECK(r.mean_sq_residual <= prev + 1e-9);
      prev = r.mean_sq_residual;
    }
    CHECK(s.params.size() == pts.size());
    CHECK(s.log.size() <= 26);
  }

  TEST_CASE("too few points") {
    CHECK_THROWS_AS(iterate_fit(PointCloud{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, FitOptions{}), ComputeError);
  }
}

TEST_SUITE("normals and curvature") {
  TEST_CASE("plane normals are consistently signed") {
    const PrincipalSurface s = interpolate(plane, 6);
    const ReferenceGrid g = sample_reference_grid(s, 40);
    const double sign = g.normals[0].z();
    CHECK(std::abs(sign) == doctest::Approx(1.0));
    for (const Vec3& n : g.normals) CHECK(n.isApprox(Vec3(0, 0, sign), 1e-9));
  }

  TEST_CASE("cylinder normals are radial within one degree") {
    const PrincipalSurface s = interpolate(cylinder);
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.02, 0.98);
    for (int i = 0; i < 100; ++i) {
      const ParamCoord t(u(rng), u(rng));
      const Vec3 p = s(t);
      const Vec3 radial = Vec3(p.x(), p.y(), 0).normalized();
      const double angle = std::acos(std::min(1.0, std::abs(surface_normal(s, t).dot(radial)))) * 180 / pi;
      CHECK(angle < 1.0);
    }
  }

  TEST_CASE("normals are orthogonal to the analytic tangents") {
    const PrincipalSurface s = interpolate(sphere10);
    std::mt19937 rng(6);
    std::uniform_real_distribution<double> u(0.001, 0.999);
    for (int i = 0; i < 100; ++i) {
      const ParamCoord t(u(rng), u(rng));
      const Vec3 n = surface_normal(s, t);
      const auto J = s.jacobian(t);
      CHECK(n.norm() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(std::abs(n.dot(J.col(0))) < 1e-5);
      CHECK(std::abs(n.dot(J.col(1))) < 1e-5);
    }
  }

  TEST_CASE("analytic jacobian matches finite differences") {
    const PrincipalSurface s = interpolate(sphere10);
    const ParamCoord t(0.31, 0.62);
    const double h = 1e-6;
    const auto J = s.jacobian(t);
    CHECK((J.col(0) - (s(t + ParamCoord(h, 0)) - s(t - ParamCoord(h, 0))) / (2 * h)).norm() < 1e-6);
    CHECK((J.col(1) - (s(t + ParamCoord(0, h)) - s(t - ParamCoord(0, h))) / (2 * h)).norm() < 1e-6);
  }

  TEST_CASE("degenerate tangents") {
    const PrincipalSurface s = interpolate([](const ParamCoord& t) { return Vec3(t.x(), 0, 0); }, 6);
    CHECK_THROWS_AS(surface_normal(s, {0.5, 0.5}), ComputeError);
  }

  TEST_CASE("gaussian curvature of plane, cylinder and sphere") {
    const auto at = lattice(9);
    std::vector<ParamCoord> inner;
    for (const auto& t : at) inner.push_back(0.05 + 0.9 * t.array());

    const CurvatureReport rp = gaussian_curvature(interpolate(plane, 6), inner);
    for (const auto& f : rp.points) {
      CHECK(f.valid);
      CHECK(std::abs(f.K) < 1e-6);
    }
    const CurvatureReport rc = gaussian_curvature(interpolate(cylinder), inner);
    for (const auto& f : rc.points) CHECK(std::abs(f.K) < 1e-3);

    const CurvatureReport rs = gaussian_curvature(interpolate(sphere10), inner);
    std::vector<double> k;
    for (const auto& f : rs.points) {
      CHECK(f.valid);
      CHECK(f.E * f.G - f.F * f.F > 0.0);
      CHECK(f.K == doctest::Approx((f.L * f.N - f.M * f.M) / (f.E * f.G - f.F * f.F)));
      k.push_back(f.K);
    }
    const double med = median(k);
    CHECK(med >= 0.8 / 100.0);
    CHECK(med <= 1.2 / 100.0);
  }

  TEST_CASE("curvature filter") {
    CurvatureReport r;
    r.points.resize(5);
    for (auto& f : r.points) {
      f.valid = true;
      f.K = 0.0;
    }
    const double kmax = default_kmax(Vec3(1.0, 2.0, 1.5));
    CHECK(kmax == 4.0);
    CHECK(curvature_filter(r, kmax).accept);
    r.points[3].K = -10 * kmax;
    const CurvatureVerdict v = curvature_filter(r, kmax);
    CHECK(!v.accept);
    REQUIRE(v.offenders.size() == 1);
    CHECK(v.offenders[0] == 3);
    for (auto& f : r.points) f.K = kmax;
    CHECK(curvature_filter(r, kmax).accept);
  }
}

TEST_SUITE("reference grid") {
  TEST_CASE("four anchors on a plane spread to the corners") {
    const PrincipalSurface s = interpolate([](const ParamCoord& t) { return Vec3(10 * t.x(), 10 * t.y(), 0); }, 6);
    const ReferenceGrid g = sample_reference_grid(s, 4);
    REQUIRE(g.size() == 4);
    double dmin = 1e9;
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = a + 1; b < 4; ++b) dmin = std::min(dmin, (g.positions[a] - g.positions[b]).norm());
    CHECK(dmin >= 0.4 * 10);
  }

  TEST_CASE("n = 1 is rejected") {
    CHECK_THROWS_AS(sample_reference_grid(interpolate(plane, 6), 1), ComputeError);
  }

  TEST_CASE("anchors are distinct, unit-normal and deterministic") {
    const PrincipalSurface s = interpolate(cylinder);
    const ReferenceGrid a = sample_reference_grid(s, 235, "left", 0);
    const ReferenceGrid b = sample_reference_grid(s, 235, "left", 0);
    REQUIRE(a.size() == 235);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.params[i] == b.params[i]);
      CHECK(a.positions[i] == b.positions[i]);
      CHECK(a.normals[i].norm() == doctest::Approx(1.0));
      for (std::size_t j = i + 1; j < a.size(); ++j) REQUIRE(a.params[i] != a.params[j]);
    }
    CHECK(a.sign_flips == 0);
  }

  TEST_CASE("sign propagation repairs flipped normals") {
    ReferenceGrid g = sample_reference_grid(interpolate(plane, 6), 20);
    for (std::size_t i = 1; i < g.size(); i += 3) g.normals[i] = -g.normals[i];
    orient_normals(g);
    for (const Vec3& n : g.normals) CHECK(n.isApprox(g.normals[0]));
    CHECK(g.sign_flips > 0);
  }
}

TEST_SUITE("angle consistency") {
  TEST_CASE("plane: off-plane points are perpendicular, on-plane points excluded") {
    const PrincipalSurface s = interpolate(plane, 6);
    PointCloud q{{0.2, 0.3, 1.0}, {0.7, 0.1, -2.0}, {0.5, 0.5, 0.0}, {0.9, 0.6, 0.4}};
    const AngleSummary a = angle_consistency(s, q);
    CHECK(a.excluded == 1);
    REQUIRE(a.angles_deg.size() == 3);
    for (double d : a.angles_deg) CHECK(d < 0.5);
    CHECK(a.histogram[0] == 3);
  }
}

TEST_SUITE("surface io") {
  TEST_CASE("self-intersection check") {
    CHECK(self_intersection_free(interpolate(plane, 6), 0.01));
    // A cylinder rolled almost all the way round: its two ends nearly touch.
    const PrincipalSurface rolled = interpolate([](const ParamCoord& t) {
      const double th = 1.995 * pi * t.x();
      return Vec3(5 * std::cos(th), 5 * std::sin(th), 4 * t.y());
    }, 21);
    CHECK(!self_intersection_free(rolled, 4.0));
  }

  TEST_CASE("json, csv and obj exports") {
    const auto dir = testing::temp_dir("surface_io");
    PrincipalSurface s = interpolate(sphere10);
    s.log.push_back({0, 0.0, 0.25, true});
    s.stop_reason = "displacement";
    write_surface_json(s, dir / "s.json");
    const PrincipalSurface back = read_surface_json(dir / "s.json");
    for (const auto& t : lattice(7)) CHECK(back(t) == s(t));
    CHECK(back.lambda() == s.lambda());
    CHECK(back.params.size() == s.params.size());
    CHECK(back.log.size() == 1);
    CHECK(back.stop_reason == "displacement");

    const ReferenceGrid g = sample_reference_grid(s, 30, "right", 235);
    write_grid_csv(g, dir / "g.csv");
    const ReferenceGrid gb = read_grid_csv(dir / "g.csv");
    REQUIRE(gb.size() == 30);
    CHECK(gb.id_offset == 235);
    for (std::size_t i = 0; i < 30; ++i) {
      CHECK(gb.params[i] == g.params[i]);
      CHECK(gb.positions[i] == g.positions[i]);
      CHECK(gb.normals[i] == g.normals[i]);
    }
    write_surface_obj(s, dir / "s.obj", 8);
    CHECK(std::filesystem::file_size(dir / "s.obj") > 0);
    CHECK_THROWS_AS(read_surface_json(dir / "g.csv"), IoError);
  }
}
