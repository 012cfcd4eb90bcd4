#ifndef MEDREP_TESTS_TEST_SUPPORT_HPP_
#define MEDREP_TESTS_TEST_SUPPORT_HPP_

#include "medrep/parallel.hpp"
#include "medrep/volume.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace medrep::testing {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("medrep_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Fresh directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("medrep_tmp_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class ThreadCountGuard {
 public:
  explicit ThreadCountGuard(unsigned n) : saved_(thread_count()) { set_thread_count(n); }
  ~ThreadCountGuard() { set_thread_count(saved_); }

 private:
  unsigned saved_;
};

inline GridGeometry cube_geometry(int n, double spacing = 1.0) {
  GridGeometry g;
  g.dims = Vec3i::Constant(n);
  g.spacing = Vec3::Constant(spacing);
  return g;
}

// Box [lo, hi] (inclusive voxel indices) inside an otherwise empty grid.
inline BinaryMask box_mask(const GridGeometry& g, const Vec3i& lo, const Vec3i& hi) {
  BinaryMask m(g, 0);
  for (int k = lo.z(); k <= hi.z(); ++k)
    for (int j = lo.y(); j <= hi.y(); ++j)
      for (int i = lo.x(); i <= hi.x(); ++i) m(i, j, k) = 1;
  return m;
}

// O(N^2) nearest-boundary-centre search; the reference for distance_transform.
inline DistanceField brute_force_distance(const BinaryMask& mask) {
  const GridGeometry& g = mask.geom;
  std::vector<Vec3> boundary;
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    const Vec3i c = g.coords(idx);
    if (is_boundary(mask, c.x(), c.y(), c.z())) boundary.push_back(g.world(idx));
  }
  DistanceField out(g, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    if (!mask.data[idx]) continue;
    const Vec3 p = g.world(idx);
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& b : boundary) best = std::min(best, (p - b).squaredNorm());
    out.data[idx] = std::sqrt(best);
  }
  return out;
}

// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection 5.1.5).
inline Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + d1 / (d1 - d3) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + d2 / (d2 - d6) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

// Distance from p to a triangle soup; isolated vertices count as points.
template <typename Tris>
double distance_to_mesh(const Vec3& p, const std::vector<Vec3>& v, const Tris& tris) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec3& q : v) best = std::min(best, (p - q).norm());
  for (const auto& t : tris) best = std::min(best, (p - closest_on_triangle(p, v[t[0]], v[t[1]], v[t[2]])).norm());
  return best;
}

}  // namespace medrep::testing

#endif  // MEDREP_TESTS_TEST_SUPPORT_HPP_
