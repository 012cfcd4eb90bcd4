#include "medrep/skeleton.hpp"

#include "medrep/csv.hpp"
#include "medrep/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

namespace medrep {

std::vector<Vec3> fibonacci_sphere(int n) {
  if (n < 2) throw ComputeError("fibonacci_sphere: need at least 2 directions");
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Vec3> dirs(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double z = 1.0 - 2.0 * k / (n - 1);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * k;
    dirs[static_cast<std::size_t>(k)] = Vec3(r * std::cos(phi), r * std::sin(phi), z);
  }
  return dirs;
}

std::vector<Vec3> cubed_sphere(int n) {
  if (n < 6) throw ComputeError("cubed_sphere: need at least 6 directions");
  const int m = static_cast<int>(std::ceil(std::sqrt(n / 6.0) - 1e-12));
  std::vector<Vec3> dirs;
  dirs.reserve(static_cast<std::size_t>(6 * m * m));
  for (int axis = 0; axis < 3; ++axis)
    for (double sign : {1.0, -1.0})
      for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i) {
          Vec3 p;
          p[axis] = sign;
          p[(axis + 1) % 3] = std::tan(((i + 0.5) / m - 0.5) * std::numbers::pi / 2.0);
          p[(axis + 2) % 3] = std::tan(((j + 0.5) / m - 0.5) * std::numbers::pi / 2.0);
          dirs.push_back(p.normalized());
        }
  return dirs;
}

DirectionLattice parse_direction_lattice(const std::string& name) {
  if (name == "fibonacci") return DirectionLattice::kFibonacci;
  if (name == "cubed") return DirectionLattice::kCubed;
  throw IoError("unknown direction lattice '" + name + "'");
}

std::string to_string(DirectionLattice lattice) {
  return lattice == DirectionLattice::kCubed ? "cubed" : "fibonacci";
}

std::vector<Vec3> sphere_directions(int n, DirectionLattice lattice) {
  return lattice == DirectionLattice::kCubed ? cubed_sphere(n) : fibonacci_sphere(n);
}

double default_flux_radius(const GridGeometry& geom) { return 1.5 * geom.spacing.maxCoeff(); }

Vec3 sample_gradient(const GradientField& grad, const Vec3& p) {
  const GridGeometry& g = grad.geom;
  const Vec3 u = g.to_index(p);
  if (!grad.in_mask(static_cast<int>(std::lround(u.x())), static_cast<int>(std::lround(u.y())),
                    static_cast<int>(std::lround(u.z()))))
    return Vec3::Zero();
  const Vec3i base(static_cast<int>(std::floor(u.x())), static_cast<int>(std::floor(u.y())),
                   static_cast<int>(std::floor(u.z())));
  const Vec3 frac = u - base.cast<double>();
  Vec3 acc = Vec3::Zero();
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    const int i = base.x() + dx, j = base.y() + dy, k = base.z() + dz;
    if (!g.contains(i, j, k)) continue;
    const double w = (dx ? frac.x() : 1.0 - frac.x()) * (dy ? frac.y() : 1.0 - frac.y()) *
                     (dz ? frac.z() : 1.0 - frac.z());
    acc += w * grad(i, j, k);
  }
  const double n = acc.norm();
  return n < 1e-9 ? Vec3::Zero() : Vec3(acc / n);
}

FluxField average_outward_flux(const GradientField& grad, double radius, int num_dirs, DirectionLattice lattice) {
  const GridGeometry& g = grad.geom;
  if (num_dirs < 26) throw ComputeError("average_outward_flux: num_dirs must be >= 26");
  if (!(radius >= g.spacing.minCoeff()))
    throw ComputeError("average_outward_flux: radius must be at least one voxel spacing");
  const bool any = std::any_of(grad.data.begin(), grad.data.end(), [](const Vec3& v) { return v.squaredNorm() > 0.0; });
  if (!any) throw ComputeError("average_outward_flux: gradient field is identically zero");

  const std::vector<Vec3> dirs = sphere_directions(num_dirs, lattice);
  FluxField flux(g, std::numeric_limits<double>::quiet_NaN());
  parallel_for(g.size(), [&](std::size_t idx) {
    if (!grad.inside[idx]) return;
    const Vec3 q = g.world(idx);
    double sum = 0.0;
    for (const Vec3& n : dirs) sum += sample_gradient(grad, q + radius * n).dot(n);
    flux.data[idx] = sum / static_cast<double>(dirs.size());
  });
  return flux;
}

MedialSkeleton extract_skeleton(const FluxField& flux, double tau_flux) {
  MedialSkeleton skel;
  for (std::size_t idx = 0; idx < flux.size(); ++idx) {
    const double phi = flux.data[idx];
    if (std::isnan(phi) || !(phi < tau_flux)) continue;
    skel.points.push_back(flux.geom.world(idx));
    skel.flux.push_back(phi);
    skel.source.push_back(PointSource::kGridVoxel);
  }
  if (skel.points.empty())
    throw ComputeError("extract_skeleton: no voxel has flux below " + csv::fmt(tau_flux) +
                       " (threshold too strict or degenerate mask)");
  return skel;
}

namespace {

int steps_for_ratio(double ratio) {
  if (!(ratio > 0.0) || ratio >= 1.0) throw ComputeError("upsample ratio must be in (0, 1)");
  const double inv = 1.0 / ratio;
  const long m = std::lround(inv);
  if (m < 2 || std::abs(inv - static_cast<double>(m)) > 1e-9) throw ComputeError("1/ratio must be an integer >= 2");
  return static_cast<int>(m);
}

}  // namespace

PointCloud upsample_points(const BinaryMask& mask, double ratio) {
  const int m = steps_for_ratio(ratio);
  const GridGeometry& g = mask.geom;
  PointCloud pts;
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    if (!mask.data[idx]) continue;
    const Vec3i c = g.coords(idx);
    const Vec3 base = c.cast<double>();
    pts.push_back(g.world(base));
    for (int a = 0; a < 3; ++a) {
      Vec3i nb = c;
      ++nb[a];
      if (!in_mask(mask, nb.x(), nb.y(), nb.z())) continue;
      for (int s = 1; s < m; ++s) {
        Vec3 u = base;
        u[a] += static_cast<double>(s) / m;
        pts.push_back(g.world(u));
      }
    }
  }
  // Dedupe on a 1e-6 mm lattice.
  const double tol = 1e-6;
  auto key = [tol](const Vec3& p) {
    return std::array<long long, 3>{std::llround(p.x() / tol), std::llround(p.y() / tol), std::llround(p.z() / tol)};
  };
  std::map<std::array<long long, 3>, Vec3> unique;
  for (const Vec3& p : pts) unique.emplace(key(p), p);
  PointCloud out;
  out.reserve(unique.size());
  for (const auto& [k, p] : unique) out.push_back(p);
  return out;
}

BinaryMask refine_mask(const BinaryMask& mask, int factor) {
  if (factor < 1) throw ComputeError("refine_mask: factor must be >= 1");
  if (factor == 1) return mask;
  const GridGeometry& g = mask.geom;
  GridGeometry fine;
  fine.dims = g.dims * factor;
  fine.spacing = g.spacing / factor;
  // Fine index f lies in coarse voxel f / factor; blocks are centred on it.
  fine.origin = g.origin - fine.spacing * ((factor - 1) / 2.0);
  BinaryMask out(fine, 0);
  for (int k = 0; k < fine.dims.z(); ++k)
    for (int j = 0; j < fine.dims.y(); ++j)
      for (int i = 0; i < fine.dims.x(); ++i)
        out(i, j, k) = mask(i / factor, j / factor, k / factor);
  return out;
}

MedialSkeleton skeletonize(const BinaryMask& mask, const SkeletonOptions& opts) {
  if (count(mask) == 0) throw ComputeError("skeletonize: empty mask");
  const double radius = opts.radius_mm > 0.0 ? opts.radius_mm : default_flux_radius(mask.geom);
  const BinaryMask cropped = crop_to_mask(mask, 2);
  const BinaryMask work = opts.upsample ? refine_mask(cropped, opts.upsample_factor) : cropped;
  const DistanceField dist = distance_transform(work);
  const GradientField grad = gradient_field(dist);
  const FluxField flux = average_outward_flux(grad, radius, opts.num_dirs, opts.lattice);
  MedialSkeleton skel = extract_skeleton(flux, opts.tau_flux);
  if (opts.upsample && opts.upsample_factor > 1) {
    // Points that coincide with a coarse voxel centre keep the grid-voxel tag.
    for (std::size_t i = 0; i < skel.size(); ++i) {
      const Vec3 u = mask.geom.to_index(skel.points[i]);
      const bool on_coarse = (u - u.array().round().matrix()).cwiseAbs().maxCoeff() < 1e-6;
      skel.source[i] = on_coarse ? PointSource::kGridVoxel : PointSource::kInterpolated;
    }
  }
  return skel;
}

MedialSkeleton thin_skeleton(const MedialSkeleton& skeleton, double cell_mm) {
  if (!(cell_mm > 0.0)) throw ComputeError("thin_skeleton: cell size must be positive");
  struct Acc {
    Vec3 sum = Vec3::Zero();
    double flux = 0.0;
    int n = 0;
  };
  std::map<std::array<long long, 3>, Acc> cells;
  for (std::size_t i = 0; i < skeleton.size(); ++i) {
    const Vec3& p = skeleton.points[i];
    const std::array<long long, 3> key{static_cast<long long>(std::floor(p.x() / cell_mm)),
                                       static_cast<long long>(std::floor(p.y() / cell_mm)),
                                       static_cast<long long>(std::floor(p.z() / cell_mm))};
    Acc& a = cells[key];
    a.sum += p;
    a.flux += skeleton.flux[i];
    ++a.n;
  }
  MedialSkeleton out;
  for (const auto& [key, a] : cells) {
    out.points.push_back(a.sum / a.n);
    out.flux.push_back(a.flux / a.n);
    out.source.push_back(PointSource::kInterpolated);
  }
  return out;
}

void write_skeleton_csv(const MedialSkeleton& skeleton, const std::filesystem::path& path) {
  csv::Writer w(path, {"x", "y", "z", "flux", "source"});
  for (std::size_t i = 0; i < skeleton.size(); ++i) {
    const Vec3& p = skeleton.points[i];
    w << p.x() << p.y() << p.z() << skeleton.flux[i]
      << (skeleton.source[i] == PointSource::kGridVoxel ? "grid-voxel" : "interpolated");
    w.end_row();
  }
}

MedialSkeleton read_skeleton_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::Table::read(path);
  MedialSkeleton s;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    s.points.emplace_back(t.number(r, "x"), t.number(r, "y"), t.number(r, "z"));
    s.flux.push_back(t.number(r, "flux"));
    const std::string& src = t.at(r, "source");
    if (src != "grid-voxel" && src != "interpolated") throw IoError(path.string() + ": bad source '" + src + "'");
    s.source.push_back(src == "grid-voxel" ? PointSource::kGridVoxel : PointSource::kInterpolated);
  }
  if (s.points.empty()) throw IoError(path.string() + ": skeleton is empty");
  return s;
}

void write_point_ply(const PointCloud& points, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  for (const Vec3& p : points) out << csv::fmt(p.x()) << ' ' << csv::fmt(p.y()) << ' ' << csv::fmt(p.z()) << '\n';
}

}  // namespace medrep
