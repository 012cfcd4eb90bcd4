#include "medrep/phantom.hpp"

#include "medrep/parallel.hpp"
#include "medrep/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace medrep {

PointCloud MedialSheet::sample_offset(double r, int n, int dirs) const {
  const std::vector<Vec3> sphere = fibonacci_sphere(dirs);
  PointCloud out;
  for (const Vec3& c : sample(n)) {
    for (const Vec3& d : sphere) {
      const Vec3 q = c + r * d;
      const Vec3 foot = closest_point(q);
      const Vec3 off = q - foot;
      const double len = off.norm();
      if (len < 1e-12) continue;
      out.push_back(foot + r * off / len);
    }
  }
  return out;
}

RectSheet::RectSheet(const Vec3& centre, const Vec3& u, const Vec3& v, double half_u, double half_v)
    : c_(centre), u_(u.normalized()), v_(v.normalized()), hu_(half_u), hv_(half_v) {}

Vec3 RectSheet::closest_point(const Vec3& p) const {
  const Vec3 d = p - c_;
  const double a = std::clamp(d.dot(u_), -hu_, hu_);
  const double b = std::clamp(d.dot(v_), -hv_, hv_);
  return c_ + a * u_ + b * v_;
}

PointCloud RectSheet::sample(int n) const {
  PointCloud out;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double a = n == 1 ? 0.0 : -hu_ + 2.0 * hu_ * i / (n - 1);
      const double b = n == 1 ? 0.0 : -hv_ + 2.0 * hv_ * j / (n - 1);
      out.push_back(c_ + a * u_ + b * v_);
    }
  return out;
}

CylinderPatchSheet::CylinderPatchSheet(const Vec3& axis_point, double radius, double phi0, double sweep,
                                       double half_height)
    : a_(axis_point), R_(radius), phi0_(phi0), sweep_(sweep), hh_(half_height) {}

Vec3 CylinderPatchSheet::closest_point(const Vec3& p) const {
  const Vec3 d = p - a_;
  const double mid = phi0_ + 0.5 * sweep_;
  double delta = std::atan2(d.y(), d.x()) - mid;
  delta = std::remainder(delta, 2.0 * std::numbers::pi);
  delta = std::clamp(delta, -0.5 * sweep_, 0.5 * sweep_);
  const double phi = mid + delta;
  const double h = std::clamp(d.z(), -hh_, hh_);
  return a_ + Vec3(R_ * std::cos(phi), R_ * std::sin(phi), h);
}

PointCloud CylinderPatchSheet::sample(int n) const {
  PointCloud out;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double phi = n == 1 ? phi0_ + 0.5 * sweep_ : phi0_ + sweep_ * i / (n - 1);
      const double h = n == 1 ? 0.0 : -hh_ + 2.0 * hh_ * j / (n - 1);
      out.push_back(a_ + Vec3(R_ * std::cos(phi), R_ * std::sin(phi), h));
    }
  return out;
}

PhantomKind parse_phantom_kind(const std::string& name) {
  if (name == "slab") return PhantomKind::kSlab;
  if (name == "sphere") return PhantomKind::kSphere;
  if (name == "straight-tube") return PhantomKind::kStraightTube;
  if (name == "bent-tube") return PhantomKind::kBentTube;
  throw IoError("unknown phantom kind '" + name + "'");
}

std::string to_string(PhantomKind kind) {
  switch (kind) {
    case PhantomKind::kSlab: return "slab";
    case PhantomKind::kSphere: return "sphere";
    case PhantomKind::kStraightTube: return "straight-tube";
    case PhantomKind::kBentTube: return "bent-tube";
  }
  return "?";
}

BinaryMask voxelize_offset(const MedialSheet& sheet, double half_thickness, const GridGeometry& geom) {
  BinaryMask mask(geom, 0);
  parallel_for(geom.size(), [&](std::size_t idx) {
    mask.data[idx] = sheet.distance(geom.world(idx)) <= half_thickness + 1e-9 ? 1 : 0;
  });
  return mask;
}

Phantom generate_phantom(const PhantomSpec& spec) {
  if (!(spec.half_thickness > 0.0)) throw ComputeError("phantom: half_thickness must be positive");
  if (!(spec.spacing.array() > 0.0).all()) throw ComputeError("phantom: spacing must be positive");
  Phantom ph;
  ph.half_thickness = spec.half_thickness;
  switch (spec.kind) {
    case PhantomKind::kSphere:
      ph.sheet = std::make_shared<PointSheet>(Vec3::Zero());
      break;
    case PhantomKind::kSlab:
      ph.sheet = std::make_shared<RectSheet>(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY(), 0.5 * spec.length,
                                             0.5 * spec.length);
      break;
    case PhantomKind::kStraightTube:
      ph.sheet = std::make_shared<RectSheet>(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY(), 0.5 * spec.length,
                                             spec.half_width);
      break;
    case PhantomKind::kBentTube: {
      const double sweep = spec.arc_angle_deg * std::numbers::pi / 180.0;
      if (!(sweep > 0.0) || sweep >= 2.0 * std::numbers::pi) throw ComputeError("phantom: arc angle must be in (0, 360)");
      if (!(spec.arc_radius > spec.half_thickness)) throw ComputeError("phantom: arc radius must exceed half_thickness");
      ph.sheet = std::make_shared<CylinderPatchSheet>(Vec3::Zero(), spec.arc_radius, -0.5 * sweep, sweep,
                                                      spec.half_width);
      break;
    }
  }

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Vec3& p : ph.sheet->sample(129)) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  lo.array() -= spec.half_thickness;
  hi.array() += spec.half_thickness;
  const Vec3 centre = 0.5 * (lo + hi);
  const Vec3 half = 0.5 * (hi - lo);

  GridGeometry g;
  g.spacing = spec.spacing;
  for (int a = 0; a < 3; ++a) g.dims[a] = 2 * (static_cast<int>(std::ceil(half[a] / spec.spacing[a] - 1e-9)) + spec.margin) + 1;
  g.origin = centre - spec.spacing.cwiseProduct((g.dims.cast<double>() - Vec3::Ones()) * 0.5);
  ph.mask = voxelize_offset(*ph.sheet, spec.half_thickness, g);
  if (count(ph.mask) == 0) throw ComputeError("phantom: solid is empty at this resolution");
  return ph;
}

}  // namespace medrep
