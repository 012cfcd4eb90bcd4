#ifndef MEDREP_PHANTOM_HPP_
#define MEDREP_PHANTOM_HPP_

#include "medrep/volume.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace medrep {

/// An analytic medial locus. Every phantom solid is the set of points within
/// `half_thickness` of one of these, so its medial locus is exactly the
/// sheet and its boundary is exactly the offset surface.
class MedialSheet {
 public:
  virtual ~MedialSheet() = default;
  virtual Vec3 closest_point(const Vec3& p) const = 0;
  // n x n parameter lattice over the sheet (a single point for a degenerate sheet).
  virtual PointCloud sample(int n) const = 0;

  double distance(const Vec3& p) const { return (p - closest_point(p)).norm(); }
  // Points at exactly distance r from the sheet, from an n x n sheet
  // lattice and `dirs` directions per lattice point.
  PointCloud sample_offset(double r, int n, int dirs) const;
};

class PointSheet : public MedialSheet {
 public:
  explicit PointSheet(const Vec3& c) : c_(c) {}
  Vec3 closest_point(const Vec3&) const override { return c_; }
  PointCloud sample(int) const override { return {c_}; }

 private:
  Vec3 c_;
};

// Rectangle centre + a*u + b*v with |a| <= half_u, |b| <= half_v.
class RectSheet : public MedialSheet {
 public:
  RectSheet(const Vec3& centre, const Vec3& u, const Vec3& v, double half_u, double half_v);
  Vec3 closest_point(const Vec3& p) const override;
  PointCloud sample(int n) const override;
  Vec3 normal() const { return u_.cross(v_); }

 private:
  Vec3 c_, u_, v_;
  double hu_, hv_;
};

// Cylinder patch around the z axis through `axis_point`: radius R, angle in
// [phi0, phi0 + sweep], height in [-half_height, half_height].
class CylinderPatchSheet : public MedialSheet {
 public:
  CylinderPatchSheet(const Vec3& axis_point, double radius, double phi0, double sweep, double half_height);
  Vec3 closest_point(const Vec3& p) const override;
  PointCloud sample(int n) const override;

 private:
  Vec3 a_;
  double R_, phi0_, sweep_, hh_;
};

enum class PhantomKind { kSlab, kSphere, kStraightTube, kBentTube };

PhantomKind parse_phantom_kind(const std::string& name);
std::string to_string(PhantomKind kind);

struct PhantomSpec {
  PhantomKind kind = PhantomKind::kBentTube;
  double half_thickness = 3.0;  // offset radius around the sheet (sphere radius for kSphere)
  double half_width = 6.0;      // strip half-width across the sheet
  double length = 30.0;         // slab side / straight tube length
  double arc_radius = 20.0;     // bent tube
  double arc_angle_deg = 90.0;  // bent tube
  Vec3 spacing{1.0, 1.0, 1.0};
  int margin = 3;               // empty voxels around the solid
  std::uint64_t seed = 0;       // recorded only; geometry is deterministic
};

struct Phantom {
  BinaryMask mask;
  std::shared_ptr<const MedialSheet> sheet;
  double half_thickness = 0.0;

  // Signed distance to the analytic boundary, negative inside.
  double boundary_distance(const Vec3& p) const { return sheet->distance(p) - half_thickness; }
  PointCloud sample_boundary(int n, int dirs = 48) const { return sheet->sample_offset(half_thickness, n, dirs); }
};

// Voxel centres within half_thickness of the sheet. The grid is sized to
// the solid plus `margin` and the solid is centred in it.
Phantom generate_phantom(const PhantomSpec& spec);

// Solid within `half_thickness` of `sheet`, voxelised on an existing grid.
BinaryMask voxelize_offset(const MedialSheet& sheet, double half_thickness, const GridGeometry& geom);

}  // namespace medrep

#endif  // MEDREP_PHANTOM_HPP_
