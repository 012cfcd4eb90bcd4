#ifndef MEDREP_SKELETON_HPP_
#define MEDREP_SKELETON_HPP_

#include "medrep/volume.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace medrep {

// Average outward flux per mask voxel, in [-1, 1]. NaN outside the mask.
using FluxField = Grid<double>;

enum class PointSource { kGridVoxel, kInterpolated };

struct MedialSkeleton {
  PointCloud points;
  std::vector<double> flux;
  std::vector<PointSource> source;

  std::size_t size() const { return points.size(); }
};

// Deterministic near-uniform directions on the unit sphere. The lattice
// includes both poles: z_k = 1 - 2k / (n - 1).
std::vector<Vec3> fibonacci_sphere(int n);

// Equiangular cubed-sphere lattice: an m x m cell-centred grid on each cube
// face with the smallest m giving at least n directions. The set maps onto
// itself under 90 degree rotations about the grid axes, which the Fibonacci
// lattice does not.
std::vector<Vec3> cubed_sphere(int n);

enum class DirectionLattice { kFibonacci, kCubed };
DirectionLattice parse_direction_lattice(const std::string& name);
std::string to_string(DirectionLattice lattice);
std::vector<Vec3> sphere_directions(int n, DirectionLattice lattice);

// 1.5 x the largest voxel spacing.
double default_flux_radius(const GridGeometry& geom);

// Trilinear interpolation of the gradient field at a world point,
// re-normalised to unit length. Points whose nearest voxel lies outside the
// mask (or the grid) give the zero vector, as do degenerate blends.
Vec3 sample_gradient(const GradientField& grad, const Vec3& p);

FluxField average_outward_flux(const GradientField& grad, double radius, int num_dirs,
                               DirectionLattice lattice = DirectionLattice::kFibonacci);

// Mask voxels with flux < tau_flux. Throws ComputeError when nothing passes.
MedialSkeleton extract_skeleton(const FluxField& flux, double tau_flux);

// Voxel centres plus the evenly spaced points between every pair of
// 6-adjacent mask voxels (two points for ratio 1/3). 1/ratio must be an
// integer >= 2.
PointCloud upsample_points(const BinaryMask& mask, double ratio = 1.0 / 3.0);

// The mask on a lattice `factor` times finer. Every coarse voxel becomes a
// factor^3 block of sub-voxels centred on it, so the fine lattice contains
// every point produced by upsample_points(mask, 1/factor).
BinaryMask refine_mask(const BinaryMask& mask, int factor);

struct SkeletonOptions {
  bool upsample = true;
  int upsample_factor = 3;
  double radius_mm = 0.0;  // <= 0 selects default_flux_radius of the input mask
  int num_dirs = 64;
  DirectionLattice lattice = DirectionLattice::kFibonacci;
  double tau_flux = -0.2;
};

// threshold -> (refine) -> distance transform -> gradient -> flux -> extract.
MedialSkeleton skeletonize(const BinaryMask& mask, const SkeletonOptions& opts);

// Cell-centroid reduction used before surface fitting; order is the sorted
// cell key order, so the result is deterministic.
MedialSkeleton thin_skeleton(const MedialSkeleton& skeleton, double cell_mm);
// 1.5 x the largest voxel spacing of the input mask.
inline double default_thin_cell(const GridGeometry& geom) { return 1.5 * geom.spacing.maxCoeff(); }

void write_skeleton_csv(const MedialSkeleton& skeleton, const std::filesystem::path& path);
MedialSkeleton read_skeleton_csv(const std::filesystem::path& path);
void write_point_ply(const PointCloud& points, const std::filesystem::path& path);

}  // namespace medrep

#endif  // MEDREP_SKELETON_HPP_
