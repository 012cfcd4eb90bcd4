#ifndef MEDREP_SURFACE_HPP_
#define MEDREP_SURFACE_HPP_

#include "medrep/skeleton.hpp"
#include "medrep/tps.hpp"
#include "medrep/types.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace medrep {

using ParamCoord = Vec2;

struct IterationRecord {
  int iteration = 0;
  double mean_displacement = 0.0;  // parameter space; 0 for the initial fit
  double mean_sq_residual = 0.0;   // mm^2, mean squared projection distance
  bool accepted = true;
};

struct Projection {
  ParamCoord t;
  Vec3 foot;
  double distance = 0.0;
};

/// Smooth map f: [0,1]^2 -> R^3 given by one TPS per coordinate.
class PrincipalSurface {
 public:
  PrincipalSurface() = default;
  explicit PrincipalSurface(ThinPlateSpline<double> tps);

  const ThinPlateSpline<double>& tps() const { return tps_; }
  double lambda() const { return tps_.lambda; }

  Vec3 operator()(const ParamCoord& t) const;
  // Columns df/dt1, df/dt2.
  Eigen::Matrix<double, 3, 2> jacobian(const ParamCoord& t) const;
  void derivatives(const ParamCoord& t, Vec3& f, Eigen::Matrix<double, 3, 2>& jac,
                   Eigen::Matrix<double, 3, 3>& hess) const;

  // +1 or -1, applied by surface_normal.
  int orientation = 1;
  // Per-input-point parameters after the final iteration.
  std::vector<ParamCoord> params;
  std::vector<IterationRecord> log;
  bool converged = false;
  // "displacement", "residual", "single-fit" or "max-iter".
  std::string stop_reason;

  // Cached coarse lattice for projection.
  struct Lattice {
    int n = 0;
    PointCloud points;  // index i + n * j at (i, j) / (n - 1)
    double reach = 0.0;  // largest world distance from a cell point to its nearest node
  };
  const Lattice& lattice() const { return *lattice_; }

 private:
  ThinPlateSpline<double> tps_;
  // Flattened copy of the TPS for fixed-size evaluation.
  std::vector<double> sx_, sy_;
  std::vector<Vec3> w_;
  Eigen::Matrix3d a_;
  std::shared_ptr<const Lattice> lattice_;
};

// Top-2 principal axes (t1 along the larger variance), min-max scaled to
// [0,1]. Axis signs are fixed so each axis' largest component is positive.
std::vector<ParamCoord> pca_parameterize(const PointCloud& points);

// Sites closer than 1e-9 are merged and their targets averaged.
PrincipalSurface fit_tps(const std::vector<ParamCoord>& params, const PointCloud& targets, double lambda);
// GCV over default_lambda_grid(); returns the minimiser.
double select_lambda_gcv(const std::vector<ParamCoord>& params, const PointCloud& targets);

struct ProjectionOptions {
  int coarse = 64;
  int max_starts = 6;
  double step_tol = 1e-6;
};

Projection project_to_surface(const PrincipalSurface& surface, const Vec3& q,
                              const ProjectionOptions& opts = ProjectionOptions{});
std::vector<Projection> project_all(const PrincipalSurface& surface, const PointCloud& q,
                                    const ProjectionOptions& opts = ProjectionOptions{});

struct FitOptions {
  std::optional<double> lambda;  // empty: GCV on the initial parameterisation
  int max_iter = 25;
  double tol = 1e-4;
};

// Alternates TPS fits and reprojection. An iteration is kept only while
// the mean squared projection residual does not increase; the first
// increase stops the loop with the previous surface. Throws ComputeError
// when the mean displacement grows three iterations in a row.
PrincipalSurface iterate_fit(const PointCloud& points, const FitOptions& opts);
inline PrincipalSurface iterate_fit(const MedialSkeleton& skeleton, const FitOptions& opts) {
  return iterate_fit(skeleton.points, opts);
}

// Unit (df/dt1 x df/dt2) * orientation from central differences with step
// h; the stencil is shifted inward near the domain edge.
Vec3 surface_normal(const PrincipalSurface& surface, const ParamCoord& t, double h = 1e-4);

struct ReferenceGrid {
  std::string structure;
  int id_offset = 0;  // global anchor id = id_offset + local index
  std::vector<ParamCoord> params;
  PointCloud positions;
  std::vector<Vec3> normals;
  int sign_flips = 0;  // normals flipped by sign propagation

  std::size_t size() const { return params.size(); }
  int anchor_id(std::size_t local) const { return id_offset + static_cast<int>(local); }
};

// Farthest-point sampling on a dense lattice of parameter cells, seeded
// with the cell farthest from the area-weighted centroid. Cells with a
// vanishing area element are skipped. Normals are sign-propagated
// breadth-first from anchor 0 over the nearest-neighbour graph.
ReferenceGrid sample_reference_grid(const PrincipalSurface& surface, int n, const std::string& structure = "",
                                    int id_offset = 0);
void orient_normals(ReferenceGrid& grid, int neighbours = 6);

struct FundamentalForms {
  double E = 0, F = 0, G = 0, L = 0, M = 0, N = 0, K = 0;
  bool valid = false;
};

struct CurvatureReport {
  std::vector<FundamentalForms> points;
};

CurvatureReport gaussian_curvature(const PrincipalSurface& surface, const std::vector<ParamCoord>& at,
                                   double h = 1e-3);

struct CurvatureVerdict {
  bool accept = true;
  double kmax = 0.0;
  std::vector<std::size_t> offenders;
};

double default_kmax(const Vec3& spacing);
// Rejects on any |K| > kmax (strict). Invalid points are not offenders.
CurvatureVerdict curvature_filter(const CurvatureReport& report, double kmax);

struct AngleSummary {
  std::vector<double> angles_deg;  // folded to [0, 90]
  std::size_t excluded = 0;        // points on the surface
  double mean = 0, median = 0, max = 0;
  std::vector<int> histogram;      // 9 bins of 10 degrees
};

AngleSummary angle_consistency(const PrincipalSurface& surface, const PointCloud& samples);

// False when two lattice cells more than 0.2 apart in parameter space lie
// closer than 0.25 voxel in world space.
bool self_intersection_free(const PrincipalSurface& surface, double voxel_mm, int lattice = 48);

void write_surface_json(const PrincipalSurface& surface, const std::filesystem::path& path);
PrincipalSurface read_surface_json(const std::filesystem::path& path);
void write_grid_csv(const ReferenceGrid& grid, const std::filesystem::path& path);
ReferenceGrid read_grid_csv(const std::filesystem::path& path);
void write_surface_obj(const PrincipalSurface& surface, const std::filesystem::path& path, int lattice = 32);

}  // namespace medrep

#endif  // MEDREP_SURFACE_HPP_
