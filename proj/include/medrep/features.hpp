#ifndef MEDREP_FEATURES_HPP_
#define MEDREP_FEATURES_HPP_

#include "medrep/surface.hpp"
#include "medrep/volume.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace medrep {

struct ProjectedSample {
  std::string subject_id;
  int anchor_id = -1;     // global id (grid.id_offset + local)
  ParamCoord t;
  Vec3 position;          // voxel centre
  double suvr = 0.0;
  double signed_dist = 0.0;  // sign of <q - f(t), N(t)>
  bool boundary = false;     // on the 6-neighbourhood boundary of the suprathreshold set
  // Boundary voxel whose neighbour one voxel further along the normal (own
  // side) is outside the set. Only these measure thickness; the rest sit
  // on lateral walls.
  bool faces_normal = false;
};

// Every voxel inside `structure` (all voxels when the mask is empty) with
// SUVR strictly above `cutoff`, projected onto the surface and assigned to
// the anchor nearest to its foot point.
std::vector<ProjectedSample> project_subject(const BinaryMask& structure, const VoxelGrid& suvr,
                                             const PrincipalSurface& surface, const ReferenceGrid& grid,
                                             double cutoff, const std::string& subject_id = "");

// Foot point, normal and anchor of every structure voxel. They do not depend
// on the subject, so a cohort needs them once per structure.
struct VoxelProjectionCache {
  GridGeometry geom;
  std::vector<std::int64_t> slot;  // per lattice voxel; -1 outside the structure
  std::vector<Projection> proj;
  std::vector<Vec3> normal;
  std::vector<int> anchor;  // local anchor index
};

VoxelProjectionCache project_structure(const BinaryMask& structure, const PrincipalSurface& surface,
                                       const ReferenceGrid& grid);
// Same samples as the uncached form for a non-empty structure mask.
std::vector<ProjectedSample> project_subject(const BinaryMask& structure, const VoxelGrid& suvr,
                                             const VoxelProjectionCache& cache, const ReferenceGrid& grid,
                                             double cutoff, const std::string& subject_id = "");

struct LoessFit {
  std::optional<double> value;
  int support = 0;  // samples with positive tricube weight
};

// Local-linear fit at t0 over the ceil(span * N) samples nearest in
// parameter space, tricube weights relative to the farthest of them.
// The fit is a linear combination sum_i l_i s_i of the sample values. When
// sum_i |l_i| exceeds `max_gain` (unstable extrapolation) the weighted mean
// of the support is returned instead, provided t0 lies within
// `fallback_reach` of the support's convex hull; otherwise no value.
LoessFit loess_interpolate(const std::vector<ParamCoord>& t, const std::vector<double>& values, const ParamCoord& t0,
                           double span, int min_support, double max_gain = std::numeric_limits<double>::infinity(),
                           double fallback_reach = 0.0);

struct FeatureOptions {
  double cutoff = 2.0;
  double span = 0.3;
  int min_support = 5;
  int pool_anchors = 16;  // parameter-space neighbours whose samples form an anchor's LOESS pool
  // Thickness fits only. The fallback reach is a multiple of the median
  // anchor spacing.
  double max_gain = 2.0;
  double fallback_reach = 0.5;
};

struct AnchorFeatures {
  bool covered = false;
  std::optional<double> suvr_hat, dist_pos, dist_neg;
  int n_support = 0;
};

// For each local anchor, the local indices of its `k` nearest anchors in
// parameter space (itself first).
std::vector<std::vector<int>> anchor_pools(const ReferenceGrid& grid, int k);

// Positive and negative boundary samples interpolated separately; each
// side is missing on its own when it lacks support; see loess_interpolate
// for the gain guard.
std::vector<std::pair<std::optional<double>, std::optional<double>>> thickness_features(
    const ReferenceGrid& grid, const std::vector<ProjectedSample>& samples, const FeatureOptions& opts);

// Per anchor features for one subject's samples.
std::vector<AnchorFeatures> anchor_features(const ReferenceGrid& grid, const std::vector<ProjectedSample>& samples,
                                            const FeatureOptions& opts);

struct BoundaryReconstruction {
  PointCloud points;
  std::vector<int> anchor_ids;
  std::vector<int> side;  // +1 or -1
  std::vector<std::array<int, 3>> triangles;
};

// f(t) + d N(t) for every anchor and side with a value. Triangles come from
// a Delaunay triangulation of the anchors in parameter space, kept per side
// when all three corners carry that side.
BoundaryReconstruction reconstruct_boundary(const PrincipalSurface& surface, const ReferenceGrid& grid,
                                            const std::vector<std::optional<double>>& dist_pos,
                                            const std::vector<std::optional<double>>& dist_neg,
                                            bool triangulate = true);

// Delaunay triangles of a planar point set (Bowyer-Watson).
std::vector<std::array<int, 3>> delaunay(const std::vector<Vec2>& points);

struct FeatureRow {
  std::string subject_id;
  int anchor_id = 0;
  bool covered = false;
  std::optional<double> suvr_hat, dist_pos, dist_neg;
  int n_support = 0;
};

struct SurfaceFeatureTable {
  std::vector<FeatureRow> rows;
};

struct SubjectVolume {
  std::string subject_id;
  VoxelGrid suvr;
};

struct StructureModel {
  BinaryMask mask;
  PrincipalSurface surface;
  ReferenceGrid grid;
};

// Projects every structure voxel once on construction; `structures` must
// outlive the extractor. A structure with an empty mask is projected per
// subject instead.
class FeatureExtractor {
 public:
  FeatureExtractor(const std::vector<StructureModel>& structures, const FeatureOptions& opts);
  // Rows by structure, then anchor.
  std::vector<FeatureRow> extract(const SubjectVolume& subject, std::vector<ProjectedSample>* samples = nullptr) const;

 private:
  const std::vector<StructureModel>& structures_;
  FeatureOptions opts_;
  std::vector<std::optional<VoxelProjectionCache>> caches_;
};

// Rows ordered by subject, then structure, then anchor. Samples of every
// subject are appended to `samples` when it is non-null.
SurfaceFeatureTable build_feature_table(const std::vector<SubjectVolume>& subjects,
                                        const std::vector<StructureModel>& structures, const FeatureOptions& opts,
                                        std::vector<ProjectedSample>* samples = nullptr);

void write_feature_csv(const SurfaceFeatureTable& table, const std::filesystem::path& path);
SurfaceFeatureTable read_feature_csv(const std::filesystem::path& path);
void write_samples_csv(const std::vector<ProjectedSample>& samples, const std::filesystem::path& path);
std::vector<ProjectedSample> read_samples_csv(const std::filesystem::path& path);
void write_boundary_ply(const BoundaryReconstruction& rec, const std::filesystem::path& path);

}  // namespace medrep

#endif  // MEDREP_FEATURES_HPP_
