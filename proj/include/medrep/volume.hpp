#ifndef MEDREP_VOLUME_HPP_
#define MEDREP_VOLUME_HPP_

#include "medrep/types.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

namespace medrep {

/// Lattice geometry shared by every voxel container.
///
/// Storage order is x-fastest: index = i + nx * (j + ny * k). This is the
/// order the raw-json format calls "row-major-xyz" and the order NIfTI-1
/// uses on disk. World coordinates (mm) are origin + spacing * (i, j, k);
/// the axes are assumed aligned with the lattice.
struct GridGeometry {
  Vec3i dims{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};

  std::size_t size() const {
    return static_cast<std::size_t>(dims.x()) * static_cast<std::size_t>(dims.y()) *
           static_cast<std::size_t>(dims.z());
  }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims.x()) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims.y()) * static_cast<std::size_t>(k));
  }
  Vec3i coords(std::size_t idx) const {
    const auto nx = static_cast<std::size_t>(dims.x());
    const auto ny = static_cast<std::size_t>(dims.y());
    return {static_cast<int>(idx % nx), static_cast<int>((idx / nx) % ny), static_cast<int>(idx / (nx * ny))};
  }
  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims.x() && j < dims.y() && k < dims.z();
  }
  Vec3 world(const Vec3& ijk) const { return origin + spacing.cwiseProduct(ijk); }
  Vec3 world(int i, int j, int k) const { return world(Vec3(i, j, k)); }
  Vec3 world(std::size_t idx) const { return world(coords(idx).cast<double>()); }
  Vec3 to_index(const Vec3& p) const { return (p - origin).cwiseQuotient(spacing); }

  // Throws IoError on non-positive dims or spacing.
  void validate() const;

  bool operator==(const GridGeometry& o) const {
    return dims == o.dims && spacing == o.spacing && origin == o.origin;
  }
  bool operator!=(const GridGeometry& o) const { return !(*this == o); }
};

template <typename T>
struct Grid {
  GridGeometry geom;
  std::vector<T> data;

  Grid() = default;
  Grid(const GridGeometry& g, const T& fill) : geom(g), data(g.size(), fill) {}

  T& operator()(int i, int j, int k) { return data[geom.index(i, j, k)]; }
  const T& operator()(int i, int j, int k) const { return data[geom.index(i, j, k)]; }
  std::size_t size() const { return data.size(); }
};

using VoxelGrid = Grid<float>;
using BinaryMask = Grid<std::uint8_t>;
// Distance in mm to the nearest boundary voxel centre; NaN outside the mask.
using DistanceField = Grid<double>;
// Unit (or exactly zero) vector per voxel; zero outside the mask. Keeps
// the mask membership, since degenerate mask voxels also carry zero.
struct GradientField : Grid<Vec3> {
  std::vector<std::uint8_t> inside;

  GradientField() = default;
  explicit GradientField(const GridGeometry& g) : Grid<Vec3>(g, Vec3::Zero()), inside(g.size(), 0) {}
  bool in_mask(int i, int j, int k) const { return geom.contains(i, j, k) && inside[geom.index(i, j, k)]; }
};

inline bool outside_sentinel(double d) { return std::isnan(d); }

enum class VolumeFormat { kAuto, kRawJson, kNifti1 };

// raw-json: `<name>.json` header plus `<name>.bin` little-endian f32 payload.
// nifti1: .nii or .nii.gz; uint8/int16/float32/float64 with scl_slope/inter.
VoxelGrid load_volume(const std::filesystem::path& path, VolumeFormat format = VolumeFormat::kAuto);
void write_volume(const VoxelGrid& grid, const std::filesystem::path& json_path);

// Voxels strictly greater than cutoff.
BinaryMask threshold_mask(const VoxelGrid& grid, double cutoff);
std::size_t count(const BinaryMask& mask);
bool in_mask(const BinaryMask& mask, int i, int j, int k);
// A mask voxel with any 6-neighbour outside the mask or the grid.
bool is_boundary(const BinaryMask& mask, int i, int j, int k);
BinaryMask boundary_voxels(const BinaryMask& mask);

// Sub-lattice around the mask's bounding box, padded by `margin` voxels.
BinaryMask crop_to_mask(const BinaryMask& mask, int margin);

DistanceField distance_transform(const BinaryMask& mask);
GradientField gradient_field(const DistanceField& dist);

}  // namespace medrep

#endif  // MEDREP_VOLUME_HPP_
