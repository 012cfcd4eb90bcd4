#include "medrep/volume.hpp"

#include "medrep/parallel.hpp"

#include <json.hpp>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace medrep {

namespace fs = std::filesystem;
using nlohmann::json;

void GridGeometry::validate() const {
  if ((dims.array() <= 0).any()) throw IoError("grid dimensions must be positive");
  if (!(spacing.array() > 0.0).all() || !spacing.allFinite())
    throw IoError("grid spacing must be strictly positive");
  if (!origin.allFinite()) throw IoError("grid origin must be finite");
}

namespace {

static_assert(std::endian::native == std::endian::little, "raw volume I/O assumes a little-endian host");

std::string lower_ext(const fs::path& p) {
  std::string name = p.filename().string();
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  if (name.size() > 7 && name.ends_with(".nii.gz")) return ".nii.gz";
  return p.extension().string();
}

Vec3 vec3_from_json(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3)
    throw IoError(std::string("volume header: '") + key + "' must be an array of 3 numbers");
  return {j[key][0].get<double>(), j[key][1].get<double>(), j[key][2].get<double>()};
}

VoxelGrid load_raw_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open volume header " + path.string());
  json header;
  try {
    in >> header;
  } catch (const json::exception& e) {
    throw IoError("malformed volume header " + path.string() + ": " + e.what());
  }
  VoxelGrid grid;
  try {
    if (!header.contains("dims") || header["dims"].size() != 3) throw IoError("volume header: 'dims' missing");
    grid.geom.dims = {header["dims"][0].get<int>(), header["dims"][1].get<int>(), header["dims"][2].get<int>()};
    grid.geom.spacing = vec3_from_json(header, "spacing");
    grid.geom.origin = header.contains("origin") ? vec3_from_json(header, "origin") : Vec3::Zero();
    if (header.value("dtype", std::string("f32")) != "f32") throw IoError("volume header: only dtype f32 is supported");
    if (header.value("order", std::string("row-major-xyz")) != "row-major-xyz")
      throw IoError("volume header: only order row-major-xyz is supported");
  } catch (const json::exception& e) {
    throw IoError("malformed volume header " + path.string() + ": " + e.what());
  }
  grid.geom.validate();

  fs::path bin = path;
  bin.replace_extension(".bin");
  std::ifstream payload(bin, std::ios::binary | std::ios::ate);
  if (!payload) throw IoError("cannot open volume payload " + bin.string());
  const auto bytes = static_cast<std::size_t>(payload.tellg());
  if (bytes != grid.geom.size() * sizeof(float))
    throw IoError("volume payload " + bin.string() + " has " + std::to_string(bytes) + " bytes, header implies " +
                  std::to_string(grid.geom.size() * sizeof(float)));
  payload.seekg(0);
  grid.data.resize(grid.geom.size());
  payload.read(reinterpret_cast<char*>(grid.data.data()), static_cast<std::streamsize>(bytes));
  return grid;
}

template <typename T>
T read_at(const std::array<char, 348>& hdr, std::size_t offset, bool swap) {
  T v;
  std::array<char, sizeof(T)> raw;
  std::memcpy(raw.data(), hdr.data() + offset, sizeof(T));
  if (swap) std::reverse(raw.begin(), raw.end());
  std::memcpy(&v, raw.data(), sizeof(T));
  return v;
}

template <typename T>
void decode(const std::vector<char>& bytes, bool swap, float slope, float inter, std::vector<float>& out) {
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    std::array<char, sizeof(T)> raw;
    std::memcpy(raw.data(), bytes.data() + i * sizeof(T), sizeof(T));
    if (swap) std::reverse(raw.begin(), raw.end());
    T v;
    std::memcpy(&v, raw.data(), sizeof(T));
    out[i] = static_cast<float>(static_cast<double>(v) * slope + inter);
  }
}

struct GzFile {
  gzFile f = nullptr;
  explicit GzFile(const fs::path& p) : f(gzopen(p.string().c_str(), "rb")) {}
  ~GzFile() {
    if (f) gzclose(f);
  }
  GzFile(const GzFile&) = delete;
  GzFile& operator=(const GzFile&) = delete;
  bool read(char* dst, std::size_t n) {
    std::size_t done = 0;
    while (done < n) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n - done, 1u << 30));
      const int got = gzread(f, dst + done, chunk);
      if (got <= 0) return false;
      done += static_cast<std::size_t>(got);
    }
    return true;
  }
};

VoxelGrid load_nifti1(const fs::path& path) {
  GzFile file(path);
  if (!file.f) throw IoError("cannot open NIfTI file " + path.string());
  std::array<char, 348> hdr{};
  if (!file.read(hdr.data(), hdr.size())) throw IoError("truncated NIfTI header in " + path.string());

  bool swap = false;
  if (read_at<std::int32_t>(hdr, 0, false) != 348) {
    if (read_at<std::int32_t>(hdr, 0, true) != 348) throw IoError("not a NIfTI-1 file: " + path.string());
    swap = true;
  }
  if (std::memcmp(hdr.data() + 344, "n+1", 3) != 0 && std::memcmp(hdr.data() + 344, "ni1", 3) != 0)
    throw IoError("bad NIfTI-1 magic in " + path.string());

  std::array<std::int16_t, 8> dim{};
  for (int i = 0; i < 8; ++i) dim[i] = read_at<std::int16_t>(hdr, 40 + 2 * i, swap);
  if (dim[0] < 3 || dim[0] > 7) throw IoError("NIfTI dim[0] must be in 3..7");
  for (int i = 4; i <= dim[0]; ++i)
    if (dim[i] > 1) throw IoError("only single-volume 3D NIfTI files are supported");

  const auto datatype = read_at<std::int16_t>(hdr, 70, swap);
  std::array<float, 8> pixdim{};
  for (int i = 0; i < 8; ++i) pixdim[i] = read_at<float>(hdr, 76 + 4 * i, swap);
  const float vox_offset = read_at<float>(hdr, 108, swap);
  float slope = read_at<float>(hdr, 112, swap);
  float inter = read_at<float>(hdr, 116, swap);
  if (slope == 0.0f || !std::isfinite(slope)) {
    slope = 1.0f;
    inter = 0.0f;
  }
  if (!std::isfinite(inter)) inter = 0.0f;
  const auto qform_code = read_at<std::int16_t>(hdr, 252, swap);
  const auto sform_code = read_at<std::int16_t>(hdr, 254, swap);

  VoxelGrid grid;
  grid.geom.dims = {dim[1], dim[2], dim[3]};
  grid.geom.spacing = {std::abs(pixdim[1]), std::abs(pixdim[2]), std::abs(pixdim[3])};
  if (sform_code > 0) {
    grid.geom.origin = {read_at<float>(hdr, 280 + 12, swap), read_at<float>(hdr, 296 + 12, swap),
                        read_at<float>(hdr, 312 + 12, swap)};
  } else if (qform_code > 0) {
    grid.geom.origin = {read_at<float>(hdr, 268, swap), read_at<float>(hdr, 272, swap), read_at<float>(hdr, 276, swap)};
  }
  grid.geom.validate();

  std::size_t elem = 0;
  switch (datatype) {
    case 2: elem = 1; break;   // uint8
    case 4: elem = 2; break;   // int16
    case 16: elem = 4; break;  // float32
    case 64: elem = 8; break;  // float64
    default: throw IoError("unsupported NIfTI datatype " + std::to_string(datatype) + " in " + path.string());
  }

  const auto skip = static_cast<std::size_t>(std::max(352.0f, vox_offset)) - hdr.size();
  std::vector<char> pad(skip);
  if (skip > 0 && !file.read(pad.data(), skip)) throw IoError("truncated NIfTI file " + path.string());
  std::vector<char> bytes(grid.geom.size() * elem);
  if (!file.read(bytes.data(), bytes.size()))
    throw IoError("NIfTI payload shorter than dims imply in " + path.string());

  grid.data.resize(grid.geom.size());
  switch (datatype) {
    case 2: decode<std::uint8_t>(bytes, false, slope, inter, grid.data); break;
    case 4: decode<std::int16_t>(bytes, swap, slope, inter, grid.data); break;
    case 16: decode<float>(bytes, swap, slope, inter, grid.data); break;
    case 64: decode<double>(bytes, swap, slope, inter, grid.data); break;
  }
  return grid;
}

}  // namespace

VoxelGrid load_volume(const fs::path& path, VolumeFormat format) {
  if (!fs::exists(path)) throw IoError("volume not found: " + path.string());
  if (format == VolumeFormat::kAuto) {
    const std::string ext = lower_ext(path);
    if (ext == ".json") format = VolumeFormat::kRawJson;
    else if (ext == ".nii" || ext == ".nii.gz") format = VolumeFormat::kNifti1;
    else throw IoError("cannot infer volume format from " + path.string());
  }
  return format == VolumeFormat::kRawJson ? load_raw_json(path) : load_nifti1(path);
}

void write_volume(const VoxelGrid& grid, const fs::path& json_path) {
  grid.geom.validate();
  if (grid.data.size() != grid.geom.size()) throw IoError("volume data length does not match dims");
  json header = {
      {"dims", {grid.geom.dims.x(), grid.geom.dims.y(), grid.geom.dims.z()}},
      {"spacing", {grid.geom.spacing.x(), grid.geom.spacing.y(), grid.geom.spacing.z()}},
      {"origin", {grid.geom.origin.x(), grid.geom.origin.y(), grid.geom.origin.z()}},
      {"dtype", "f32"},
      {"order", "row-major-xyz"},
  };
  {
    std::ofstream out(json_path);
    if (!out) throw IoError("cannot write " + json_path.string());
    out << header.dump(2) << '\n';
  }
  fs::path bin = json_path;
  bin.replace_extension(".bin");
  std::ofstream payload(bin, std::ios::binary);
  if (!payload) throw IoError("cannot write " + bin.string());
  payload.write(reinterpret_cast<const char*>(grid.data.data()),
                static_cast<std::streamsize>(grid.data.size() * sizeof(float)));
}

BinaryMask threshold_mask(const VoxelGrid& grid, double cutoff) {
  BinaryMask mask(grid.geom, 0);
  for (std::size_t i = 0; i < grid.data.size(); ++i) mask.data[i] = grid.data[i] > cutoff ? 1 : 0;
  return mask;
}

std::size_t count(const BinaryMask& mask) {
  return static_cast<std::size_t>(std::count_if(mask.data.begin(), mask.data.end(), [](auto v) { return v != 0; }));
}

bool in_mask(const BinaryMask& mask, int i, int j, int k) {
  return mask.geom.contains(i, j, k) && mask(i, j, k) != 0;
}

bool is_boundary(const BinaryMask& mask, int i, int j, int k) {
  if (!in_mask(mask, i, j, k)) return false;
  return !in_mask(mask, i - 1, j, k) || !in_mask(mask, i + 1, j, k) || !in_mask(mask, i, j - 1, k) ||
         !in_mask(mask, i, j + 1, k) || !in_mask(mask, i, j, k - 1) || !in_mask(mask, i, j, k + 1);
}

BinaryMask boundary_voxels(const BinaryMask& mask) {
  BinaryMask out(mask.geom, 0);
  for (std::size_t idx = 0; idx < mask.size(); ++idx) {
    const Vec3i c = mask.geom.coords(idx);
    out.data[idx] = is_boundary(mask, c.x(), c.y(), c.z()) ? 1 : 0;
  }
  return out;
}

BinaryMask crop_to_mask(const BinaryMask& mask, int margin) {
  Vec3i lo = mask.geom.dims, hi(-1, -1, -1);
  for (std::size_t idx = 0; idx < mask.size(); ++idx) {
    if (!mask.data[idx]) continue;
    const Vec3i c = mask.geom.coords(idx);
    lo = lo.cwiseMin(c);
    hi = hi.cwiseMax(c);
  }
  if (hi.x() < 0) throw ComputeError("crop_to_mask: empty mask");
  lo -= Vec3i::Constant(margin);
  hi += Vec3i::Constant(margin);
  GridGeometry g;
  g.dims = hi - lo + Vec3i::Ones();
  g.spacing = mask.geom.spacing;
  g.origin = mask.geom.world(lo.cast<double>());
  BinaryMask out(g, 0);
  for (int k = 0; k < g.dims.z(); ++k)
    for (int j = 0; j < g.dims.y(); ++j)
      for (int i = 0; i < g.dims.x(); ++i)
        out(i, j, k) = in_mask(mask, i + lo.x(), j + lo.y(), k + lo.z()) ? 1 : 0;
  return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas f(q) + (s (p - q))^2 along one line
// (Felzenszwalb & Huttenlocher). Infinite sites are skipped.
void edt_1d(const double* f, double* d, int n, double s2, std::vector<int>& v, std::vector<double>& z) {
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double fq = f[q] + s2 * q * q;
    while (k >= 0) {
      const int r = v[k];
      const double inter = (fq - (f[r] + s2 * r * r)) / (2.0 * s2 * (q - r));
      if (inter <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -kInf : (fq - (f[v[k - 1]] + s2 * v[k - 1] * v[k - 1])) / (2.0 * s2 * (q - v[k - 1]));
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d, d + n, kInf);
    return;
  }
  int j = 0;
  for (int p = 0; p < n; ++p) {
    while (z[j + 1] < p) ++j;
    const double dp = p - v[j];
    d[p] = f[v[j]] + s2 * dp * dp;
  }
}

}  // namespace

DistanceField distance_transform(const BinaryMask& mask) {
  if (count(mask) == 0) throw ComputeError("distance_transform: empty mask");
  const GridGeometry& g = mask.geom;
  std::vector<double> sq(g.size(), kInf);
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    const Vec3i c = g.coords(idx);
    if (is_boundary(mask, c.x(), c.y(), c.z())) sq[idx] = 0.0;
  }

  // One separable pass per axis; each line is independent.
  auto run_axis = [&](int axis) {
    const int n = g.dims[axis];
    const double s2 = g.spacing[axis] * g.spacing[axis];
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    const int n1 = g.dims[a1], n2 = g.dims[a2];
    parallel_for(static_cast<std::size_t>(n1) * n2, [&](std::size_t line) {
      std::vector<double> f(n), d(n), z(n + 1);
      std::vector<int> v(n);
      Vec3i c;
      c[a1] = static_cast<int>(line % n1);
      c[a2] = static_cast<int>(line / n1);
      for (int p = 0; p < n; ++p) {
        c[axis] = p;
        f[p] = sq[g.index(c.x(), c.y(), c.z())];
      }
      edt_1d(f.data(), d.data(), n, s2, v, z);
      for (int p = 0; p < n; ++p) {
        c[axis] = p;
        sq[g.index(c.x(), c.y(), c.z())] = d[p];
      }
    });
  };
  run_axis(0);
  run_axis(1);
  run_axis(2);

  DistanceField dist(g, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t idx = 0; idx < g.size(); ++idx)
    if (mask.data[idx]) dist.data[idx] = std::sqrt(sq[idx]);
  return dist;
}

GradientField gradient_field(const DistanceField& dist) {
  const GridGeometry& g = dist.geom;
  GradientField grad(g);
  auto inside = [&](int i, int j, int k) { return g.contains(i, j, k) && !std::isnan(dist(i, j, k)); };
  parallel_for(g.size(), [&](std::size_t idx) {
    if (std::isnan(dist.data[idx])) return;
    grad.inside[idx] = 1;
    const Vec3i c = g.coords(idx);
    const double d0 = dist.data[idx];
    Vec3 v;
    for (int a = 0; a < 3; ++a) {
      Vec3i lo = c, hi = c;
      --lo[a];
      ++hi[a];
      const bool has_lo = inside(lo.x(), lo.y(), lo.z());
      const bool has_hi = inside(hi.x(), hi.y(), hi.z());
      const double s = g.spacing[a];
      if (has_lo && has_hi) v[a] = (dist(hi.x(), hi.y(), hi.z()) - dist(lo.x(), lo.y(), lo.z())) / (2.0 * s);
      else if (has_hi) v[a] = (dist(hi.x(), hi.y(), hi.z()) - d0) / s;
      else if (has_lo) v[a] = (d0 - dist(lo.x(), lo.y(), lo.z())) / s;
      else v[a] = 0.0;
    }
    const double n = v.norm();
    grad.data[idx] = n < 1e-9 ? Vec3::Zero() : Vec3(v / n);
  });
  return grad;
}

}  // namespace medrep
