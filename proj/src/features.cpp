#include "medrep/features.hpp"

#include "medrep/csv.hpp"
#include "medrep/parallel.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace medrep {

namespace {

// Tricube weights reach zero at the farthest neighbour; stretch the radius
// slightly so every selected sample contributes.
constexpr double kRadiusStretch = 1.0 + 1e-6;

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Distance from q to the convex hull of pts (0 inside). Degenerate hulls
// (fewer than three corners) count as infinitely far.
double hull_distance(std::vector<Vec2> pts, const Vec2& q) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  std::vector<Vec2> h(2 * pts.size());
  std::size_t m = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (m >= 2 && cross(h[m - 2], h[m - 1], pts[i]) <= 0) --m;
    h[m++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, lo = m + 1; i-- > 0;) {
    while (m >= lo && cross(h[m - 2], h[m - 1], pts[i]) <= 0) --m;
    h[m++] = pts[i];
  }
  if (m < 4) return std::numeric_limits<double>::infinity();
  h.resize(m - 1);
  bool inside = true;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < h.size(); ++i) {
    const Vec2& a = h[i];
    const Vec2& b = h[(i + 1) % h.size()];
    if (cross(a, b, q) < 0) inside = false;
    const Vec2 ab = b - a;
    const double u = std::clamp((q - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    best = std::min(best, (a + u * ab - q).norm());
  }
  return inside ? 0.0 : best;
}

std::size_t nearest_anchor(const ReferenceGrid& grid, const Vec3& p) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < grid.size(); ++a) {
    const double d = (grid.positions[a] - p).squaredNorm();
    if (d < bd) {
      bd = d;
      best = a;
    }
  }
  return best;
}

// Samples per local anchor, in input order.
std::vector<std::vector<std::size_t>> by_anchor(const ReferenceGrid& grid, const std::vector<ProjectedSample>& s) {
  std::vector<std::vector<std::size_t>> out(grid.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const int local = s[i].anchor_id - grid.id_offset;
    if (local < 0 || local >= static_cast<int>(grid.size())) continue;
    out[static_cast<std::size_t>(local)].push_back(i);
  }
  return out;
}

// A foot on the parameter-domain edge is a clamped projection: its distance
// is not measured along the normal, so it says nothing about thickness.
bool interior_foot(const ParamCoord& t) {
  return t.x() > 0.0 && t.x() < 1.0 && t.y() > 0.0 && t.y() < 1.0;
}

double median_anchor_spacing(const ReferenceGrid& grid) {
  if (grid.size() < 2) return 0.0;
  std::vector<double> nn(grid.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t j = 0; j < grid.size(); ++j)
      if (i != j) nn[i] = std::min(nn[i], (grid.params[i] - grid.params[j]).norm());
  std::nth_element(nn.begin(), nn.begin() + static_cast<long>(nn.size() / 2), nn.end());
  return nn[nn.size() / 2];
}

struct Pool {
  std::vector<ParamCoord> t;
  std::vector<double> v;
};

template <typename Select>
Pool gather(const std::vector<int>& anchors, const std::vector<std::vector<std::size_t>>& members,
            const std::vector<ProjectedSample>& s, Select&& select) {
  Pool p;
  for (int a : anchors)
    for (std::size_t i : members[static_cast<std::size_t>(a)]) {
      double v;
      if (!select(s[i], v)) continue;
      p.t.push_back(s[i].t);
      p.v.push_back(v);
    }
  return p;
}

}  // namespace

namespace {

BinaryMask suprathreshold(const BinaryMask& structure, const VoxelGrid& suvr, double cutoff,
                          const std::string& subject_id) {
  const bool use_mask = structure.size() > 0;
  if (use_mask && structure.geom != suvr.geom)
    throw IoError("subject " + subject_id + ": volume geometry differs from the template");
  BinaryMask supra(suvr.geom, 0);
  for (std::size_t i = 0; i < suvr.size(); ++i)
    supra.data[i] = (!use_mask || structure.data[i]) && suvr.data[i] > cutoff ? 1 : 0;
  return supra;
}

struct Located {
  const Projection* p;
  Vec3 normal;
  std::size_t anchor;
};

// `where(k)` locates voxels[k] on the surface.
template <typename Where>
std::vector<ProjectedSample> make_samples(const BinaryMask& supra, const VoxelGrid& suvr,
                                          const std::vector<std::size_t>& voxels, const ReferenceGrid& grid,
                                          const std::string& subject_id, Where&& where) {
  std::vector<ProjectedSample> out(voxels.size());
  parallel_for(voxels.size(), [&](std::size_t k) {
    const Located at = where(k);
    const Projection* p = at.p;
    const Vec3& n = at.normal;
    const Vec3i c = supra.geom.coords(voxels[k]);
    const Vec3 q = suvr.geom.world(voxels[k]);
    ProjectedSample& s = out[k];
    s.subject_id = subject_id;
    s.t = p->t;
    s.position = q;
    s.suvr = suvr.data[voxels[k]];
    const double side = (q - p->foot).dot(n);
    s.signed_dist = side < 0 ? -p->distance : p->distance;
    s.boundary = is_boundary(supra, c.x(), c.y(), c.z());
    if (s.boundary) {
      // One voxel further along the normal (own side) leaves the set.
      const Vec3 step = (side < 0 ? -n : n) * supra.geom.spacing.maxCoeff();
      const Vec3 u = supra.geom.to_index(q + step).array().round();
      s.faces_normal = !in_mask(supra, static_cast<int>(u.x()), static_cast<int>(u.y()), static_cast<int>(u.z()));
    }
    s.anchor_id = grid.anchor_id(at.anchor);
  });
  return out;
}

}  // namespace

std::vector<ProjectedSample> project_subject(const BinaryMask& structure, const VoxelGrid& suvr,
                                             const PrincipalSurface& surface, const ReferenceGrid& grid,
                                             double cutoff, const std::string& subject_id) {
  if (grid.size() == 0) throw ComputeError("project_subject: empty reference grid");
  const BinaryMask supra = suprathreshold(structure, suvr, cutoff, subject_id);
  std::vector<std::size_t> voxels;
  PointCloud q;
  for (std::size_t i = 0; i < supra.size(); ++i) {
    if (!supra.data[i]) continue;
    voxels.push_back(i);
    q.push_back(suvr.geom.world(i));
  }
  if (voxels.empty()) return {};
  const std::vector<Projection> proj = project_all(surface, q);
  return make_samples(supra, suvr, voxels, grid, subject_id, [&](std::size_t k) {
    return Located{&proj[k], surface_normal(surface, proj[k].t), nearest_anchor(grid, proj[k].foot)};
  });
}

VoxelProjectionCache project_structure(const BinaryMask& structure, const PrincipalSurface& surface,
                                       const ReferenceGrid& grid) {
  if (grid.size() == 0) throw ComputeError("project_structure: empty reference grid");
  VoxelProjectionCache c;
  c.geom = structure.geom;
  c.slot.assign(structure.size(), -1);
  PointCloud q;
  for (std::size_t i = 0; i < structure.size(); ++i) {
    if (!structure.data[i]) continue;
    c.slot[i] = static_cast<std::int64_t>(q.size());
    q.push_back(structure.geom.world(i));
  }
  c.proj = project_all(surface, q);
  c.normal.resize(q.size());
  c.anchor.resize(q.size());
  parallel_for(q.size(), [&](std::size_t k) {
    c.normal[k] = surface_normal(surface, c.proj[k].t);
    c.anchor[k] = static_cast<int>(nearest_anchor(grid, c.proj[k].foot));
  });
  return c;
}

std::vector<ProjectedSample> project_subject(const BinaryMask& structure, const VoxelGrid& suvr,
                                             const VoxelProjectionCache& cache, const ReferenceGrid& grid,
                                             double cutoff, const std::string& subject_id) {
  if (structure.size() == 0) throw ComputeError("project_subject: the cached form needs a structure mask");
  if (cache.geom != structure.geom) throw ComputeError("project_subject: cache built for another lattice");
  const BinaryMask supra = suprathreshold(structure, suvr, cutoff, subject_id);
  std::vector<std::size_t> voxels;
  for (std::size_t i = 0; i < supra.size(); ++i)
    if (supra.data[i]) voxels.push_back(i);
  return make_samples(supra, suvr, voxels, grid, subject_id, [&](std::size_t k) {
    const auto slot = static_cast<std::size_t>(cache.slot[voxels[k]]);
    return Located{&cache.proj[slot], cache.normal[slot], static_cast<std::size_t>(cache.anchor[slot])};
  });
}

LoessFit loess_interpolate(const std::vector<ParamCoord>& t, const std::vector<double>& values, const ParamCoord& t0,
                           double span, int min_support, double max_gain, double fallback_reach) {
  if (!(span > 0.0 && span <= 1.0)) throw ComputeError("loess: span must be in (0, 1]");
  if (min_support < 3) throw ComputeError("loess: min_support must be >= 3");
  if (t.size() != values.size()) throw ComputeError("loess: size mismatch");
  LoessFit fit;
  const std::size_t n = t.size();
  if (n == 0) return fit;
  const std::size_t k = std::min(n, static_cast<std::size_t>(std::ceil(span * static_cast<double>(n) - 1e-12)));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = (t[i] - t0).norm();
  std::nth_element(order.begin(), order.begin() + static_cast<long>(k - 1), order.end(),
                   [&](std::size_t a, std::size_t b) { return d[a] < d[b] || (d[a] == d[b] && a < b); });
  double dmax = 0.0;
  for (std::size_t i = 0; i < k; ++i) dmax = std::max(dmax, d[order[i]]);
  dmax *= kRadiusStretch;

  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  std::vector<std::pair<std::size_t, double>> used;
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t i = order[r];
    double w = 1.0;
    if (dmax > 0) {
      const double u = d[i] / dmax;
      if (u >= 1.0) continue;
      w = std::pow(1.0 - u * u * u, 3);
    }
    if (!(w > 0)) continue;
    ++fit.support;
    used.emplace_back(i, w);
    const Eigen::Vector3d x(1.0, t[i].x() - t0.x(), t[i].y() - t0.y());
    A += w * x * x.transpose();
    b += w * values[i] * x;
  }
  if (fit.support < min_support) return fit;

  // Rank check relative to the problem scale: collinear supports make the
  // linear terms unidentifiable.
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(A);
  const double top = es.eigenvalues().maxCoeff();
  if (!(es.eigenvalues().minCoeff() > 1e-12 * top)) return fit;
  const auto ldlt = A.ldlt();
  const Eigen::Vector3d beta = ldlt.solve(b);
  if (!std::isfinite(beta(0))) return fit;
  if (std::isfinite(max_gain)) {
    // Equivalent kernel: value = sum_i l_i s_i with l_i = w_i e1' A^-1 x_i.
    const Eigen::Vector3d r = ldlt.solve(Eigen::Vector3d::UnitX());
    double gain = 0.0;
    for (const auto& [i, w] : used) gain += std::abs(w * (r(0) + r(1) * (t[i].x() - t0.x()) + r(2) * (t[i].y() - t0.y())));
    if (gain > max_gain) {
      std::vector<Vec2> pts;
      for (const auto& [i, w] : used) pts.push_back(t[i]);
      if (!(hull_distance(std::move(pts), t0) <= fallback_reach)) return fit;
      // Local-constant fallback: a convex combination cannot overshoot.
      double sw = 0.0, sv = 0.0;
      for (const auto& [i, w] : used) sw += w, sv += w * values[i];
      fit.value = sv / sw;
      return fit;
    }
  }
  fit.value = beta(0);
  return fit;
}

std::vector<std::vector<int>> anchor_pools(const ReferenceGrid& grid, int k) {
  const std::size_t n = grid.size();
  const std::size_t m = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, k)));
  std::vector<std::vector<int>> out(n);
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto dist = [&](int i) { return (grid.params[static_cast<std::size_t>(i)] - grid.params[a]).squaredNorm(); };
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(m), order.end(), [&](int i, int j) {
      const double di = dist(i), dj = dist(j);
      return di < dj || (di == dj && i < j);
    });
    order.resize(m);
    out[a] = std::move(order);
  }
  return out;
}

std::vector<std::pair<std::optional<double>, std::optional<double>>> thickness_features(
    const ReferenceGrid& grid, const std::vector<ProjectedSample>& samples, const FeatureOptions& opts) {
  const auto members = by_anchor(grid, samples);
  const auto pools = anchor_pools(grid, opts.pool_anchors);
  std::vector<std::pair<std::optional<double>, std::optional<double>>> out(grid.size());
  const double reach = opts.fallback_reach * median_anchor_spacing(grid);
  parallel_for(grid.size(), [&](std::size_t a) {
    const Pool pos = gather(pools[a], members, samples, [](const ProjectedSample& s, double& v) {
      v = s.signed_dist;
      return s.faces_normal && s.signed_dist > 0 && interior_foot(s.t);
    });
    const Pool neg = gather(pools[a], members, samples, [](const ProjectedSample& s, double& v) {
      v = s.signed_dist;
      return s.faces_normal && s.signed_dist < 0 && interior_foot(s.t);
    });
    const LoessFit fp = loess_interpolate(pos.t, pos.v, grid.params[a], opts.span, opts.min_support, opts.max_gain, reach);
    const LoessFit fn = loess_interpolate(neg.t, neg.v, grid.params[a], opts.span, opts.min_support, opts.max_gain, reach);
    if (fp.value) out[a].first = std::max(0.0, *fp.value);
    if (fn.value) out[a].second = std::min(0.0, *fn.value);
  });
  return out;
}

std::vector<AnchorFeatures> anchor_features(const ReferenceGrid& grid, const std::vector<ProjectedSample>& samples,
                                            const FeatureOptions& opts) {
  std::vector<AnchorFeatures> out(grid.size());
  if (samples.empty()) return out;
  const auto members = by_anchor(grid, samples);
  const auto pools = anchor_pools(grid, opts.pool_anchors);
  const auto thick = thickness_features(grid, samples, opts);
  parallel_for(grid.size(), [&](std::size_t a) {
    // No sample of its own: nothing local to interpolate, only extrapolation.
    if (members[a].empty()) return;
    const Pool all = gather(pools[a], members, samples, [](const ProjectedSample& s, double& v) {
      v = s.suvr;
      return true;
    });
    const LoessFit f = loess_interpolate(all.t, all.v, grid.params[a], opts.span, opts.min_support);
    AnchorFeatures& r = out[a];
    r.n_support = f.support;
    r.covered = f.value && *f.value > opts.cutoff;
    if (!r.covered) return;
    r.suvr_hat = f.value;
    r.dist_pos = thick[a].first;
    r.dist_neg = thick[a].second;
  });
  return out;
}

std::vector<std::array<int, 3>> delaunay(const std::vector<Vec2>& points) {
  const int n = static_cast<int>(points.size());
  if (n < 3) return {};
  Vec2 lo = points[0], hi = points[0];
  for (const Vec2& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double span = std::max((hi - lo).maxCoeff(), 1e-12);
  const Vec2 mid = 0.5 * (lo + hi);
  std::vector<Vec2> pts = points;
  pts.push_back(mid + Vec2(-20 * span, -20 * span));
  pts.push_back(mid + Vec2(20 * span, -20 * span));
  pts.push_back(mid + Vec2(0, 20 * span));

  struct Tri {
    std::array<int, 3> v;
    Vec2 centre;
    double r2;
  };
  auto make = [&](int a, int b, int c) {
    const Vec2 &A = pts[a], &B = pts[b], &C = pts[c];
    const double d = 2 * (A.x() * (B.y() - C.y()) + B.x() * (C.y() - A.y()) + C.x() * (A.y() - B.y()));
    Tri t{{a, b, c}, Vec2::Zero(), std::numeric_limits<double>::infinity()};
    if (std::abs(d) < 1e-300) return t;
    const double a2 = A.squaredNorm(), b2 = B.squaredNorm(), c2 = C.squaredNorm();
    t.centre = Vec2((a2 * (B.y() - C.y()) + b2 * (C.y() - A.y()) + c2 * (A.y() - B.y())) / d,
                    (a2 * (C.x() - B.x()) + b2 * (A.x() - C.x()) + c2 * (B.x() - A.x())) / d);
    t.r2 = (A - t.centre).squaredNorm();
    return t;
  };

  std::vector<Tri> tris{make(n, n + 1, n + 2)};
  for (int p = 0; p < n; ++p) {
    std::vector<std::array<int, 2>> edges;
    std::vector<Tri> keep;
    keep.reserve(tris.size());
    for (const Tri& t : tris) {
      if ((pts[p] - t.centre).squaredNorm() < t.r2 * (1 + 1e-12)) {
        for (int e = 0; e < 3; ++e) edges.push_back({t.v[e], t.v[(e + 1) % 3]});
      } else {
        keep.push_back(t);
      }
    }
    // Boundary of the cavity: edges not shared by two removed triangles.
    std::vector<std::array<int, 2>> boundary;
    for (std::size_t i = 0; i < edges.size(); ++i) {
      bool shared = false;
      for (std::size_t j = 0; j < edges.size() && !shared; ++j)
        shared = i != j && edges[i][0] == edges[j][1] && edges[i][1] == edges[j][0];
      if (!shared) boundary.push_back(edges[i]);
    }
    for (const auto& e : boundary) keep.push_back(make(e[0], e[1], p));
    tris = std::move(keep);
  }

  std::vector<std::array<int, 3>> out;
  for (const Tri& t : tris) {
    if (t.v[0] >= n || t.v[1] >= n || t.v[2] >= n) continue;
    std::array<int, 3> v = t.v;
    const Vec2 e1 = points[v[1]] - points[v[0]], e2 = points[v[2]] - points[v[0]];
    if (e1.x() * e2.y() - e1.y() * e2.x() < 0) std::swap(v[1], v[2]);
    out.push_back(v);
  }
  std::sort(out.begin(), out.end());
  return out;
}

BoundaryReconstruction reconstruct_boundary(const PrincipalSurface& surface, const ReferenceGrid& grid,
                                            const std::vector<std::optional<double>>& dist_pos,
                                            const std::vector<std::optional<double>>& dist_neg, bool triangulate) {
  if (dist_pos.size() != grid.size() || dist_neg.size() != grid.size())
    throw ComputeError("reconstruct_boundary: feature count differs from the grid");
  BoundaryReconstruction rec;
  std::vector<int> index_pos(grid.size(), -1), index_neg(grid.size(), -1);
  for (int side : {+1, -1}) {
    const auto& d = side > 0 ? dist_pos : dist_neg;
    auto& index = side > 0 ? index_pos : index_neg;
    for (std::size_t a = 0; a < grid.size(); ++a) {
      if (!d[a]) continue;
      const ParamCoord& t = grid.params[a];
      index[a] = static_cast<int>(rec.points.size());
      rec.points.push_back(surface(t) + *d[a] * surface_normal(surface, t));
      rec.anchor_ids.push_back(grid.anchor_id(a));
      rec.side.push_back(side);
    }
  }
  if (!triangulate || grid.size() < 3) return rec;

  // Drop triangles spanning holes: any edge longer than three times the
  // median nearest-anchor spacing.
  const double max_edge = 3.0 * median_anchor_spacing(grid);

  for (int side : {+1, -1}) {
    const auto& index = side > 0 ? index_pos : index_neg;
    std::vector<Vec2> pts;
    std::vector<std::size_t> local;
    for (std::size_t a = 0; a < grid.size(); ++a)
      if (index[a] >= 0) {
        pts.push_back(grid.params[a]);
        local.push_back(a);
      }
    for (const auto& tri : delaunay(pts)) {
      bool ok = true;
      for (int e = 0; e < 3 && ok; ++e) ok = (pts[tri[e]] - pts[tri[(e + 1) % 3]]).norm() <= max_edge;
      if (!ok) continue;
      std::array<int, 3> f{index[local[tri[0]]], index[local[tri[1]]], index[local[tri[2]]]};
      if (side < 0) std::swap(f[1], f[2]);
      rec.triangles.push_back(f);
    }
  }
  return rec;
}

FeatureExtractor::FeatureExtractor(const std::vector<StructureModel>& structures, const FeatureOptions& opts)
    : structures_(structures), opts_(opts) {
  for (const StructureModel& st : structures_)
    caches_.push_back(st.mask.size() ? std::optional(project_structure(st.mask, st.surface, st.grid)) : std::nullopt);
}

std::vector<FeatureRow> FeatureExtractor::extract(const SubjectVolume& subj, std::vector<ProjectedSample>* samples) const {
  std::vector<FeatureRow> rows;
  for (std::size_t k = 0; k < structures_.size(); ++k) {
    const StructureModel& st = structures_[k];
    const auto s = caches_[k] ? project_subject(st.mask, subj.suvr, *caches_[k], st.grid, opts_.cutoff, subj.subject_id)
                              : project_subject(st.mask, subj.suvr, st.surface, st.grid, opts_.cutoff, subj.subject_id);
    const auto f = anchor_features(st.grid, s, opts_);
    for (std::size_t a = 0; a < st.grid.size(); ++a) {
      FeatureRow r;
      r.subject_id = subj.subject_id;
      r.anchor_id = st.grid.anchor_id(a);
      r.covered = f[a].covered;
      r.suvr_hat = f[a].suvr_hat;
      r.dist_pos = f[a].dist_pos;
      r.dist_neg = f[a].dist_neg;
      r.n_support = f[a].n_support;
      rows.push_back(std::move(r));
    }
    if (samples) samples->insert(samples->end(), s.begin(), s.end());
  }
  return rows;
}

SurfaceFeatureTable build_feature_table(const std::vector<SubjectVolume>& subjects,
                                        const std::vector<StructureModel>& structures, const FeatureOptions& opts,
                                        std::vector<ProjectedSample>* samples) {
  const FeatureExtractor fx(structures, opts);
  SurfaceFeatureTable table;
  for (const SubjectVolume& subj : subjects) {
    auto rows = fx.extract(subj, samples);
    table.rows.insert(table.rows.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
  }
  return table;
}

void write_feature_csv(const SurfaceFeatureTable& table, const std::filesystem::path& path) {
  csv::Writer w(path, {"subject_id", "anchor_id", "covered", "suvr_hat", "dist_pos", "dist_neg", "n_support"});
  for (const FeatureRow& r : table.rows) {
    w << r.subject_id << r.anchor_id << (r.covered ? 1 : 0) << r.suvr_hat << r.dist_pos << r.dist_neg << r.n_support;
    w.end_row();
  }
}

SurfaceFeatureTable read_feature_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::Table::read(path);
  SurfaceFeatureTable table;
  table.rows.reserve(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    FeatureRow row;
    row.subject_id = t.at(r, "subject_id");
    row.anchor_id = static_cast<int>(t.integer(r, "anchor_id"));
    row.covered = t.integer(r, "covered") != 0;
    row.suvr_hat = t.maybe_number(r, "suvr_hat");
    row.dist_pos = t.maybe_number(r, "dist_pos");
    row.dist_neg = t.maybe_number(r, "dist_neg");
    row.n_support = static_cast<int>(t.integer(r, "n_support"));
    if (!row.covered && (row.suvr_hat || row.dist_pos || row.dist_neg))
      throw IoError(path.string() + ": uncovered row with features (row " + std::to_string(r + 2) + ")");
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_samples_csv(const std::vector<ProjectedSample>& samples, const std::filesystem::path& path) {
  csv::Writer w(path, {"subject_id", "anchor_id", "t1", "t2", "x", "y", "z", "suvr", "signed_dist", "boundary", "faces_normal"});
  for (const ProjectedSample& s : samples) {
    w << s.subject_id << s.anchor_id << s.t.x() << s.t.y() << s.position.x() << s.position.y() << s.position.z()
      << s.suvr << s.signed_dist << (s.boundary ? 1 : 0) << (s.faces_normal ? 1 : 0);
    w.end_row();
  }
}

std::vector<ProjectedSample> read_samples_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::Table::read(path);
  std::vector<ProjectedSample> out(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    ProjectedSample& s = out[r];
    s.subject_id = t.at(r, "subject_id");
    s.anchor_id = static_cast<int>(t.integer(r, "anchor_id"));
    s.t = ParamCoord(t.number(r, "t1"), t.number(r, "t2"));
    s.position = Vec3(t.number(r, "x"), t.number(r, "y"), t.number(r, "z"));
    s.suvr = t.number(r, "suvr");
    s.signed_dist = t.number(r, "signed_dist");
    s.boundary = t.integer(r, "boundary") != 0;
    s.faces_normal = t.integer(r, "faces_normal") != 0;
  }
  return out;
}

void write_boundary_ply(const BoundaryReconstruction& rec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << rec.points.size()
      << "\nproperty double x\nproperty double y\nproperty double z\nproperty int anchor_id\nproperty int side\n"
      << "element face " << rec.triangles.size() << "\nproperty list uchar int vertex_indices\nend_header\n";
  for (std::size_t i = 0; i < rec.points.size(); ++i) {
    const Vec3& p = rec.points[i];
    out << csv::fmt(p.x()) << ' ' << csv::fmt(p.y()) << ' ' << csv::fmt(p.z()) << ' ' << rec.anchor_ids[i] << ' '
        << rec.side[i] << '\n';
  }
  for (const auto& f : rec.triangles) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

}  // namespace medrep
