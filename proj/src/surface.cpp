#include "medrep/surface.hpp"

#include "medrep/csv.hpp"
#include "medrep/parallel.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>

namespace medrep {

namespace {

using Mat32 = Eigen::Matrix<double, 3, 2>;
using Mat33 = Eigen::Matrix<double, 3, 3>;

struct Deduped {
  Matrix<double> sites;
  Matrix<double> targets;
};

Deduped dedupe_sites(const std::vector<ParamCoord>& params, const PointCloud& targets) {
  if (params.size() != targets.size()) throw ComputeError("fit_tps: params and targets differ in length");
  const double tol = 1e-9;
  struct Acc {
    Vec2 t = Vec2::Zero();
    Vec3 y = Vec3::Zero();
    int n = 0;
  };
  std::map<std::array<long long, 2>, Acc> cells;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamCoord& t = params[i];
    if (!t.allFinite() || !targets[i].allFinite()) throw ComputeError("fit_tps: non-finite input");
    Acc& a = cells[{std::llround(t.x() / tol), std::llround(t.y() / tol)}];
    a.t += t;
    a.y += targets[i];
    ++a.n;
  }
  Deduped d;
  d.sites.resize(static_cast<Eigen::Index>(cells.size()), 2);
  d.targets.resize(static_cast<Eigen::Index>(cells.size()), 3);
  Eigen::Index r = 0;
  for (const auto& [key, a] : cells) {
    d.sites.row(r) = (a.t / a.n).transpose();
    d.targets.row(r) = (a.y / a.n).transpose();
    ++r;
  }
  return d;
}

double mean_sq(const std::vector<Projection>& proj) {
  double s = 0.0;
  for (const Projection& p : proj) s += p.distance * p.distance;
  return proj.empty() ? 0.0 : s / static_cast<double>(proj.size());
}

}  // namespace

PrincipalSurface::PrincipalSurface(ThinPlateSpline<double> tps) : tps_(std::move(tps)) {
  if (tps_.dims() != 3 || tps_.affine.rows() != 3) throw ComputeError("PrincipalSurface: TPS must map to R^3");
  const Eigen::Index n = tps_.size();
  sx_.resize(static_cast<std::size_t>(n));
  sy_.resize(static_cast<std::size_t>(n));
  w_.resize(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    sx_[static_cast<std::size_t>(j)] = tps_.sites(j, 0);
    sy_[static_cast<std::size_t>(j)] = tps_.sites(j, 1);
    w_[static_cast<std::size_t>(j)] = tps_.weights.row(j).transpose();
  }
  a_ = tps_.affine;
  auto lat = std::make_shared<Lattice>();
  lat->n = 64;
  lat->points.resize(static_cast<std::size_t>(lat->n * lat->n));
  parallel_for(lat->points.size(), [&](std::size_t idx) {
    const int i = static_cast<int>(idx) % lat->n, j = static_cast<int>(idx) / lat->n;
    lat->points[idx] = (*this)(ParamCoord(i / (lat->n - 1.0), j / (lat->n - 1.0)));
  });
  for (int j = 0; j + 1 < lat->n; ++j)
    for (int i = 0; i + 1 < lat->n; ++i) {
      const auto at = [&](int a, int b) { return lat->points[static_cast<std::size_t>(a + lat->n * b)]; };
      const double diag = std::max((at(i, j) - at(i + 1, j + 1)).norm(), (at(i + 1, j) - at(i, j + 1)).norm());
      lat->reach = std::max(lat->reach, 0.5 * diag);
    }
  lattice_ = std::move(lat);
}

Vec3 PrincipalSurface::operator()(const ParamCoord& t) const {
  Vec3 out = a_.row(0).transpose() + t.x() * a_.row(1).transpose() + t.y() * a_.row(2).transpose();
  double x = 0, y = 0, z = 0;
  for (std::size_t j = 0; j < w_.size(); ++j) {
    const double d1 = t.x() - sx_[j], d2 = t.y() - sy_[j];
    const double k = tps_kernel(d1 * d1 + d2 * d2);
    x += k * w_[j].x();
    y += k * w_[j].y();
    z += k * w_[j].z();
  }
  return out + Vec3(x, y, z);
}

Eigen::Matrix<double, 3, 2> PrincipalSurface::jacobian(const ParamCoord& t) const {
  Vec3 f;
  Mat32 j;
  Mat33 h;
  derivatives(t, f, j, h);
  return j;
}

void PrincipalSurface::derivatives(const ParamCoord& t, Vec3& f, Eigen::Matrix<double, 3, 2>& jac,
                                   Eigen::Matrix<double, 3, 3>& hess) const {
  f = a_.row(0).transpose() + t.x() * a_.row(1).transpose() + t.y() * a_.row(2).transpose();
  jac.col(0) = a_.row(1).transpose();
  jac.col(1) = a_.row(2).transpose();
  hess.setZero();
  for (std::size_t j = 0; j < w_.size(); ++j) {
    const double d1 = t.x() - sx_[j], d2 = t.y() - sy_[j];
    const double s = d1 * d1 + d2 * d2;
    const Vec3& w = w_[j];
    const double sc = std::max(s, 1e-30);
    const double g = std::log(sc) + 1.0;
    if (s > 0.0) {
      f += (0.5 * s * (g - 1.0)) * w;
      jac.col(0) += (d1 * g) * w;
      jac.col(1) += (d2 * g) * w;
    }
    hess.col(0) += (g + 2.0 * d1 * d1 / sc) * w;
    hess.col(1) += (2.0 * d1 * d2 / sc) * w;
    hess.col(2) += (g + 2.0 * d2 * d2 / sc) * w;
  }
}

std::vector<ParamCoord> pca_parameterize(const PointCloud& points) {
  if (points.size() < 3) throw ComputeError("pca_parameterize: need at least 3 points");
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Mat33 cov = Mat33::Zero();
  for (const Vec3& p : points) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat33> es(cov);
  const Vec3 ev = es.eigenvalues();
  if (!(ev(1) > 1e-12 * ev(2)) || !(ev(2) > 0.0))
    throw ComputeError("pca_parameterize: point cloud is rank-deficient (collinear)");
  std::array<Vec3, 2> axes{es.eigenvectors().col(2), es.eigenvectors().col(1)};
  for (Vec3& a : axes) {
    Eigen::Index k;
    a.cwiseAbs().maxCoeff(&k);
    if (a(k) < 0) a = -a;
  }
  std::vector<ParamCoord> t(points.size());
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 d = points[i] - mean;
    t[i] = ParamCoord(d.dot(axes[0]), d.dot(axes[1]));
    lo = lo.cwiseMin(t[i]);
    hi = hi.cwiseMax(t[i]);
  }
  for (ParamCoord& p : t) p = (p - lo).cwiseQuotient(hi - lo);
  return t;
}

PrincipalSurface fit_tps(const std::vector<ParamCoord>& params, const PointCloud& targets, double lambda) {
  if (!(lambda >= 0.0)) throw ComputeError("fit_tps: lambda must be >= 0");
  const Deduped d = dedupe_sites(params, targets);
  const TpsSystem<double> sys(d.sites);
  PrincipalSurface s(sys.solve(d.targets, lambda));
  s.params = params;
  return s;
}

double select_lambda_gcv(const std::vector<ParamCoord>& params, const PointCloud& targets) {
  const Deduped d = dedupe_sites(params, targets);
  const TpsSystem<double> sys(d.sites);
  const std::vector<double> grid = default_lambda_grid();
  const std::vector<double> score = sys.gcv(d.targets, grid);
  const auto best = std::min_element(score.begin(), score.end()) - score.begin();
  return grid[static_cast<std::size_t>(best)];
}

namespace {

// Bounded Newton on 0.5 |f(t) - q|^2 over [0,1]^2, falling back to
// Levenberg-style steps when the Hessian is not positive definite.
Projection refine(const PrincipalSurface& s, const Vec3& q, ParamCoord t, const ProjectionOptions& opts) {
  Vec3 f;
  Mat32 J;
  Mat33 H3;
  s.derivatives(t, f, J, H3);
  double cost = 0.5 * (f - q).squaredNorm();
  for (int it = 0; it < 100; ++it) {
    const Vec3 r = f - q;
    const Vec2 g = J.transpose() * r;
    Eigen::Matrix2d H = J.transpose() * J;
    H(0, 0) += r.dot(H3.col(0));
    H(0, 1) += r.dot(H3.col(1));
    H(1, 0) += r.dot(H3.col(1));
    H(1, 1) += r.dot(H3.col(2));

    std::array<bool, 2> free{true, true};
    for (int a = 0; a < 2; ++a)
      if ((t(a) <= 0.0 && g(a) > 0.0) || (t(a) >= 1.0 && g(a) < 0.0)) free[a] = false;
    if (!free[0] && !free[1]) break;

    Vec2 step = Vec2::Zero();
    auto solve_free = [&](const Eigen::Matrix2d& M) {
      Vec2 out = Vec2::Zero();
      if (free[0] && free[1]) {
        Eigen::LLT<Eigen::Matrix2d> llt(M);
        if (llt.info() != Eigen::Success) return std::optional<Vec2>();
        out = -llt.solve(g);
      } else {
        const int a = free[0] ? 0 : 1;
        if (!(M(a, a) > 0.0)) return std::optional<Vec2>();
        out(a) = -g(a) / M(a, a);
      }
      return std::optional<Vec2>(out);
    };
    auto newton = solve_free(H);
    if (newton && newton->dot(g) < 0.0) {
      step = *newton;
    } else {
      Eigen::Matrix2d M = J.transpose() * J;
      M.diagonal().array() += 1e-9 * std::max(1.0, M.trace());
      auto gn = solve_free(M);
      if (!gn) break;
      step = *gn;
    }

    if (step.norm() < opts.step_tol) {
      const ParamCoord last = (t + step).cwiseMax(0.0).cwiseMin(1.0);
      Vec3 fl;
      Mat32 Jl;
      Mat33 Hl;
      s.derivatives(last, fl, Jl, Hl);
      if (0.5 * (fl - q).squaredNorm() <= cost) {
        t = last;
        f = fl;
      }
      break;
    }
    double alpha = 1.0;
    bool moved = false;
    ParamCoord next = t;
    for (int ls = 0; ls < 30; ++ls) {
      next = (t + alpha * step).cwiseMax(0.0).cwiseMin(1.0);
      const double c = 0.5 * ((s)(next)-q).squaredNorm();
      if (c <= cost) {
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) break;
    const double dt = (next - t).norm();
    t = next;
    s.derivatives(t, f, J, H3);
    cost = 0.5 * (f - q).squaredNorm();
    if (dt < opts.step_tol) break;
  }
  Projection p;
  p.t = t;
  p.foot = f;
  p.distance = (f - q).norm();
  return p;
}

}  // namespace

Projection project_to_surface(const PrincipalSurface& surface, const Vec3& q, const ProjectionOptions& opts) {
  const auto& lat = surface.lattice();
  const int n = lat.n;
  std::vector<double> d2(lat.points.size());
  for (std::size_t i = 0; i < d2.size(); ++i) d2[i] = (lat.points[i] - q).squaredNorm();
  std::vector<int> cand;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double v = d2[static_cast<std::size_t>(i + n * j)];
      bool minimum = true;
      for (int dj = -1; dj <= 1 && minimum; ++dj)
        for (int di = -1; di <= 1; ++di) {
          const int a = i + di, b = j + dj;
          if ((di == 0 && dj == 0) || a < 0 || b < 0 || a >= n || b >= n) continue;
          if (d2[static_cast<std::size_t>(a + n * b)] < v) {
            minimum = false;
            break;
          }
        }
      if (minimum) cand.push_back(i + n * j);
    }
  std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) { return d2[static_cast<std::size_t>(a)] < d2[static_cast<std::size_t>(b)]; });
  // A start can only win if its node distance is within the lattice reach
  // of the best node (with slack for curvature between nodes).
  const double cutoff = std::sqrt(d2[static_cast<std::size_t>(cand.front())]) + 2.0 * lat.reach;
  std::size_t keep = 1;
  while (keep < cand.size() && static_cast<int>(keep) < opts.max_starts &&
         std::sqrt(d2[static_cast<std::size_t>(cand[keep])]) <= cutoff)
    ++keep;
  cand.resize(keep);

  std::vector<Projection> found;
  for (int c : cand) found.push_back(refine(surface, q, ParamCoord((c % n) / (n - 1.0), (c / n) / (n - 1.0)), opts));
  double dmin = std::numeric_limits<double>::infinity();
  for (const Projection& p : found) dmin = std::min(dmin, p.distance);
  // Among minima equal within 1e-9 mm, the lexicographically largest (t1, t2).
  const Projection* best = nullptr;
  for (const Projection& p : found) {
    if (p.distance > dmin + 1e-9) continue;
    if (!best || p.t.x() > best->t.x() || (p.t.x() == best->t.x() && p.t.y() > best->t.y())) best = &p;
  }
  return *best;
}

std::vector<Projection> project_all(const PrincipalSurface& surface, const PointCloud& q, const ProjectionOptions& opts) {
  std::vector<Projection> out(q.size());
  parallel_for(q.size(), [&](std::size_t i) { out[i] = project_to_surface(surface, q[i], opts); });
  return out;
}

PrincipalSurface iterate_fit(const PointCloud& points, const FitOptions& opts) {
  if (points.size() < 6) throw ComputeError("iterate_fit: need at least 6 skeleton points");
  if (opts.max_iter < 1) throw ComputeError("iterate_fit: max_iter must be >= 1");
  std::vector<ParamCoord> params = pca_parameterize(points);
  const double lambda = opts.lambda ? *opts.lambda : select_lambda_gcv(params, points);
  PrincipalSurface surface = fit_tps(params, points, lambda);
  std::vector<Projection> proj = project_all(surface, points);
  double residual = mean_sq(proj);
  std::vector<IterationRecord> log{{0, 0.0, residual, true}};
  bool converged = !(opts.tol < std::numeric_limits<double>::infinity());
  std::string reason = converged ? "single-fit" : "max-iter";

  double prev_disp = std::numeric_limits<double>::infinity();
  int growth = 0;
  for (int it = 1; it <= opts.max_iter && !converged; ++it) {
    std::vector<ParamCoord> next(points.size());
    double disp = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      next[i] = proj[i].t;
      disp += (next[i] - params[i]).norm();
    }
    disp /= static_cast<double>(points.size());
    if (disp < opts.tol) {
      converged = true;
      reason = "displacement";
      break;
    }
    growth = disp > prev_disp ? growth + 1 : 0;
    prev_disp = disp;
    if (growth >= 3)
      throw ComputeError("iterate_fit: diverging, mean displacement grew 3 iterations in a row (last " +
                         csv::fmt(disp) + ")");

    PrincipalSurface cand = fit_tps(next, points, lambda);
    std::vector<Projection> cproj = project_all(cand, points);
    const double cres = mean_sq(cproj);
    if (cres > residual + 1e-9) {
      log.push_back({it, disp, cres, false});
      converged = true;  // residual stalled: keep the previous surface
      reason = "residual";
      break;
    }
    log.push_back({it, disp, cres, true});
    surface = std::move(cand);
    params = std::move(next);
    proj = std::move(cproj);
    residual = cres;
  }
  surface.params = params;
  surface.log = std::move(log);
  surface.converged = converged;
  surface.stop_reason = reason;
  return surface;
}

Vec3 surface_normal(const PrincipalSurface& surface, const ParamCoord& t, double h) {
  const ParamCoord c = t.cwiseMax(h).cwiseMin(1.0 - h);
  const Vec3 du = (surface(c + ParamCoord(h, 0)) - surface(c - ParamCoord(h, 0))) / (2 * h);
  const Vec3 dv = (surface(c + ParamCoord(0, h)) - surface(c - ParamCoord(0, h))) / (2 * h);
  const Vec3 n = du.cross(dv);
  const double len = n.norm();
  if (!(len >= 1e-12)) throw ComputeError("surface_normal: degenerate tangents");
  return surface.orientation * n / len;
}

void orient_normals(ReferenceGrid& grid, int neighbours) {
  const std::size_t n = grid.size();
  grid.sign_flips = 0;
  if (n < 2) return;
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(neighbours), n - 1);
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(k + 1), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double da = (grid.params[a] - grid.params[i]).squaredNorm();
                        const double db = (grid.params[b] - grid.params[i]).squaredNorm();
                        return da < db || (da == db && a < b);
                      });
    for (std::size_t r = 0; r <= k; ++r)
      if (order[r] != i) {
        adj[i].push_back(order[r]);
        adj[order[r]].push_back(i);
      }
  }
  std::vector<char> seen(n, 0);
  for (std::size_t root = 0; root < n; ++root) {
    if (seen[root]) continue;
    seen[root] = 1;
    std::deque<std::size_t> queue{root};
    while (!queue.empty()) {
      const std::size_t u = queue.front();
      queue.pop_front();
      for (std::size_t v : adj[u]) {
        if (seen[v]) continue;
        seen[v] = 1;
        if (grid.normals[v].dot(grid.normals[u]) < 0.0) {
          grid.normals[v] = -grid.normals[v];
          ++grid.sign_flips;
        }
        queue.push_back(v);
      }
    }
  }
}

ReferenceGrid sample_reference_grid(const PrincipalSurface& surface, int n, const std::string& structure,
                                    int id_offset) {
  if (n < 4) throw ComputeError("sample_reference_grid: need at least 4 anchors");
  const int m = std::max(64, static_cast<int>(std::ceil(std::sqrt(8.0 * n))));
  const std::size_t cells = static_cast<std::size_t>(m) * static_cast<std::size_t>(m);
  std::vector<ParamCoord> t(cells);
  PointCloud p(cells);
  std::vector<double> area(cells);
  parallel_for(cells, [&](std::size_t idx) {
    t[idx] = ParamCoord((static_cast<double>(idx % static_cast<std::size_t>(m)) + 0.5) / m,
                        (static_cast<double>(idx / static_cast<std::size_t>(m)) + 0.5) / m);
    Vec3 f;
    Mat32 J;
    Mat33 H;
    surface.derivatives(t[idx], f, J, H);
    p[idx] = f;
    area[idx] = J.col(0).cross(J.col(1)).norm();
  });
  const double amax = *std::max_element(area.begin(), area.end());
  std::vector<std::size_t> usable;
  Vec3 centroid = Vec3::Zero();
  double total = 0.0;
  for (std::size_t i = 0; i < cells; ++i) {
    if (!(area[i] > 1e-9 * amax)) continue;
    usable.push_back(i);
    centroid += area[i] * p[i];
    total += area[i];
  }
  if (usable.size() < static_cast<std::size_t>(n)) throw ComputeError("sample_reference_grid: surface is degenerate");
  centroid /= total;

  std::size_t seed = usable[0];
  double far = -1.0;
  for (std::size_t i : usable) {
    const double d = (p[i] - centroid).squaredNorm();
    if (d > far) {
      far = d;
      seed = i;
    }
  }
  std::vector<double> mind(cells, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> chosen{seed};
  while (chosen.size() < static_cast<std::size_t>(n)) {
    const Vec3& last = p[chosen.back()];
    std::size_t arg = usable[0];
    double best = -1.0;
    for (std::size_t i : usable) {
      mind[i] = std::min(mind[i], (p[i] - last).squaredNorm());
      if (mind[i] > best) {
        best = mind[i];
        arg = i;
      }
    }
    chosen.push_back(arg);
  }

  ReferenceGrid g;
  g.structure = structure;
  g.id_offset = id_offset;
  for (std::size_t i : chosen) {
    g.params.push_back(t[i]);
    g.positions.push_back(p[i]);
    g.normals.push_back(surface_normal(surface, t[i]));
  }
  orient_normals(g);
  return g;
}

CurvatureReport gaussian_curvature(const PrincipalSurface& surface, const std::vector<ParamCoord>& at, double h) {
  CurvatureReport rep;
  rep.points.resize(at.size());
  parallel_for(at.size(), [&](std::size_t i) {
    const ParamCoord c = at[i].cwiseMax(h).cwiseMin(1.0 - h);
    const ParamCoord eu(h, 0), ev(0, h);
    const Vec3 f0 = surface(c);
    const Vec3 fpu = surface(c + eu), fmu = surface(c - eu), fpv = surface(c + ev), fmv = surface(c - ev);
    const Vec3 fu = (fpu - fmu) / (2 * h), fv = (fpv - fmv) / (2 * h);
    const Vec3 fuu = (fpu - 2 * f0 + fmu) / (h * h), fvv = (fpv - 2 * f0 + fmv) / (h * h);
    const Vec3 fuv = (surface(c + eu + ev) - surface(c + eu - ev) - surface(c - eu + ev) + surface(c - eu - ev)) / (4 * h * h);
    FundamentalForms& r = rep.points[i];
    r.E = fu.dot(fu);
    r.F = fu.dot(fv);
    r.G = fv.dot(fv);
    const double det = r.E * r.G - r.F * r.F;
    const Vec3 nrm = fu.cross(fv);
    r.valid = det > 1e-14 * r.E * r.G && nrm.norm() > 0.0;
    if (!r.valid) return;
    const Vec3 n = nrm.normalized();
    r.L = fuu.dot(n);
    r.M = fuv.dot(n);
    r.N = fvv.dot(n);
    r.K = (r.L * r.N - r.M * r.M) / det;
  });
  return rep;
}

double default_kmax(const Vec3& spacing) {
  const double s = spacing.minCoeff();
  return 4.0 / (s * s);
}

CurvatureVerdict curvature_filter(const CurvatureReport& report, double kmax) {
  CurvatureVerdict v;
  v.kmax = kmax;
  for (std::size_t i = 0; i < report.points.size(); ++i)
    if (report.points[i].valid && std::abs(report.points[i].K) > kmax) v.offenders.push_back(i);
  v.accept = v.offenders.empty();
  return v;
}

AngleSummary angle_consistency(const PrincipalSurface& surface, const PointCloud& samples) {
  const std::vector<Projection> proj = project_all(surface, samples);
  std::vector<double> angle(samples.size(), -1.0);
  parallel_for(samples.size(), [&](std::size_t i) {
    const Vec3 v = samples[i] - proj[i].foot;
    const double len = v.norm();
    if (len < 1e-9) return;
    const double c = std::min(1.0, std::abs(v.dot(surface_normal(surface, proj[i].t))) / len);
    angle[i] = std::acos(c) * 180.0 / std::numbers::pi;
  });
  AngleSummary s;
  s.histogram.assign(9, 0);
  for (double a : angle) {
    if (a < 0.0) {
      ++s.excluded;
      continue;
    }
    s.angles_deg.push_back(a);
    s.histogram[static_cast<std::size_t>(std::min(8, static_cast<int>(a / 10.0)))]++;
  }
  if (!s.angles_deg.empty()) {
    std::vector<double> sorted = s.angles_deg;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t k = sorted.size();
    s.median = k % 2 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
    s.max = sorted.back();
    s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(k);
  }
  return s;
}

bool self_intersection_free(const PrincipalSurface& surface, double voxel_mm, int lattice) {
  const std::size_t n = static_cast<std::size_t>(lattice) * static_cast<std::size_t>(lattice);
  std::vector<ParamCoord> t(n);
  PointCloud p(n);
  for (std::size_t idx = 0; idx < n; ++idx) {
    t[idx] = ParamCoord((static_cast<double>(idx % static_cast<std::size_t>(lattice)) + 0.5) / lattice,
                        (static_cast<double>(idx / static_cast<std::size_t>(lattice)) + 0.5) / lattice);
    p[idx] = surface(t[idx]);
  }
  const double lim = 0.25 * voxel_mm;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if ((t[a] - t[b]).norm() > 0.2 && (p[a] - p[b]).norm() < lim) return false;
  return true;
}

namespace {

nlohmann::json matrix_json(const Matrix<double>& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Matrix<double> json_matrix(const nlohmann::json& j, Eigen::Index cols) {
  Matrix<double> m(static_cast<Eigen::Index>(j.size()), cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (row.size() != static_cast<std::size_t>(cols)) throw IoError("surface json: bad matrix row width");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

}  // namespace

void write_surface_json(const PrincipalSurface& surface, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "medrep-surface-1";
  j["lambda"] = surface.lambda();
  j["orientation"] = surface.orientation;
  j["converged"] = surface.converged;
  j["stop_reason"] = surface.stop_reason;
  j["sites"] = matrix_json(surface.tps().sites);
  j["weights"] = matrix_json(surface.tps().weights);
  j["affine"] = matrix_json(surface.tps().affine);
  nlohmann::json params = nlohmann::json::array();
  for (const ParamCoord& t : surface.params) params.push_back({t.x(), t.y()});
  j["params"] = params;
  nlohmann::json log = nlohmann::json::array();
  for (const IterationRecord& r : surface.log)
    log.push_back({{"iteration", r.iteration},
                   {"mean_displacement", r.mean_displacement},
                   {"mean_sq_residual", r.mean_sq_residual},
                   {"accepted", r.accepted}});
  j["iterations"] = log;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

PrincipalSurface read_surface_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.value("format", "") != "medrep-surface-1") throw IoError(path.string() + ": not a surface file");
    ThinPlateSpline<double> tps;
    tps.lambda = j.at("lambda").get<double>();
    tps.sites = json_matrix(j.at("sites"), 2);
    tps.weights = json_matrix(j.at("weights"), 3);
    tps.affine = json_matrix(j.at("affine"), 3);
    if (tps.weights.rows() != tps.sites.rows() || tps.affine.rows() != 3)
      throw IoError(path.string() + ": inconsistent TPS shapes");
    PrincipalSurface s(std::move(tps));
    s.orientation = j.value("orientation", 1) < 0 ? -1 : 1;
    s.converged = j.value("converged", false);
    s.stop_reason = j.value("stop_reason", "");
    for (const auto& t : j.at("params")) s.params.emplace_back(t.at(0).get<double>(), t.at(1).get<double>());
    for (const auto& r : j.at("iterations"))
      s.log.push_back({r.at("iteration").get<int>(), r.at("mean_displacement").get<double>(),
                       r.at("mean_sq_residual").get<double>(), r.at("accepted").get<bool>()});
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_grid_csv(const ReferenceGrid& grid, const std::filesystem::path& path) {
  csv::Writer w(path, {"anchor_id", "t1", "t2", "x", "y", "z", "nx", "ny", "nz"});
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec3& p = grid.positions[i];
    const Vec3& n = grid.normals[i];
    w << grid.anchor_id(i) << grid.params[i].x() << grid.params[i].y() << p.x() << p.y() << p.z() << n.x() << n.y()
      << n.z();
    w.end_row();
  }
}

ReferenceGrid read_grid_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::Table::read(path);
  ReferenceGrid g;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const long long id = t.integer(r, "anchor_id");
    if (r == 0) g.id_offset = static_cast<int>(id);
    if (id != g.id_offset + static_cast<long long>(r))
      throw IoError(path.string() + ": anchor ids must be contiguous (row " + std::to_string(r + 2) + ")");
    g.params.emplace_back(t.number(r, "t1"), t.number(r, "t2"));
    g.positions.emplace_back(t.number(r, "x"), t.number(r, "y"), t.number(r, "z"));
    g.normals.emplace_back(t.number(r, "nx"), t.number(r, "ny"), t.number(r, "nz"));
  }
  if (g.size() == 0) throw IoError(path.string() + ": empty reference grid");
  return g;
}

void write_surface_obj(const PrincipalSurface& surface, const std::filesystem::path& path, int lattice) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const int n = std::max(2, lattice);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const Vec3 p = surface(ParamCoord(i / (n - 1.0), j / (n - 1.0)));
      out << "v " << csv::fmt(p.x()) << ' ' << csv::fmt(p.y()) << ' ' << csv::fmt(p.z()) << '\n';
    }
  for (int j = 0; j + 1 < n; ++j)
    for (int i = 0; i + 1 < n; ++i) {
      const int a = 1 + i + n * j, b = a + 1, c = a + n, d = c + 1;
      out << "f " << a << ' ' << b << ' ' << d << '\n' << "f " << a << ' ' << d << ' ' << c << '\n';
    }
}

}  // namespace medrep
