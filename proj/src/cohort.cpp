#include "medrep/cohort.hpp"

#include "medrep/parallel.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

namespace medrep {

double LinearTruth::eval(const SubjectRecord& r, double age_mean) const {
  const double a = r.age - age_mean;
  const double s = r.stage;
  return intercept + age * a + sex * (r.sex == Sex::kM ? 1.0 : 0.0) + diagnosis * r.diagnosis + stage * s +
         stage_sq * s * s + age_stage * a * s;
}

LinearTruth LinearTruth::operator+(const LinearTruth& o) const {
  return {intercept + o.intercept, age + o.age, sex + o.sex, diagnosis + o.diagnosis,
          stage + o.stage, stage_sq + o.stage_sq, age_stage + o.age_stage};
}

Cohort generate_cohort(const CohortSpec& spec, const std::vector<int>& anchor_ids) {
  if (spec.n_subjects < 1) throw ComputeError("generate_cohort: n_subjects must be positive");
  if (spec.subtypes.empty()) throw ComputeError("generate_cohort: no subtypes");
  if (spec.max_stage < 1 || spec.max_stage > 20) throw ComputeError("generate_cohort: max_stage must be in 1..20");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> age(spec.age_mean, spec.age_sd);
  std::bernoulli_distribution male(spec.p_male);
  std::discrete_distribution<int> dx(spec.diagnosis_probs.begin(), spec.diagnosis_probs.end());
  std::uniform_int_distribution<std::size_t> subtype(0, spec.subtypes.size() - 1);
  std::uniform_int_distribution<int> stage(1, spec.max_stage);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Cohort c;
  const int width = static_cast<int>(std::to_string(spec.n_subjects).size());
  for (int i = 0; i < spec.n_subjects; ++i) {
    SubjectRecord r;
    std::string id = std::to_string(i + 1);
    r.subject_id = "sub-" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;
    r.age = std::max(40.0, age(rng));
    r.sex = male(rng) ? Sex::kM : Sex::kF;
    r.diagnosis = dx(rng);
    r.subtype = spec.subtypes[subtype(rng)];
    r.stage = r.subtype == 0 ? 0 : stage(rng);
    validate_record(r);
    c.records.push_back(r);
  }

  const std::set<int> effect(spec.effect_anchors.begin(), spec.effect_anchors.end());
  for (const SubjectRecord& r : c.records) {
    for (int a : anchor_ids) {
      const bool planted = effect.count(a) != 0;
      auto truth = [&](Model m) {
        const int k = static_cast<int>(m);
        return (planted ? spec.base[k] + spec.effect[k] : spec.base[k]).eval(r, spec.age_mean);
      };
      FeatureRow row;
      row.subject_id = r.subject_id;
      row.anchor_id = a;
      const double p = logistic(truth(Model::kCoverage));
      row.covered = unit(rng) < p;
      const double e1 = gauss(rng), e2 = gauss(rng), e3 = gauss(rng);
      if (row.covered) {
        row.suvr_hat = truth(Model::kSuvr) + spec.suvr_sd * e1;
        row.dist_pos = truth(Model::kDistPos) + spec.dist_sd * e2;
        row.dist_neg = truth(Model::kDistNeg) + spec.dist_sd * e3;
      }
      c.table.rows.push_back(row);
      c.coverage_prob.push_back(p);
    }
  }
  return c;
}

Cohort generate_cohort(const CohortSpec& spec, const ReferenceGrid& grid) {
  std::vector<int> ids(grid.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = grid.id_offset + static_cast<int>(i);
  return generate_cohort(spec, ids);
}

namespace {
nlohmann::json truth_json(const LinearTruth& t) {
  return {{"intercept", t.intercept}, {"age_centred", t.age},   {"sex_male", t.sex}, {"diagnosis", t.diagnosis},
          {"stage", t.stage},         {"stage_sq", t.stage_sq}, {"age_x_stage", t.age_stage}};
}
}  // namespace

void write_truth_json(const CohortSpec& spec, const Cohort& cohort, const std::filesystem::path& path) {
  nlohmann::json j;
  j["seed"] = spec.seed;
  j["n_subjects"] = spec.n_subjects;
  j["subtypes"] = spec.subtypes;
  j["max_stage"] = spec.max_stage;
  j["age_mean"] = spec.age_mean;
  j["age_sd"] = spec.age_sd;
  j["p_male"] = spec.p_male;
  j["diagnosis_probs"] = spec.diagnosis_probs;
  j["suvr_sd"] = spec.suvr_sd;
  j["dist_sd"] = spec.dist_sd;
  j["effect_anchors"] = spec.effect_anchors;
  for (Model m : kAllModels) {
    j["base"][to_string(m)] = truth_json(spec.base[static_cast<int>(m)]);
    j["effect"][to_string(m)] = truth_json(spec.effect[static_cast<int>(m)]);
  }
  std::size_t covered = 0;
  for (const auto& r : cohort.table.rows) covered += r.covered ? 1 : 0;
  j["coverage_rate"] = cohort.table.rows.empty() ? 0.0 : static_cast<double>(covered) / cohort.table.rows.size();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

CohortSpec VolumeCohortSpec::default_cohort() {
  CohortSpec c;
  c.n_subjects = 300;
  c.subtypes = {1, 2};
  return c;
}

std::vector<PhantomSpec> VolumeCohortSpec::default_structures() {
  PhantomSpec a;
  PhantomSpec b;
  b.half_width = 7.0;
  b.arc_radius = 22.0;
  b.arc_angle_deg = 100.0;
  return {a, b};
}

namespace {

// Position along the first principal axis of the mask, scaled to [0, 1].
std::vector<double> long_axis_coordinate(const BinaryMask& mask, const std::vector<std::size_t>& voxels) {
  Vec3 mean = Vec3::Zero();
  for (std::size_t v : voxels) mean += mask.geom.world(v);
  mean /= static_cast<double>(voxels.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t v : voxels) {
    const Vec3 d = mask.geom.world(v) - mean;
    cov += d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  Vec3 axis = eig.eigenvectors().col(2);
  Eigen::Index big = 0;
  axis.cwiseAbs().maxCoeff(&big);
  if (axis(big) < 0) axis = -axis;
  std::vector<double> u(voxels.size());
  for (std::size_t i = 0; i < voxels.size(); ++i) u[i] = (mask.geom.world(voxels[i]) - mean).dot(axis);
  const auto [lo, hi] = std::minmax_element(u.begin(), u.end());
  const double a = *lo, span = *hi - *lo;
  for (double& x : u) x = (x - a) / span;
  return u;
}

}  // namespace

VolumeCohort generate_volume_cohort(const VolumeCohortSpec& spec) {
  if (spec.structures.empty() || spec.structures.size() != spec.names.size())
    throw ComputeError("volume cohort: one name per structure required");
  std::vector<Phantom> parts;
  Vec3i dims(0, 0, 0);
  std::vector<int> x_offset;
  for (const auto& ps : spec.structures) {
    parts.push_back(generate_phantom(ps));
    const Vec3i d = parts.back().mask.geom.dims;
    if (parts.back().mask.geom.spacing != parts.front().mask.geom.spacing)
      throw ComputeError("volume cohort: structures must share voxel spacing");
    x_offset.push_back(dims.x());
    dims = Vec3i(dims.x() + d.x(), std::max(dims.y(), d.y()), std::max(dims.z(), d.z()));
  }
  GridGeometry geom;
  geom.dims = dims;
  geom.spacing = parts.front().mask.geom.spacing;

  VolumeCohort out;
  out.names = spec.names;
  struct Region {
    std::vector<std::size_t> voxels;
    std::vector<double> u, depth;
  };
  std::vector<Region> regions;
  for (std::size_t s = 0; s < parts.size(); ++s) {
    BinaryMask m(geom, 0);
    const BinaryMask& src = parts[s].mask;
    for (std::size_t v = 0; v < src.size(); ++v) {
      if (!src.data[v]) continue;
      const Vec3i c = src.geom.coords(v);
      m(c.x() + x_offset[s], c.y(), c.z()) = 1;
    }
    Region r;
    const DistanceField depth = distance_transform(m);
    for (std::size_t v = 0; v < m.size(); ++v)
      if (m.data[v]) {
        r.voxels.push_back(v);
        r.depth.push_back(depth.data[v]);
      }
    r.u = long_axis_coordinate(m, r.voxels);
    regions.push_back(std::move(r));
    out.structures.push_back(std::move(m));
  }

  out.records = generate_cohort(spec.cohort, std::vector<int>{}).records;
  if (spec.balanced_stages)
    for (std::size_t i = 0; i < out.records.size(); ++i)
      if (out.records[i].subtype != 0) out.records[i].stage = 1 + static_cast<int>(i % spec.cohort.max_stage);
  out.subjects.resize(out.records.size());
  parallel_for(out.records.size(), [&](std::size_t i) {
    const SubjectRecord& rec = out.records[i];
    std::mt19937_64 rng(spec.cohort.seed ^ (0x9E3779B97F4A7C15ULL * (i + 1)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    SubjectVolume& sv = out.subjects[i];
    sv.subject_id = rec.subject_id;
    sv.suvr = VoxelGrid(geom, 0.0f);
    for (float& v : sv.suvr.data) v = static_cast<float>(spec.background + spec.voxel_sd * gauss(rng));
    const double gain = spec.boundary_gain[static_cast<std::size_t>(rec.diagnosis)];
    for (std::size_t s = 0; s < regions.size(); ++s) {
      const double front = spec.front0 + spec.front_stage * rec.stage + spec.front_diagnosis * rec.diagnosis +
                           spec.front_sd * gauss(rng);
      const double level = spec.suvr0 + spec.suvr_stage * rec.stage + spec.suvr_sd * gauss(rng);
      const double half = spec.structures[s].half_thickness;
      const Region& r = regions[s];
      for (std::size_t k = 0; k < r.voxels.size(); ++k) {
        const double u = rec.subtype == 2 ? 1.0 - r.u[k] : r.u[k];
        const double noise = spec.voxel_sd * gauss(rng);
        const double v = rec.subtype != 0 && u <= front ? level + gain * (half - r.depth[k]) + noise
                                                        : spec.uncovered + noise;
        sv.suvr.data[r.voxels[k]] = static_cast<float>(v);
      }
    }
  });
  return out;
}

void write_volume_cohort(const VolumeCohort& cohort, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "masks");
  std::filesystem::create_directories(dir / "subjects");
  for (std::size_t s = 0; s < cohort.structures.size(); ++s) {
    VoxelGrid g(cohort.structures[s].geom, 0.0f);
    for (std::size_t v = 0; v < g.size(); ++v) g.data[v] = cohort.structures[s].data[v] ? 1.0f : 0.0f;
    write_volume(g, dir / "masks" / (cohort.names[s] + ".json"));
  }
  parallel_for(cohort.subjects.size(), [&](std::size_t i) {
    write_volume(cohort.subjects[i].suvr, dir / "subjects" / (cohort.subjects[i].subject_id + ".json"));
  });
  write_records_csv(cohort.records, dir / "covariates.csv");
}

}  // namespace medrep
