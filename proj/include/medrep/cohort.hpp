#ifndef MEDREP_COHORT_HPP_
#define MEDREP_COHORT_HPP_

#include "medrep/features.hpp"
#include "medrep/inference.hpp"
#include "medrep/phantom.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace medrep {

// A linear predictor in raw covariates. Age enters centred at the cohort's
// age_mean. age_stage is a heterogeneity term absent from the fitted
// design, so the population-average stage slope equals `stage`.
struct LinearTruth {
  double intercept = 0.0, age = 0.0, sex = 0.0, diagnosis = 0.0, stage = 0.0, stage_sq = 0.0;
  double age_stage = 0.0;

  double eval(const SubjectRecord& r, double age_mean) const;
  LinearTruth operator+(const LinearTruth& o) const;
};

struct CohortSpec {
  int n_subjects = 200;
  std::uint64_t seed = 0;
  std::vector<int> subtypes{1};  // drawn uniformly
  int max_stage = 20;            // stages uniform on 1..max_stage
  double age_mean = 72.0, age_sd = 7.0;
  double p_male = 0.5;
  std::array<double, 3> diagnosis_probs{0.35, 0.40, 0.25};
  // Indexed by Model. Coverage is on the logit scale.
  std::array<LinearTruth, 4> base{LinearTruth{-2.0, 0.05, 0.0, 0.8, 0.15, 0.0, 0.0},
                                  LinearTruth{2.3, 0.005, 0.0, 0.1, 0.02, 0.0, 0.0},
                                  LinearTruth{2.0, 0.0, 0.0, 0.0, 0.03, 0.0, 0.0},
                                  LinearTruth{-1.5, 0.0, 0.0, 0.0, -0.02, 0.0, 0.0}};
  // Added to `base` at effect_anchors (global anchor ids).
  std::array<LinearTruth, 4> effect{};
  std::vector<int> effect_anchors;
  double suvr_sd = 0.1;
  double dist_sd = 0.2;
};

struct Cohort {
  SurfaceFeatureTable table;  // rows by subject, then anchor
  std::vector<SubjectRecord> records;
  std::vector<double> coverage_prob;  // per table row
};

// Deterministic in (spec, anchors).
Cohort generate_cohort(const CohortSpec& spec, const std::vector<int>& anchor_ids);
Cohort generate_cohort(const CohortSpec& spec, const ReferenceGrid& grid);

// Planted coefficients and the realised coverage rate, as JSON.
void write_truth_json(const CohortSpec& spec, const Cohort& cohort, const std::filesystem::path& path);

// Volumetric cohort: structure masks on one lattice plus per-subject SUVR
// volumes. Inside a structure, deposition covers the voxels whose position
// along the structure's long axis is below a subject-specific front; the
// front advances with stage (subtype 2 spreads from the opposite end).
// Covered SUVR rises with stage and carries a diagnosis-dependent gradient
// toward the boundary.
struct VolumeCohortSpec {
  CohortSpec cohort = default_cohort();
  std::vector<std::string> names{"left", "right"};
  std::vector<PhantomSpec> structures = default_structures();
  double background = 1.0;
  double uncovered = 1.3;
  double voxel_sd = 0.05;
  double front0 = 0.0, front_stage = 0.04, front_diagnosis = 0.05, front_sd = 0.3;
  double suvr0 = 2.3, suvr_stage = 0.02, suvr_sd = 0.08;
  // Stages cycle through 1..max_stage by subject index instead of being
  // drawn, so every stage is present for the polynomial calibration.
  bool balanced_stages = true;
  std::array<double, 3> boundary_gain{0.04, 0.0, -0.04};  // SUVR per mm toward the boundary, by diagnosis

  static CohortSpec default_cohort();
  static std::vector<PhantomSpec> default_structures();
};

struct VolumeCohort {
  std::vector<std::string> names;
  std::vector<BinaryMask> structures;  // shared geometry
  std::vector<SubjectVolume> subjects;
  std::vector<SubjectRecord> records;
};

VolumeCohort generate_volume_cohort(const VolumeCohortSpec& spec);
// masks/<name>.json, subjects/<id>.json (raw-json volumes) and covariates.csv.
void write_volume_cohort(const VolumeCohort& cohort, const std::filesystem::path& dir);

}  // namespace medrep

#endif  // MEDREP_COHORT_HPP_
