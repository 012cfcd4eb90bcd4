#ifndef MEDREP_PREDICTION_HPP_
#define MEDREP_PREDICTION_HPP_

#include "medrep/features.hpp"
#include "medrep/inference.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace medrep {

// Empirical ROC, one point per distinct score. A score >= threshold is called
// positive. The first point is (0, 0) at threshold +inf.
struct RocCurve {
  std::vector<double> thresholds;  // strictly decreasing
  std::vector<double> fpr, tpr;
  double auc = 0.0;
  int n_pos = 0, n_neg = 0;
};

// Trapezoid AUC. Throws ComputeError for single-class labels, size mismatch
// or non-finite scores.
RocCurve roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels);

// Maximises tpr - fpr over the finite thresholds; ties go to the larger one.
double youden_threshold(const RocCurve& roc);

// Stage-1 probability for one design row. An anchor without a stage-1 fit
// but with a SUVR fit was covered in every subject and gets 1. Empty when the
// anchor has no usable coverage model.
std::optional<double> coverage_probability(const AnchorAnalysis& anchor, const Eigen::RowVectorXd& x);

struct CoverageScores {
  std::vector<double> scores;
  std::vector<bool> labels;
};

// p-hat and observed coverage for every table row whose subject is in
// `subtype` (all modelled subjects when empty) and whose anchor has a
// coverage model.
CoverageScores coverage_scores(const AnalysisResult& fits, const SurfaceFeatureTable& table,
                               const std::vector<SubjectRecord>& records, std::optional<int> subtype = std::nullopt);

// Age 75.5, male, MCI.
SubjectRecord paper_cohort_preset(int subtype = 1);

struct AnchorPrediction {
  int anchor_id = -1;
  std::optional<double> p_cover;
  bool included = false;
  std::optional<double> suvr, dist_pos, dist_neg;  // set only when included
};

struct PredictedShape {
  int stage = 0;
  SubjectRecord covariates;
  double threshold = 0.5;
  std::vector<AnchorPrediction> anchors;
  BoundaryReconstruction geometry;
  std::vector<std::string> warnings;

  int included_count() const;
};

// Covariates are held fixed and `stage` replaces covariates.stage. Predicted
// thicknesses are clamped to their side (dist_pos >= 0, dist_neg <= 0).
// Geometry is built from `structures` whose grids own the anchor ids; pass
// an empty list to skip it. Throws ComputeError for a stage outside the
// calibrated polynomial range or a subtype unknown to the design.
PredictedShape predict_shape(const AnalysisResult& fits, const SubjectRecord& covariates, int stage,
                             double threshold, const std::vector<StructureModel>& structures = {});

void write_roc_csv(const RocCurve& roc, const std::filesystem::path& path);
// anchor_id, p_cover, included, suvr, dist_pos, dist_neg.
void write_prediction_csv(const PredictedShape& shape, const std::filesystem::path& path);

}  // namespace medrep

#endif  // MEDREP_PREDICTION_HPP_
