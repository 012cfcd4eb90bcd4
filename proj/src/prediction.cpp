#include "medrep/prediction.hpp"

#include "medrep/csv.hpp"
#include "medrep/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace medrep {

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw ComputeError("roc: scores and labels differ in length");
  RocCurve roc;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw ComputeError("roc: non-finite score");
    (labels[i] ? roc.n_pos : roc.n_neg)++;
  }
  if (roc.n_pos == 0 || roc.n_neg == 0) throw ComputeError("roc: labels contain a single class");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  roc.thresholds.push_back(std::numeric_limits<double>::infinity());
  roc.fpr.push_back(0.0);
  roc.tpr.push_back(0.0);
  // Integer counts keep the area exact up to the final division.
  long long tp = 0, fp = 0, area2 = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    long long dtp = 0, dfp = 0;
    for (; k < order.size() && scores[order[k]] == s; ++k) (labels[order[k]] ? dtp : dfp)++;
    area2 += dfp * (2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    roc.thresholds.push_back(s);
    roc.fpr.push_back(static_cast<double>(fp) / roc.n_neg);
    roc.tpr.push_back(static_cast<double>(tp) / roc.n_pos);
  }
  roc.auc = static_cast<double>(area2) / (2.0 * roc.n_pos * static_cast<double>(roc.n_neg));
  return roc;
}

double youden_threshold(const RocCurve& roc) {
  if (roc.thresholds.size() < 2) throw ComputeError("youden: empty ROC curve");
  std::size_t best = 1;
  double best_j = roc.tpr[1] - roc.fpr[1];
  for (std::size_t k = 2; k < roc.thresholds.size(); ++k) {
    const double j = roc.tpr[k] - roc.fpr[k];
    if (j > best_j) {
      best_j = j;
      best = k;
    }
  }
  return roc.thresholds[best];
}

std::optional<double> coverage_probability(const AnchorAnalysis& anchor, const Eigen::RowVectorXd& x) {
  const FitResult& s1 = anchor.fits[static_cast<int>(Model::kCoverage)];
  if (s1.estimable && s1.converged) return logistic(x.dot(s1.beta()));
  if (!s1.estimable && anchor.fits[static_cast<int>(Model::kSuvr)].estimable) return 1.0;
  return std::nullopt;
}

CoverageScores coverage_scores(const AnalysisResult& fits, const SurfaceFeatureTable& table,
                               const std::vector<SubjectRecord>& records, std::optional<int> subtype) {
  const auto& levels = fits.design.subtypes();
  std::map<std::string, Eigen::RowVectorXd> rows;
  for (const auto& r : records) {
    if (subtype ? r.subtype != *subtype : std::find(levels.begin(), levels.end(), r.subtype) == levels.end())
      continue;
    rows.emplace(r.subject_id, fits.design.row(r));
  }
  std::map<int, const AnchorAnalysis*> by_id;
  for (const auto& a : fits.anchors) by_id[a.anchor_id] = &a;

  CoverageScores out;
  for (const auto& row : table.rows) {
    const auto x = rows.find(row.subject_id);
    const auto a = by_id.find(row.anchor_id);
    if (x == rows.end() || a == by_id.end()) continue;
    const auto p = coverage_probability(*a->second, x->second);
    if (!p) continue;
    out.scores.push_back(*p);
    out.labels.push_back(row.covered);
  }
  return out;
}

SubjectRecord paper_cohort_preset(int subtype) {
  SubjectRecord r;
  r.subject_id = "paper-cohort";
  r.age = 75.5;
  r.sex = Sex::kM;
  r.diagnosis = 1;
  r.subtype = subtype;
  r.stage = 1;
  return r;
}

int PredictedShape::included_count() const {
  return static_cast<int>(std::count_if(anchors.begin(), anchors.end(), [](const auto& a) { return a.included; }));
}

namespace {

std::optional<double> predict_value(const FitResult& f, const Eigen::RowVectorXd& x) {
  if (!f.estimable) return std::nullopt;
  return x.dot(f.beta());
}

void append(BoundaryReconstruction& into, const BoundaryReconstruction& part) {
  const int base = static_cast<int>(into.points.size());
  into.points.insert(into.points.end(), part.points.begin(), part.points.end());
  into.anchor_ids.insert(into.anchor_ids.end(), part.anchor_ids.begin(), part.anchor_ids.end());
  into.side.insert(into.side.end(), part.side.begin(), part.side.end());
  for (const auto& t : part.triangles) into.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
}

}  // namespace

PredictedShape predict_shape(const AnalysisResult& fits, const SubjectRecord& covariates, int stage,
                             double threshold, const std::vector<StructureModel>& structures) {
  if (fits.anchors.empty()) throw ComputeError("predict: no fitted anchors");
  const auto& poly = fits.design.stage_poly();
  if (poly && (stage < poly->lo() || stage > poly->hi()))
    throw ComputeError("predict: stage " + std::to_string(stage) + " outside the calibrated range [" +
                       csv::fmt(poly->lo()) + ", " + csv::fmt(poly->hi()) + "]");
  PredictedShape shape;
  shape.stage = stage;
  shape.threshold = threshold;
  shape.covariates = covariates;
  shape.covariates.stage = stage;
  const Eigen::RowVectorXd x = fits.design.row(shape.covariates);

  shape.anchors.resize(fits.anchors.size());
  parallel_for(fits.anchors.size(), [&](std::size_t i) {
    const AnchorAnalysis& a = fits.anchors[i];
    AnchorPrediction& p = shape.anchors[i];
    p.anchor_id = a.anchor_id;
    p.p_cover = coverage_probability(a, x);
    if (!p.p_cover || *p.p_cover < threshold) return;
    p.included = true;
    p.suvr = predict_value(a.fits[static_cast<int>(Model::kSuvr)], x);
    p.dist_pos = predict_value(a.fits[static_cast<int>(Model::kDistPos)], x);
    p.dist_neg = predict_value(a.fits[static_cast<int>(Model::kDistNeg)], x);
    if (p.dist_pos) p.dist_pos = std::max(0.0, *p.dist_pos);
    if (p.dist_neg) p.dist_neg = std::min(0.0, *p.dist_neg);
  });

  if (shape.included_count() == 0)
    shape.warnings.push_back("stage " + std::to_string(stage) + ": no anchor reaches coverage probability " +
                             csv::fmt(threshold) + "; shape is empty");

  std::map<int, const AnchorPrediction*> by_id;
  for (const auto& p : shape.anchors) by_id[p.anchor_id] = &p;
  for (const auto& s : structures) {
    std::vector<std::optional<double>> pos(s.grid.size()), neg(s.grid.size());
    for (std::size_t j = 0; j < s.grid.size(); ++j) {
      const auto it = by_id.find(s.grid.anchor_id(j));
      if (it == by_id.end() || !it->second->included) continue;
      pos[j] = it->second->dist_pos;
      neg[j] = it->second->dist_neg;
    }
    append(shape.geometry, reconstruct_boundary(s.surface, s.grid, pos, neg));
  }
  return shape;
}

void write_roc_csv(const RocCurve& roc, const std::filesystem::path& path) {
  csv::Writer w(path, {"threshold", "fpr", "tpr"});
  for (std::size_t k = 0; k < roc.thresholds.size(); ++k) {
    w << (std::isinf(roc.thresholds[k]) ? std::string("inf") : csv::fmt(roc.thresholds[k])) << roc.fpr[k]
      << roc.tpr[k];
    w.end_row();
  }
}

void write_prediction_csv(const PredictedShape& shape, const std::filesystem::path& path) {
  csv::Writer w(path, {"anchor_id", "p_cover", "included", "suvr", "dist_pos", "dist_neg"});
  for (const auto& a : shape.anchors) {
    w << a.anchor_id << a.p_cover << (a.included ? 1 : 0) << a.suvr << a.dist_pos << a.dist_neg;
    w.end_row();
  }
}

}  // namespace medrep
