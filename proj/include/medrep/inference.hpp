#ifndef MEDREP_INFERENCE_HPP_
#define MEDREP_INFERENCE_HPP_

#include "medrep/features.hpp"
#include "medrep/types.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace medrep {

enum class Sex { kF, kM };

// Diagnosis is ordinal: CN = 0, MCI = 1, AD = 2.
struct SubjectRecord {
  std::string subject_id;
  double age = 0.0;
  Sex sex = Sex::kF;
  int diagnosis = 0;
  int subtype = 0;  // 0..4
  int stage = 0;    // 1..20, and 0 exactly when subtype is 0
};

// Throws IoError describing the first violated range.
void validate_record(const SubjectRecord& r);
// Accepts CN/MCI/AD (any case) or 0/1/2.
int parse_diagnosis(const std::string& s);
Sex parse_sex(const std::string& s);

// Columns subject_id, age, sex, diagnosis, subtype, stage.
std::vector<SubjectRecord> read_records_csv(const std::filesystem::path& path);
void write_records_csv(const std::vector<SubjectRecord>& records, const std::filesystem::path& path);

// Degree-2 orthonormal polynomial contrasts calibrated on a sample
// (three-term recurrence, so new values evaluate on the same basis).
class OrthoPoly {
 public:
  // Throws ComputeError with fewer than 3 distinct values.
  static OrthoPoly fit(const std::vector<double>& x);
  static OrthoPoly from_coefficients(double a0, double a1, double b1, double n1, double n2, double lo, double hi);

  double lin(double x) const { return (x - a0_) / n1_; }
  double quad(double x) const { return ((x - a1_) * (x - a0_) - b1_) / n2_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }

  double a0() const { return a0_; }
  double a1() const { return a1_; }
  double b1() const { return b1_; }
  double n1() const { return n1_; }
  double n2() const { return n2_; }

 private:
  double a0_ = 0, a1_ = 0, b1_ = 0, n1_ = 1, n2_ = 1, lo_ = 0, hi_ = 0;
};

// (stage_lin, stage_quad) columns for `stages`.
std::pair<std::vector<double>, std::vector<double>> ortho_poly(const std::vector<int>& stages);

inline const std::vector<std::string>& default_covariates() {
  static const std::vector<std::string> c{"age", "sex", "diagnosis", "stage"};
  return c;
}

// Column layout: intercept, the chosen covariates (stage expands to
// stage_lin and stage_quad), then for every subtype after the first an
// indicator subtype_k and interactions "<covariate>:subtype_k".
class DesignBuilder {
 public:
  // Throws IoError for unknown covariate names, ComputeError when the stage
  // polynomial cannot be calibrated.
  static DesignBuilder calibrate(const std::vector<SubjectRecord>& records,
                                 const std::vector<std::string>& covariates = default_covariates());
  static DesignBuilder from_parts(std::vector<std::string> covariates, std::vector<int> subtypes,
                                  std::optional<OrthoPoly> poly);

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::string>& covariates() const { return covariates_; }
  const std::vector<int>& subtypes() const { return subtypes_; }
  const std::optional<OrthoPoly>& stage_poly() const { return poly_; }
  bool has_interactions() const { return subtypes_.size() >= 2; }

  // Throws ComputeError for a subtype outside the calibrated levels.
  Eigen::RowVectorXd row(const SubjectRecord& r) const;
  Matrix<double> matrix(const std::vector<SubjectRecord>& records) const;

 private:
  std::vector<std::string> covariates_;
  std::vector<int> subtypes_;
  std::optional<OrthoPoly> poly_;
  std::vector<std::string> columns_;
  void build_columns();
};

bool full_column_rank(const Matrix<double>& X);

enum class Model { kCoverage = 0, kSuvr = 1, kDistPos = 2, kDistNeg = 3 };
inline constexpr std::array<Model, 4> kAllModels{Model::kCoverage, Model::kSuvr, Model::kDistPos, Model::kDistNeg};
std::string to_string(Model m);

struct Coefficient {
  std::string term;
  double estimate = 0.0, se = 0.0, stat = 0.0, p = 1.0;
  std::optional<double> p_bh;
};

struct FitResult {
  int anchor_id = -1;
  Model model = Model::kCoverage;
  std::vector<Coefficient> coefs;
  int n_used = 0;
  bool converged = false;
  // False when the fit could not be produced; coefficients then carry
  // names only.
  bool estimable = false;
  std::string note;

  Eigen::VectorXd beta() const;
  const Coefficient* find(const std::string& term) const;
};

// IRLS. Wald z statistics. Throws ComputeError for single-class y, size
// mismatch or a rank-deficient X. Separation (|beta| > 1e3 or any fitted
// |eta| > 30), a singular information matrix and exhausting max_iter return
// converged = false.
FitResult fit_logistic(const Matrix<double>& X, const std::vector<bool>& y, const std::vector<std::string>& names,
                       int max_iter = 50, double tol = 1e-8);

double logistic(double eta);

struct IpwWeight {
  double p_hat = 1.0;
  double w = 1.0;
  bool clipped = false;
};
IpwWeight ipw_weight(double p_hat, double p_min = 0.01);

struct IpwWeights {
  std::vector<double> p_hat, w;
  std::vector<bool> clipped;
  int n_clipped = 0;
};
// Throws ComputeError when stage1 did not converge.
IpwWeights ipw_weights(const FitResult& stage1, const Matrix<double>& X, double p_min = 0.01);

// Weighted least squares with HC0 standard errors and t statistics on n - p
// degrees of freedom. Throws ComputeError for n < p + 2, rank deficiency or
// non-positive weights.
FitResult fit_wls(const Matrix<double>& X, const std::vector<double>& y, const std::vector<double>& w,
                  const std::vector<std::string>& names);

struct AnalysisOptions {
  std::vector<std::string> covariates = default_covariates();
  std::vector<int> subtypes;  // empty: every subject
  double p_min = 0.01;
  int max_iter = 50;
  double tol = 1e-8;
};

struct AnchorAnalysis {
  int anchor_id = -1;
  std::array<FitResult, 4> fits;  // indexed by Model
  int n_clipped = 0;
};

struct AnalysisResult {
  DesignBuilder design;
  std::vector<AnchorAnalysis> anchors;  // ascending anchor id

  int estimable_count(Model m) const;
};

// Stage 1 logistic on coverage, stage 2 IPW-WLS on suvr_hat, dist_pos and
// dist_neg per anchor; BH per (model, term) across estimable anchors of all
// structures. An anchor where every subject is covered has no stage-1 fit;
// its stage-2 fits use unit weights. A stage-1 fit that does not converge
// excludes the anchor from stage 2.
AnalysisResult pointwise_analysis(const SurfaceFeatureTable& table, const std::vector<SubjectRecord>& records,
                                  const AnalysisOptions& opts = {});

// anchor_id, term, estimate, se, stat, p, p_bh, n_used, converged. Non-estimable
// anchors have empty numeric fields.
void write_fit_csv(const AnalysisResult& result, Model model, const std::filesystem::path& path);
std::vector<FitResult> read_fit_csv(const std::filesystem::path& path, Model model);
// anchor_id, neglog10_p_bh for one term; anchors without a value are skipped.
void write_significance_csv(const AnalysisResult& result, Model model, const std::string& term,
                            const std::filesystem::path& path);

void write_design_json(const DesignBuilder& design, const std::filesystem::path& path);
DesignBuilder read_design_json(const std::filesystem::path& path);

// design.json, fits_<model>.csv and maps/<model>__<term>.csv (intercept
// excluded) under `dir`. read_analysis restores design and fits; notes are
// not stored.
void write_analysis(const AnalysisResult& result, const std::filesystem::path& dir);
AnalysisResult read_analysis(const std::filesystem::path& dir);

}  // namespace medrep

#endif  // MEDREP_INFERENCE_HPP_
