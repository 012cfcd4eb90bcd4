#include "medrep/inference.hpp"

#include "medrep/csv.hpp"
#include "medrep/parallel.hpp"
#include "medrep/stats.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <unordered_map>

namespace medrep {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

FitResult empty_fit(const std::vector<std::string>& names, const std::string& note) {
  FitResult f;
  for (const auto& n : names) f.coefs.push_back({n, kNaN, kNaN, kNaN, kNaN, std::nullopt});
  f.note = note;
  return f;
}

// Two-sided p from a statistic; se == 0 means an exact fit.
void finish_coef(Coefficient& c, bool t_dist, double df) {
  if (c.se == 0.0) {
    c.stat = c.estimate == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), c.estimate);
    c.p = c.estimate == 0.0 ? 1.0 : 0.0;
    return;
  }
  c.stat = c.estimate / c.se;
  const double a = std::abs(c.stat);
  c.p = std::min(1.0, 2.0 * (t_dist ? student_t_sf(a, df) : normal_sf(a)));
}

}  // namespace

void validate_record(const SubjectRecord& r) {
  const std::string who = "subject '" + r.subject_id + "': ";
  if (r.subject_id.empty()) throw IoError("subject record without subject_id");
  if (!std::isfinite(r.age) || r.age <= 0.0) throw IoError(who + "age must be positive");
  if (r.diagnosis < 0 || r.diagnosis > 2) throw IoError(who + "diagnosis must be 0 (CN), 1 (MCI) or 2 (AD)");
  if (r.subtype < 0 || r.subtype > 4) throw IoError(who + "subtype must be in 0..4");
  if (r.subtype == 0 && r.stage != 0) throw IoError(who + "subtype 0 requires stage 0");
  if (r.subtype != 0 && (r.stage < 1 || r.stage > 20)) throw IoError(who + "stage must be in 1..20");
}

int parse_diagnosis(const std::string& s) {
  const std::string v = lower(s);
  if (v == "cn" || v == "0") return 0;
  if (v == "mci" || v == "1") return 1;
  if (v == "ad" || v == "2") return 2;
  throw IoError("unknown diagnosis '" + s + "'");
}

Sex parse_sex(const std::string& s) {
  const std::string v = lower(s);
  if (v == "m" || v == "male" || v == "1") return Sex::kM;
  if (v == "f" || v == "female" || v == "0") return Sex::kF;
  throw IoError("unknown sex '" + s + "'");
}

std::vector<SubjectRecord> read_records_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::Table::read(path);
  std::vector<SubjectRecord> out(t.rows());
  std::set<std::string> seen;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    SubjectRecord& r = out[i];
    r.subject_id = t.at(i, "subject_id");
    r.age = t.number(i, "age");
    r.sex = parse_sex(t.at(i, "sex"));
    r.diagnosis = parse_diagnosis(t.at(i, "diagnosis"));
    r.subtype = static_cast<int>(t.integer(i, "subtype"));
    r.stage = static_cast<int>(t.integer(i, "stage"));
    validate_record(r);
    if (!seen.insert(r.subject_id).second) throw IoError(path.string() + ": duplicate subject " + r.subject_id);
  }
  return out;
}

void write_records_csv(const std::vector<SubjectRecord>& records, const std::filesystem::path& path) {
  static const char* kDx[] = {"CN", "MCI", "AD"};
  csv::Writer w(path, {"subject_id", "age", "sex", "diagnosis", "subtype", "stage"});
  for (const auto& r : records) {
    validate_record(r);
    w << r.subject_id << r.age << (r.sex == Sex::kM ? "M" : "F") << kDx[r.diagnosis] << r.subtype << r.stage;
    w.end_row();
  }
}

OrthoPoly OrthoPoly::fit(const std::vector<double>& x) {
  if (std::set<double>(x.begin(), x.end()).size() < 3)
    throw ComputeError("ortho_poly: need at least 3 distinct values");
  const double n = static_cast<double>(x.size());
  OrthoPoly p;
  double s = 0;
  for (double v : x) s += v;
  p.a0_ = s / n;
  double s11 = 0, sx11 = 0;
  for (double v : x) {
    const double p1 = v - p.a0_;
    s11 += p1 * p1;
    sx11 += v * p1 * p1;
  }
  p.a1_ = sx11 / s11;
  p.b1_ = s11 / n;
  double s22 = 0;
  for (double v : x) {
    const double p2 = (v - p.a1_) * (v - p.a0_) - p.b1_;
    s22 += p2 * p2;
  }
  p.n1_ = std::sqrt(s11);
  p.n2_ = std::sqrt(s22);
  p.lo_ = *std::min_element(x.begin(), x.end());
  p.hi_ = *std::max_element(x.begin(), x.end());
  return p;
}

OrthoPoly OrthoPoly::from_coefficients(double a0, double a1, double b1, double n1, double n2, double lo, double hi) {
  if (!(n1 > 0 && n2 > 0) || !(lo <= hi)) throw IoError("ortho_poly: invalid coefficients");
  OrthoPoly p;
  p.a0_ = a0;
  p.a1_ = a1;
  p.b1_ = b1;
  p.n1_ = n1;
  p.n2_ = n2;
  p.lo_ = lo;
  p.hi_ = hi;
  return p;
}

std::pair<std::vector<double>, std::vector<double>> ortho_poly(const std::vector<int>& stages) {
  const std::vector<double> x(stages.begin(), stages.end());
  const OrthoPoly p = OrthoPoly::fit(x);
  std::pair<std::vector<double>, std::vector<double>> out;
  for (double v : x) {
    out.first.push_back(p.lin(v));
    out.second.push_back(p.quad(v));
  }
  return out;
}

DesignBuilder DesignBuilder::calibrate(const std::vector<SubjectRecord>& records,
                                       const std::vector<std::string>& covariates) {
  std::set<int> levels;
  std::vector<double> stages;
  for (const auto& r : records) {
    levels.insert(r.subtype);
    stages.push_back(r.stage);
  }
  std::optional<OrthoPoly> poly;
  if (std::find(covariates.begin(), covariates.end(), "stage") != covariates.end()) poly = OrthoPoly::fit(stages);
  return from_parts(covariates, std::vector<int>(levels.begin(), levels.end()), poly);
}

DesignBuilder DesignBuilder::from_parts(std::vector<std::string> covariates, std::vector<int> subtypes,
                                        std::optional<OrthoPoly> poly) {
  static const std::set<std::string> kKnown{"age", "sex", "diagnosis", "stage"};
  std::set<std::string> seen;
  for (const auto& c : covariates) {
    if (!kKnown.count(c)) throw IoError("unknown covariate '" + c + "' (expected age, sex, diagnosis, stage)");
    if (!seen.insert(c).second) throw IoError("covariate '" + c + "' listed twice");
  }
  const bool wants_stage = seen.count("stage") != 0;
  if (wants_stage && !poly) throw IoError("design: stage covariate without a calibrated polynomial");
  if (!wants_stage) poly.reset();
  std::sort(subtypes.begin(), subtypes.end());
  subtypes.erase(std::unique(subtypes.begin(), subtypes.end()), subtypes.end());
  DesignBuilder d;
  d.covariates_ = std::move(covariates);
  d.subtypes_ = std::move(subtypes);
  d.poly_ = poly;
  d.build_columns();
  return d;
}

void DesignBuilder::build_columns() {
  std::vector<std::string> base;
  for (const auto& c : covariates_) {
    if (c == "stage") {
      base.push_back("stage_lin");
      base.push_back("stage_quad");
    } else {
      base.push_back(c);
    }
  }
  columns_ = {"intercept"};
  columns_.insert(columns_.end(), base.begin(), base.end());
  if (!has_interactions()) return;
  for (std::size_t k = 1; k < subtypes_.size(); ++k) {
    const std::string tag = "subtype_" + std::to_string(subtypes_[k]);
    columns_.push_back(tag);
    for (const auto& b : base) columns_.push_back(b + ":" + tag);
  }
}

Eigen::RowVectorXd DesignBuilder::row(const SubjectRecord& r) const {
  std::vector<double> base;
  for (const auto& c : covariates_) {
    if (c == "age") base.push_back(r.age);
    else if (c == "sex") base.push_back(r.sex == Sex::kM ? 1.0 : 0.0);
    else if (c == "diagnosis") base.push_back(r.diagnosis);
    else {
      base.push_back(poly_->lin(r.stage));
      base.push_back(poly_->quad(r.stage));
    }
  }
  const auto level = std::find(subtypes_.begin(), subtypes_.end(), r.subtype);
  if (level == subtypes_.end())
    throw ComputeError("design: subtype " + std::to_string(r.subtype) + " was not in the calibration sample");
  Eigen::RowVectorXd x(static_cast<Eigen::Index>(columns_.size()));
  Eigen::Index j = 0;
  x(j++) = 1.0;
  for (double b : base) x(j++) = b;
  if (has_interactions()) {
    for (std::size_t k = 1; k < subtypes_.size(); ++k) {
      const double ind = subtypes_[k] == r.subtype ? 1.0 : 0.0;
      x(j++) = ind;
      for (double b : base) x(j++) = ind * b;
    }
  }
  return x;
}

Matrix<double> DesignBuilder::matrix(const std::vector<SubjectRecord>& records) const {
  Matrix<double> X(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(columns_.size()));
  for (std::size_t i = 0; i < records.size(); ++i) X.row(static_cast<Eigen::Index>(i)) = row(records[i]);
  return X;
}

bool full_column_rank(const Matrix<double>& X) {
  if (X.rows() < X.cols()) return false;
  Eigen::ColPivHouseholderQR<Matrix<double>> qr(X);
  qr.setThreshold(1e-10);
  return qr.rank() == X.cols();
}

std::string to_string(Model m) {
  switch (m) {
    case Model::kCoverage: return "coverage";
    case Model::kSuvr: return "suvr";
    case Model::kDistPos: return "dist_pos";
    case Model::kDistNeg: return "dist_neg";
  }
  return "?";
}

Eigen::VectorXd FitResult::beta() const {
  Eigen::VectorXd b(static_cast<Eigen::Index>(coefs.size()));
  for (std::size_t i = 0; i < coefs.size(); ++i) b(static_cast<Eigen::Index>(i)) = coefs[i].estimate;
  return b;
}

const Coefficient* FitResult::find(const std::string& term) const {
  for (const auto& c : coefs)
    if (c.term == term) return &c;
  return nullptr;
}

double logistic(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

FitResult fit_logistic(const Matrix<double>& X, const std::vector<bool>& y, const std::vector<std::string>& names,
                       int max_iter, double tol) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (static_cast<std::size_t>(n) != y.size() || static_cast<std::size_t>(p) != names.size())
    throw ComputeError("fit_logistic: size mismatch");
  const auto pos = std::count(y.begin(), y.end(), true);
  if (pos == 0 || pos == n) throw ComputeError("fit_logistic: outcome has a single class");
  if (!full_column_rank(X)) throw ComputeError("fit_logistic: design is rank deficient");

  Eigen::VectorXd yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv(i) = y[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  FitResult f;
  f.n_used = static_cast<int>(n);
  bool separated = false;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu(i) = logistic(eta(i));
      w(i) = mu(i) * (1.0 - mu(i));
    }
    const Matrix<double> info = X.transpose() * w.asDiagonal() * X;
    const Eigen::VectorXd delta = info.ldlt().solve(X.transpose() * (yv - mu));
    beta += delta;
    if (!beta.allFinite() || beta.norm() > 1e3) {
      separated = true;
      break;
    }
    if (delta.cwiseAbs().maxCoeff() < tol) {
      f.converged = true;
      break;
    }
  }
  // Newton steps on separated data grow |beta| only linearly, so the norm
  // bound alone rarely fires within max_iter. Quasi-complete separation can
  // also stall with tiny steps once the weights underflow, which looks like
  // convergence. Saturated fitted probabilities catch both.
  if (!separated && beta.allFinite()) {
    const Eigen::VectorXd eta = X * beta;
    for (Eigen::Index i = 0; i < n && !separated; ++i) separated = std::abs(eta(i)) > 30.0;
  }
  if (separated) f.converged = false;
  f.estimable = f.converged;
  if (separated) f.note = "separation";
  else if (!f.converged) f.note = "max_iter";

  Matrix<double> cov = Matrix<double>::Constant(p, p, kNaN);
  if (beta.allFinite()) {
    Eigen::VectorXd w(n);
    const Eigen::VectorXd eta = X * beta;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = logistic(eta(i));
      w(i) = m * (1.0 - m);
    }
    const Matrix<double> info = X.transpose() * w.asDiagonal() * X;
    cov = info.ldlt().solve(Matrix<double>::Identity(p, p));
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    if (f.estimable && !(cov(j, j) > 0.0 && std::isfinite(cov(j, j)))) {
      f.estimable = false;
      f.converged = false;
      f.note = "singular information";
    }
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    Coefficient c;
    c.term = names[static_cast<std::size_t>(j)];
    c.estimate = beta(j);
    c.se = std::sqrt(cov(j, j));
    finish_coef(c, false, 0.0);
    f.coefs.push_back(c);
  }
  return f;
}

IpwWeight ipw_weight(double p_hat, double p_min) {
  IpwWeight r;
  r.p_hat = p_hat;
  r.clipped = p_hat < p_min;
  r.w = 1.0 / std::max(p_hat, p_min);
  return r;
}

IpwWeights ipw_weights(const FitResult& stage1, const Matrix<double>& X, double p_min) {
  if (!stage1.converged || !stage1.estimable) throw ComputeError("ipw_weights: stage-1 model did not converge");
  if (X.cols() != static_cast<Eigen::Index>(stage1.coefs.size())) throw ComputeError("ipw_weights: size mismatch");
  const Eigen::VectorXd eta = X * stage1.beta();
  IpwWeights out;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const IpwWeight w = ipw_weight(logistic(eta(i)), p_min);
    out.p_hat.push_back(w.p_hat);
    out.w.push_back(w.w);
    out.clipped.push_back(w.clipped);
    out.n_clipped += w.clipped ? 1 : 0;
  }
  return out;
}

FitResult fit_wls(const Matrix<double>& X, const std::vector<double>& y, const std::vector<double>& w,
                  const std::vector<std::string>& names) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (static_cast<std::size_t>(n) != y.size() || y.size() != w.size() || static_cast<std::size_t>(p) != names.size())
    throw ComputeError("fit_wls: size mismatch");
  if (n < p + 2) throw ComputeError("fit_wls: need at least p + 2 rows");
  for (double v : w)
    if (!(v > 0.0) || !std::isfinite(v)) throw ComputeError("fit_wls: weights must be positive and finite");

  Eigen::VectorXd sw(n), yv(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sw(i) = std::sqrt(w[static_cast<std::size_t>(i)]);
    yv(i) = y[static_cast<std::size_t>(i)];
  }
  const Matrix<double> Xw = sw.asDiagonal() * X;
  Eigen::ColPivHouseholderQR<Matrix<double>> qr(Xw);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) throw ComputeError("fit_wls: design is rank deficient");
  const Eigen::VectorXd beta = qr.solve(sw.cwiseProduct(yv));

  // Sandwich: bread (X'WX)^-1, meat sum w_i^2 e_i^2 x_i x_i'.
  const Matrix<double> bread = (Xw.transpose() * Xw).ldlt().solve(Matrix<double>::Identity(p, p));
  const Eigen::VectorXd e = yv - X * beta;
  Eigen::VectorXd s(n);
  for (Eigen::Index i = 0; i < n; ++i) s(i) = w[static_cast<std::size_t>(i)] * e(i);
  const Matrix<double> U = s.asDiagonal() * X;
  const Matrix<double> cov = bread * (U.transpose() * U) * bread;

  FitResult f;
  f.n_used = static_cast<int>(n);
  f.converged = true;
  f.estimable = true;
  const double df = static_cast<double>(n - p);
  for (Eigen::Index j = 0; j < p; ++j) {
    Coefficient c;
    c.term = names[static_cast<std::size_t>(j)];
    c.estimate = beta(j);
    c.se = std::sqrt(std::max(0.0, cov(j, j)));
    finish_coef(c, true, df);
    f.coefs.push_back(c);
  }
  return f;
}

int AnalysisResult::estimable_count(Model m) const {
  int c = 0;
  for (const auto& a : anchors) c += a.fits[static_cast<int>(m)].estimable ? 1 : 0;
  return c;
}

AnalysisResult pointwise_analysis(const SurfaceFeatureTable& table, const std::vector<SubjectRecord>& records,
                                  const AnalysisOptions& opts) {
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < records.size(); ++i) {
    validate_record(records[i]);
    by_id.emplace(records[i].subject_id, i);
  }
  const std::set<int> wanted(opts.subtypes.begin(), opts.subtypes.end());
  auto selected = [&](const SubjectRecord& r) { return wanted.empty() || wanted.count(r.subtype) != 0; };

  // Rows per anchor, in table order.
  std::map<int, std::vector<std::pair<std::size_t, const FeatureRow*>>> rows;
  std::set<std::size_t> used_subjects;
  for (const FeatureRow& row : table.rows) {
    const auto it = by_id.find(row.subject_id);
    if (it == by_id.end()) throw IoError("no covariate record for subject '" + row.subject_id + "'");
    if (!selected(records[it->second])) continue;
    rows[row.anchor_id].emplace_back(it->second, &row);
    used_subjects.insert(it->second);
  }
  if (rows.empty()) throw ComputeError("pointwise_analysis: empty cohort");

  std::vector<SubjectRecord> sample;
  for (std::size_t i : used_subjects) sample.push_back(records[i]);
  AnalysisResult result{DesignBuilder::calibrate(sample, opts.covariates), {}};
  const DesignBuilder& design = result.design;
  const std::vector<std::string>& names = design.columns();
  std::unordered_map<std::size_t, Eigen::RowVectorXd> xrow;
  for (std::size_t i : used_subjects) xrow.emplace(i, design.row(records[i]));

  std::vector<std::pair<int, std::vector<std::pair<std::size_t, const FeatureRow*>>>> anchors(rows.begin(), rows.end());
  result.anchors.resize(anchors.size());
  parallel_for(anchors.size(), [&](std::size_t k) {
    const auto& [anchor_id, members] = anchors[k];
    AnchorAnalysis& out = result.anchors[k];
    out.anchor_id = anchor_id;
    const Eigen::Index p = static_cast<Eigen::Index>(names.size());
    Matrix<double> X(static_cast<Eigen::Index>(members.size()), p);
    std::vector<bool> y;
    for (std::size_t i = 0; i < members.size(); ++i) {
      X.row(static_cast<Eigen::Index>(i)) = xrow.at(members[i].first);
      y.push_back(members[i].second->covered);
    }
    const auto n_cov = std::count(y.begin(), y.end(), true);

    FitResult& s1 = out.fits[0];
    std::vector<double> weights(members.size(), 1.0);
    bool stage2 = true;
    if (n_cov == static_cast<long>(members.size())) {
      s1 = empty_fit(names, "all covered");
      s1.n_used = static_cast<int>(members.size());
    } else {
      try {
        s1 = fit_logistic(X, y, names, opts.max_iter, opts.tol);
      } catch (const ComputeError& e) {
        s1 = empty_fit(names, e.what());
        s1.n_used = static_cast<int>(members.size());
      }
      if (s1.estimable) {
        const IpwWeights iw = ipw_weights(s1, X, opts.p_min);
        weights = iw.w;
        out.n_clipped = iw.n_clipped;
      } else {
        stage2 = false;
      }
    }
    s1.anchor_id = anchor_id;
    s1.model = Model::kCoverage;

    for (Model m : {Model::kSuvr, Model::kDistPos, Model::kDistNeg}) {
      FitResult& f = out.fits[static_cast<int>(m)];
      std::vector<Eigen::Index> idx;
      std::vector<double> yv, wv;
      for (std::size_t i = 0; i < members.size(); ++i) {
        const FeatureRow& r = *members[i].second;
        if (!r.covered) continue;
        const std::optional<double>& v = m == Model::kSuvr ? r.suvr_hat : m == Model::kDistPos ? r.dist_pos : r.dist_neg;
        if (!v) continue;
        idx.push_back(static_cast<Eigen::Index>(i));
        yv.push_back(*v);
        wv.push_back(weights[i]);
      }
      if (!stage2) {
        f = empty_fit(names, "stage 1 not estimable");
      } else {
        try {
          f = fit_wls(X(idx, Eigen::all), yv, wv, names);
        } catch (const ComputeError& e) {
          f = empty_fit(names, e.what());
        }
      }
      f.n_used = static_cast<int>(idx.size());
      f.anchor_id = anchor_id;
      f.model = m;
    }
  });

  // BH per (model, term) across every estimable anchor; fixed anchor order.
  for (Model m : kAllModels) {
    const int mi = static_cast<int>(m);
    for (std::size_t j = 0; j < names.size(); ++j) {
      std::vector<double> ps;
      std::vector<Coefficient*> slots;
      for (auto& a : result.anchors) {
        FitResult& f = a.fits[mi];
        if (!f.estimable || std::isnan(f.coefs[j].p)) continue;
        ps.push_back(f.coefs[j].p);
        slots.push_back(&f.coefs[j]);
      }
      const std::vector<double> adj = bh_adjust(ps);
      for (std::size_t i = 0; i < slots.size(); ++i) slots[i]->p_bh = adj[i];
    }
  }
  return result;
}

void write_fit_csv(const AnalysisResult& result, Model model, const std::filesystem::path& path) {
  csv::Writer w(path, {"anchor_id", "term", "estimate", "se", "stat", "p", "p_bh", "n_used", "converged"});
  auto opt = [](bool ok, double v) { return ok ? std::optional<double>(v) : std::nullopt; };
  for (const auto& a : result.anchors) {
    const FitResult& f = a.fits[static_cast<int>(model)];
    for (const auto& c : f.coefs) {
      w << a.anchor_id << c.term << opt(f.estimable, c.estimate) << opt(f.estimable, c.se)
        << opt(f.estimable, c.stat) << opt(f.estimable, c.p) << c.p_bh << f.n_used << (f.converged ? 1 : 0);
      w.end_row();
    }
  }
}

std::vector<FitResult> read_fit_csv(const std::filesystem::path& path, Model model) {
  const csv::Table t = csv::Table::read(path);
  std::vector<FitResult> out;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const int anchor = static_cast<int>(t.integer(r, "anchor_id"));
    if (out.empty() || out.back().anchor_id != anchor) {
      FitResult f;
      f.anchor_id = anchor;
      f.model = model;
      f.n_used = static_cast<int>(t.integer(r, "n_used"));
      f.converged = t.integer(r, "converged") != 0;
      f.estimable = true;
      out.push_back(std::move(f));
    }
    FitResult& f = out.back();
    Coefficient c;
    c.term = t.at(r, "term");
    const auto est = t.maybe_number(r, "estimate");
    if (!est) f.estimable = false;
    c.estimate = est.value_or(kNaN);
    c.se = t.maybe_number(r, "se").value_or(kNaN);
    c.stat = t.maybe_number(r, "stat").value_or(kNaN);
    c.p = t.maybe_number(r, "p").value_or(kNaN);
    c.p_bh = t.maybe_number(r, "p_bh");
    f.coefs.push_back(c);
  }
  return out;
}

void write_significance_csv(const AnalysisResult& result, Model model, const std::string& term,
                            const std::filesystem::path& path) {
  csv::Writer w(path, {"anchor_id", "neglog10_p_bh"});
  for (const auto& a : result.anchors) {
    const Coefficient* c = a.fits[static_cast<int>(model)].find(term);
    if (!c) throw ComputeError("significance map: unknown term '" + term + "'");
    if (!c->p_bh) continue;
    w << a.anchor_id << -std::log10(*c->p_bh);
    w.end_row();
  }
}

void write_design_json(const DesignBuilder& design, const std::filesystem::path& path) {
  nlohmann::json j;
  j["covariates"] = design.covariates();
  j["subtypes"] = design.subtypes();
  j["columns"] = design.columns();
  if (const auto& p = design.stage_poly()) {
    j["stage_poly"] = {{"a0", p->a0()}, {"a1", p->a1()}, {"b1", p->b1()}, {"n1", p->n1()},
                       {"n2", p->n2()}, {"lo", p->lo()}, {"hi", p->hi()}};
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

DesignBuilder read_design_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    std::optional<OrthoPoly> poly;
    if (j.contains("stage_poly")) {
      const auto& p = j.at("stage_poly");
      poly = OrthoPoly::from_coefficients(p.at("a0"), p.at("a1"), p.at("b1"), p.at("n1"), p.at("n2"), p.at("lo"),
                                          p.at("hi"));
    }
    DesignBuilder d = DesignBuilder::from_parts(j.at("covariates").get<std::vector<std::string>>(),
                                                j.at("subtypes").get<std::vector<int>>(), poly);
    if (j.contains("columns") && j.at("columns").get<std::vector<std::string>>() != d.columns())
      throw IoError(path.string() + ": column list does not match the covariates");
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_analysis(const AnalysisResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "maps");
  write_design_json(result.design, dir / "design.json");
  for (Model m : kAllModels) {
    write_fit_csv(result, m, dir / ("fits_" + to_string(m) + ".csv"));
    for (const auto& term : result.design.columns()) {
      if (term == "intercept") continue;
      std::string file = to_string(m) + "__" + term + ".csv";
      std::replace(file.begin(), file.end(), ':', '_');
      write_significance_csv(result, m, term, dir / "maps" / file);
    }
  }
}

AnalysisResult read_analysis(const std::filesystem::path& dir) {
  AnalysisResult r{read_design_json(dir / "design.json"), {}};
  std::map<int, AnchorAnalysis> merged;
  for (Model m : kAllModels) {
    for (FitResult& f : read_fit_csv(dir / ("fits_" + to_string(m) + ".csv"), m)) {
      std::vector<std::string> terms;
      for (const auto& c : f.coefs) terms.push_back(c.term);
      if (terms != r.design.columns())
        throw IoError(dir.string() + ": fits for anchor " + std::to_string(f.anchor_id) + " do not match design.json");
      AnchorAnalysis& a = merged[f.anchor_id];
      a.anchor_id = f.anchor_id;
      a.fits[static_cast<int>(m)] = std::move(f);
    }
  }
  for (auto& [id, a] : merged) {
    for (Model m : kAllModels)
      if (a.fits[static_cast<int>(m)].coefs.empty())
        throw IoError(dir.string() + ": anchor " + std::to_string(id) + " lacks the " + to_string(m) + " model");
    r.anchors.push_back(std::move(a));
  }
  return r;
}

}  // namespace medrep
