#include "medrep/prediction.hpp"

#include "fixtures.hpp"
#include "medrep/cohort.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

using namespace medrep;

namespace {

// Pairwise count: positives above negatives plus half the ties.
double mann_whitney(const std::vector<double>& s, const std::vector<bool>& y) {
  double wins = 0;
  long long np = 0, nn = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    ++np;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  for (bool b : y) nn += !b;
  return wins / (static_cast<double>(np) * static_cast<double>(nn));
}

std::vector<int> iota_ids(int n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Planted cohort: 30 anchors, the first 15 carry a coverage intercept shift,
// coverage rises with stage everywhere.
const AnalysisResult& planted_fit() {
  static const AnalysisResult r = [] {
    CohortSpec spec;
    spec.n_subjects = 400;
    spec.seed = 11;
    spec.effect[static_cast<int>(Model::kCoverage)].intercept = 1.5;
    spec.effect_anchors = iota_ids(15);
    const Cohort c = generate_cohort(spec, iota_ids(30));
    return pointwise_analysis(c.table, c.records);
  }();
  return r;
}

}  // namespace

TEST_SUITE("roc") {
  TEST_CASE("AUC equals the pairwise oracle on random inputs with ties") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 40; ++rep) {
      const int n = 5 + static_cast<int>(rng() % 196);
      std::vector<double> s(n);
      std::vector<bool> y(n);
      std::uniform_int_distribution<int> level(0, rep % 2 ? 9 : 1000000);
      for (int i = 0; i < n; ++i) {
        s[i] = level(rng) / 10.0;
        y[i] = rng() % 3 == 0;
      }
      y[0] = true;
      y[1] = false;
      const RocCurve roc = roc_auc(s, y);
      CHECK(std::abs(roc.auc - mann_whitney(s, y)) <= 1e-10);
    }
  }

  TEST_CASE("perfect separation gives 1, reversed gives 0") {
    const std::vector<double> s{0.1, 0.2, 0.3, 0.7, 0.8};
    CHECK(roc_auc(s, {false, false, false, true, true}).auc == 1.0);
    CHECK(roc_auc(s, {true, true, false, false, false}).auc == 0.0);
  }

  TEST_CASE("labels independent of scores: AUC near 0.5") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> s(10000);
    std::vector<bool> y(10000);
    for (int i = 0; i < 10000; ++i) {
      s[i] = u(rng);
      y[i] = u(rng) < 0.4;
    }
    CHECK(std::abs(roc_auc(s, y).auc - 0.5) <= 0.02);
  }

  TEST_CASE("curve is monotone and ends at (1, 1)") {
    const RocCurve roc = roc_auc({0.9, 0.4, 0.4, 0.3, 0.8, 0.1}, {true, false, true, false, true, false});
    CHECK(roc.thresholds.size() == 6);
    for (std::size_t k = 1; k < roc.thresholds.size(); ++k) {
      CHECK(roc.thresholds[k] < roc.thresholds[k - 1]);
      CHECK(roc.fpr[k] >= roc.fpr[k - 1]);
      CHECK(roc.tpr[k] >= roc.tpr[k - 1]);
    }
    CHECK(roc.fpr.back() == 1.0);
    CHECK(roc.tpr.back() == 1.0);
  }

  TEST_CASE("monotone transform keeps the points and the chosen partition") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> z;
    std::vector<double> s(300), t(300);
    std::vector<bool> y(300);
    for (int i = 0; i < 300; ++i) {
      y[i] = i % 2;
      s[i] = z(rng) + (y[i] ? 0.8 : 0.0);
      t[i] = std::exp(2 * s[i]);
    }
    const RocCurve a = roc_auc(s, y), b = roc_auc(t, y);
    CHECK(a.fpr == b.fpr);
    CHECK(a.tpr == b.tpr);
    CHECK(a.auc == b.auc);
    const double ca = youden_threshold(a), cb = youden_threshold(b);
    for (int i = 0; i < 300; ++i) CHECK((s[i] >= ca) == (t[i] >= cb));
  }

  TEST_CASE("errors") {
    CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {true, true}), ComputeError);
    CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {true}), ComputeError);
    CHECK_THROWS_AS(roc_auc({0.1, NAN}, {true, false}), ComputeError);
  }
}

TEST_SUITE("youden") {
  TEST_CASE("gap between classes: the upper edge of the gap") {
    const RocCurve roc = roc_auc({0.1, 0.4, 0.6, 0.9}, {false, false, true, true});
    CHECK(youden_threshold(roc) == 0.6);
  }

  TEST_CASE("constant scores: the single threshold") {
    const RocCurve roc = roc_auc({0.3, 0.3, 0.3}, {true, false, true});
    CHECK(youden_threshold(roc) == 0.3);
  }

  TEST_CASE("planted logistic cohort: within 0.05 of a dense grid search") {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u(0, 1);
    const int n = 4000;
    std::vector<double> s(n);
    std::vector<bool> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = 1.0 / (1.0 + std::exp(-(0.3 + 1.4 * z(rng))));
      y[i] = u(rng) < s[i];
    }
    const double n_pos = static_cast<double>(std::count(y.begin(), y.end(), true));
    const double n_neg = n - n_pos;
    double best_c = 0, best_j = -2;
    for (int k = 0; k <= 20000; ++k) {
      const double c = k / 20000.0;
      double tp = 0, fp = 0;
      for (int i = 0; i < n; ++i)
        if (s[i] >= c) (y[i] ? tp : fp) += 1;
      const double j = tp / n_pos - fp / n_neg;
      if (j > best_j) {
        best_j = j;
        best_c = c;
      }
    }
    CHECK(std::abs(youden_threshold(roc_auc(s, y)) - best_c) <= 0.05);
  }
}

TEST_SUITE("predict_shape") {
  TEST_CASE("paper-cohort preset") {
    const SubjectRecord r = paper_cohort_preset(2);
    CHECK(r.age == 75.5);
    CHECK(r.sex == Sex::kM);
    CHECK(r.diagnosis == 1);
    CHECK(r.subtype == 2);
  }

  TEST_CASE("threshold 0 includes every estimable anchor; above 1 is empty with a warning") {
    const AnalysisResult& fit = planted_fit();
    const PredictedShape all = predict_shape(fit, paper_cohort_preset(), 5, 0.0);
    int with_model = 0;
    for (const auto& a : all.anchors) with_model += a.p_cover.has_value();
    CHECK(with_model == 30);
    CHECK(all.included_count() == 30);
    CHECK(all.warnings.empty());
    for (const auto& a : all.anchors) {
      REQUIRE(a.dist_pos);
      CHECK(*a.dist_pos >= 0.0);
      CHECK(*a.dist_neg <= 0.0);
    }

    const PredictedShape none = predict_shape(fit, paper_cohort_preset(), 5, 1.0 + 1e-9);
    CHECK(none.included_count() == 0);
    CHECK(none.warnings.size() == 1);
    for (const auto& a : none.anchors) CHECK_FALSE(a.suvr.has_value());
  }

  TEST_CASE("planted stage effect: covered count never drops over stages 1 to 10") {
    const AnalysisResult& fit = planted_fit();
    int prev = -1;
    std::vector<int> counts;
    for (int stage = 1; stage <= 10; ++stage) {
      const int c = predict_shape(fit, paper_cohort_preset(), stage, 0.5).included_count();
      counts.push_back(c);
      CHECK(c >= prev);
      prev = c;
    }
    INFO("counts from " << counts.front() << " to " << counts.back());
    CHECK(counts.back() > counts.front());
  }

  TEST_CASE("predictions match the fitted linear predictor") {
    const AnalysisResult& fit = planted_fit();
    SubjectRecord r = paper_cohort_preset();
    r.stage = 7;
    const Eigen::RowVectorXd x = fit.design.row(r);
    const PredictedShape s = predict_shape(fit, r, 7, 0.0);
    for (std::size_t i = 0; i < s.anchors.size(); ++i) {
      const auto& a = fit.anchors[i];
      const double eta = x.dot(a.fits[0].beta());
      CHECK(*s.anchors[i].p_cover == doctest::Approx(1.0 / (1.0 + std::exp(-eta))).epsilon(1e-12));
      CHECK(*s.anchors[i].suvr == doctest::Approx(x.dot(a.fits[1].beta())).epsilon(1e-12));
    }
  }

  TEST_CASE("stage outside the calibrated range is rejected") {
    const AnalysisResult& fit = planted_fit();
    CHECK_THROWS_AS(predict_shape(fit, paper_cohort_preset(), 0, 0.5), ComputeError);
    CHECK_THROWS_AS(predict_shape(fit, paper_cohort_preset(), 21, 0.5), ComputeError);
    CHECK_THROWS_AS(predict_shape(fit, paper_cohort_preset(3), 5, 0.5), ComputeError);
  }

  TEST_CASE("all-covered anchor predicts probability 1; failed anchor has none") {
    AnalysisResult fit = planted_fit();
    fit.anchors[0].fits[0].estimable = false;
    fit.anchors[1].fits[0].estimable = false;
    fit.anchors[1].fits[1].estimable = false;
    const PredictedShape s = predict_shape(fit, paper_cohort_preset(), 3, 0.0);
    CHECK(*s.anchors[0].p_cover == 1.0);
    CHECK_FALSE(s.anchors[1].p_cover.has_value());
    CHECK_FALSE(s.anchors[1].included);
  }

  TEST_CASE("deterministic and geometry only at included anchors") {
    const auto& ph = testing::bent_tube_fit();
    StructureModel sm{ph.phantom.mask, ph.surface, sample_reference_grid(ph.surface, 30)};
    const AnalysisResult& fit = planted_fit();
    const PredictedShape a = predict_shape(fit, paper_cohort_preset(), 4, 0.5, {sm});
    const PredictedShape b = predict_shape(fit, paper_cohort_preset(), 4, 0.5, {sm});
    CHECK(a.geometry.points == b.geometry.points);
    CHECK(a.geometry.triangles == b.geometry.triangles);
    std::set<int> included;
    for (const auto& p : a.anchors)
      if (p.included) included.insert(p.anchor_id);
    REQUIRE(!included.empty());
    REQUIRE(static_cast<int>(included.size()) < 30);
    for (int id : a.geometry.anchor_ids) CHECK(included.count(id) == 1);
    CHECK(a.geometry.points.size() == 2 * included.size());
  }
}

TEST_SUITE("coverage scores") {
  TEST_CASE("pooled over anchors and subjects of a subtype") {
    CohortSpec spec;
    spec.n_subjects = 300;
    spec.seed = 5;
    spec.subtypes = {1, 2};
    const Cohort c = generate_cohort(spec, iota_ids(12));
    const AnalysisResult fit = pointwise_analysis(c.table, c.records);
    int n1 = 0;
    for (const auto& r : c.records) n1 += r.subtype == 1;
    const CoverageScores s1 = coverage_scores(fit, c.table, c.records, 1);
    const CoverageScores all = coverage_scores(fit, c.table, c.records);
    CHECK(s1.scores.size() == static_cast<std::size_t>(n1 * 12));
    CHECK(all.scores.size() == c.table.rows.size());
    const RocCurve roc = roc_auc(all.scores, all.labels);
    CHECK(roc.auc > 0.6);
    CHECK(roc.auc < 1.0);
  }
}

TEST_SUITE("outputs") {
  TEST_CASE("ROC and prediction tables") {
    testing::TempDir dir;
    const RocCurve roc = roc_auc({0.2, 0.8}, {false, true});
    write_roc_csv(roc, dir.path() / "roc.csv");
    CHECK(testing::read_file(dir.path() / "roc.csv") == "threshold,fpr,tpr\ninf,0,0\n0.8,0,1\n0.2,1,1\n");
    const PredictedShape s = predict_shape(planted_fit(), paper_cohort_preset(), 2, 2.0);
    write_prediction_csv(s, dir.path() / "pred.csv");
    const std::string text = testing::read_file(dir.path() / "pred.csv");
    CHECK(text.rfind("anchor_id,p_cover,included,suvr,dist_pos,dist_neg\n0,", 0) == 0);
    CHECK(text.find(",0,,,\n") != std::string::npos);
  }
}
