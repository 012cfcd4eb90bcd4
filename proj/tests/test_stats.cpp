#include "medrep/stats.hpp"
#include "medrep/types.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <doctest.h>

#include <cmath>
#include <random>

using namespace medrep;

TEST_SUITE("distributions") {
  TEST_CASE("regularized beta against boost") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> ab(0.05, 60.0), ux(0.0, 1.0);
    for (int k = 0; k < 2000; ++k) {
      const double a = ab(rng), b = ab(rng), x = ux(rng);
      const double want = boost::math::ibeta(a, b, x);
      CHECK(regularized_beta(a, b, x) == doctest::Approx(want).epsilon(1e-12).scale(1.0));
    }
    CHECK(regularized_beta(2, 3, 0.0) == 0.0);
    CHECK(regularized_beta(2, 3, 1.0) == 1.0);
    CHECK_THROWS_AS(regularized_beta(0, 3, 0.5), ComputeError);
    CHECK_THROWS_AS(regularized_beta(1, 3, 1.5), ComputeError);
  }

  TEST_CASE("student t cdf and tails against boost, including far tails") {
    for (double df : {1.0, 2.0, 3.5, 10.0, 29.0, 200.0, 5000.0}) {
      const boost::math::students_t dist(df);
      for (double t = -40.0; t <= 40.0; t += 0.37) {
        const double lower = boost::math::cdf(dist, t);
        const double upper = boost::math::cdf(boost::math::complement(dist, t));
        CHECK(student_t_cdf(t, df) == doctest::Approx(lower).epsilon(1e-11));
        CHECK(student_t_sf(t, df) == doctest::Approx(upper).epsilon(1e-11));
        CHECK(std::abs(student_t_cdf(t, df) + student_t_sf(t, df) - 1.0) < 1e-12);
      }
    }
    CHECK(student_t_sf(0.0, 7) == doctest::Approx(0.5));
    CHECK(student_t_sf(INFINITY, 7) == 0.0);
    CHECK_THROWS_AS(student_t_sf(1.0, 0.0), ComputeError);
  }

  TEST_CASE("normal tail") {
    const boost::math::normal n;
    for (double z = -8; z <= 8; z += 0.25)
      CHECK(normal_sf(z) == doctest::Approx(boost::math::cdf(boost::math::complement(n, z))).epsilon(1e-13));
  }
}

TEST_SUITE("one_sample_ttest") {
  TEST_CASE("symmetric values give t = 0 and p = 1") {
    const TTest r = one_sample_ttest({-1.0, 1.0});
    CHECK(r.t == 0.0);
    CHECK(r.p_two == doctest::Approx(1.0));
    CHECK(r.p_pos == doctest::Approx(0.5));
  }

  TEST_CASE("1..5") {
    const TTest r = one_sample_ttest({1, 2, 3, 4, 5});
    CHECK(r.t == doctest::Approx(3.0 / (std::sqrt(2.5) / std::sqrt(5.0))).epsilon(1e-14));
    CHECK(r.df == 4.0);
    const boost::math::students_t dist(4.0);
    const double want = 2 * boost::math::cdf(boost::math::complement(dist, r.t));
    CHECK(r.p_two == doctest::Approx(want).epsilon(1e-12));
    CHECK(r.p_two == doctest::Approx(0.0132).epsilon(0.01));
  }

  TEST_CASE("one-sided p-values sum to one") {
    std::mt19937 rng(8);
    std::normal_distribution<double> g(0.3, 1.0);
    for (int k = 0; k < 50; ++k) {
      std::vector<double> v(3 + k % 20);
      for (double& x : v) x = g(rng);
      const TTest r = one_sample_ttest(v);
      CHECK(std::abs(r.p_pos + r.p_neg - 1.0) < 1e-12);
      CHECK(r.p_two == doctest::Approx(2 * std::min(r.p_pos, r.p_neg)));
    }
  }

  TEST_CASE("errors") {
    CHECK_THROWS_AS(one_sample_ttest({1.0}), ComputeError);
    CHECK_THROWS_AS(one_sample_ttest({2.0, 2.0, 2.0}), ComputeError);
  }
}

TEST_SUITE("bh_adjust") {
  TEST_CASE("worked examples") {
    CHECK(bh_adjust({0.3}) == std::vector<double>{0.3});
    const auto a = bh_adjust({0.01, 0.02, 0.03, 0.04});
    for (double v : a) CHECK(v == doctest::Approx(0.04).epsilon(1e-15));
    for (double v : bh_adjust({1, 1, 1})) CHECK(v == 1.0);
    CHECK(bh_adjust({}).empty());
    // Input order preserved: (0.04, 0.01) -> (0.04, 0.02).
    const auto b = bh_adjust({0.04, 0.01});
    CHECK(b[0] == doctest::Approx(0.04));
    CHECK(b[1] == doctest::Approx(0.02));
  }

  TEST_CASE("monotone in raw p, never below it, against a brute-force definition") {
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 30; ++k) {
      std::vector<double> p(1 + k * 7);
      for (double& x : p) x = std::pow(u(rng), 3);
      if (k % 3 == 0 && p.size() > 2) p[1] = p[2];  // ties
      const auto adj = bh_adjust(p);
      const double m = static_cast<double>(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(adj[i] >= p[i]);
        CHECK(adj[i] <= 1.0);
        // min over j with p_j >= p_i of p_j * m / rank_j, rank = #{p <= p_j}
        double want = 1.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
          if (p[j] < p[i]) continue;
          double rank = 0;
          for (double q : p) rank += q <= p[j] ? 1 : 0;
          want = std::min(want, p[j] * m / rank);
        }
        CHECK(adj[i] == doctest::Approx(want).epsilon(1e-14));
        for (std::size_t j = 0; j < p.size(); ++j)
          if (p[j] <= p[i]) CHECK(adj[j] <= adj[i]);
      }
    }
  }

  TEST_CASE("rejects values outside [0, 1]") {
    CHECK_THROWS_AS(bh_adjust({0.1, 1.2}), ComputeError);
    CHECK_THROWS_AS(bh_adjust({-0.1}), ComputeError);
    CHECK_THROWS_AS(bh_adjust({NAN}), ComputeError);
  }
}
