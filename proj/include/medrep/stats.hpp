#ifndef MEDREP_STATS_HPP_
#define MEDREP_STATS_HPP_

#include <vector>

namespace medrep {

// I_x(a, b). Continued fraction (modified Lentz).
double regularized_beta(double a, double b, double x);

double student_t_cdf(double t, double df);
// Upper tail P(T > t), computed without cancellation for large t.
double student_t_sf(double t, double df);
// Upper tail of the standard normal.
double normal_sf(double z);

struct TTest {
  int n = 0;
  double mean = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p_two = 1.0;
  double p_pos = 0.5;  // H1: mean > 0
  double p_neg = 0.5;  // H1: mean < 0
};

// Throws ComputeError for n < 2 or zero variance.
TTest one_sample_ttest(const std::vector<double>& values);

// Benjamini-Hochberg step-up adjusted p-values, in input order. Throws
// ComputeError when a value is outside [0, 1].
std::vector<double> bh_adjust(const std::vector<double>& p);

}  // namespace medrep

#endif  // MEDREP_STATS_HPP_
