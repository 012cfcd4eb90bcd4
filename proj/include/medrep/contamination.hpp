#ifndef MEDREP_CONTAMINATION_HPP_
#define MEDREP_CONTAMINATION_HPP_

#include "medrep/features.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace medrep {

// SUVR = beta0 + beta1 * distance at one anchor for one subject.
struct ContaminationFit {
  int anchor_id = -1;
  std::string subject_id;
  double beta0 = 0.0, beta1 = 0.0;
  double p_pos = 0.5, p_neg = 0.5;  // one-sided, H1: beta1 > 0 / beta1 < 0
  int n = 0;
};

// OLS with t(n - 2) one-sided p-values. Throws ComputeError for n < 3 or a
// distance spread (sd) <= 1e-9. A zero residual gives p 0/1 by the sign
// of beta1, or 0.5/0.5 when beta1 is 0.
ContaminationFit contamination_fit(const std::vector<double>& distance, const std::vector<double>& suvr);

struct ContaminationOptions {
  bool absolute_distance = false;
  int min_samples = 3;
};

// One fit per (anchor, subject) with enough spread; ordered by anchor, then
// subject id.
std::vector<ContaminationFit> subject_contamination(const std::vector<ProjectedSample>& samples,
                                                    const ContaminationOptions& opts = {});

struct GroupContamination {
  int anchor_id = -1;
  std::string group;
  int n = 0;  // subjects with a fit
  std::optional<double> mean_beta1, t, p_pos, p_neg, p_pos_bh, p_neg_bh;  // empty when missing
};

// One-sample t-test of beta1 per (anchor, group); groups with fewer than two
// subjects (or zero variance) are missing. BH runs across anchors within
// each group, separately per direction. Rows by anchor, then group name.
// Subjects without a label are ignored.
std::vector<GroupContamination> contamination_group(const std::vector<ContaminationFit>& fits,
                                                    const std::map<std::string, std::string>& group_of);

void write_subject_contamination_csv(const std::vector<ContaminationFit>& fits, const std::filesystem::path& path);
void write_group_contamination_csv(const std::vector<GroupContamination>& rows, const std::filesystem::path& path);

}  // namespace medrep

#endif  // MEDREP_CONTAMINATION_HPP_
