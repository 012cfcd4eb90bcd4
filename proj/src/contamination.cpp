#include "medrep/contamination.hpp"

#include "medrep/csv.hpp"
#include "medrep/parallel.hpp"
#include "medrep/stats.hpp"

#include <cmath>
#include <set>

namespace medrep {

namespace {

// Shifted mean: exact for constant input.
double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x - v[0];
  return v[0] + s / static_cast<double>(v.size());
}

}  // namespace

ContaminationFit contamination_fit(const std::vector<double>& distance, const std::vector<double>& suvr) {
  const std::size_t n = distance.size();
  if (n != suvr.size()) throw ComputeError("contamination_fit: size mismatch");
  if (n < 3) throw ComputeError("contamination_fit: need at least 3 samples");
  const double mx = mean_of(distance), my = mean_of(suvr);
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = distance[i] - mx;
    sxx += dx * dx;
    sxy += dx * (suvr[i] - my);
  }
  if (!(std::sqrt(sxx / static_cast<double>(n - 1)) > 1e-9))
    throw ComputeError("contamination_fit: distances have no spread");
  ContaminationFit f;
  f.n = static_cast<int>(n);
  f.beta1 = sxy / sxx;
  f.beta0 = my - f.beta1 * mx;
  double rss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = suvr[i] - my - f.beta1 * (distance[i] - mx);
    rss += r * r;
  }
  const double df = static_cast<double>(n - 2);
  const double se = std::sqrt(rss / df / sxx);
  if (se == 0.0) {
    f.p_pos = f.beta1 > 0 ? 0.0 : f.beta1 < 0 ? 1.0 : 0.5;
    f.p_neg = f.beta1 < 0 ? 0.0 : f.beta1 > 0 ? 1.0 : 0.5;
    return f;
  }
  const double t = f.beta1 / se;
  f.p_pos = student_t_sf(t, df);
  f.p_neg = student_t_cdf(t, df);
  return f;
}

std::vector<ContaminationFit> subject_contamination(const std::vector<ProjectedSample>& samples,
                                                    const ContaminationOptions& opts) {
  if (opts.min_samples < 3) throw ComputeError("contamination: min_samples must be >= 3");
  std::map<std::pair<int, std::string>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) groups[{samples[i].anchor_id, samples[i].subject_id}].push_back(i);
  std::vector<std::pair<std::pair<int, std::string>, std::vector<std::size_t>>> keyed(groups.begin(), groups.end());
  std::vector<std::optional<ContaminationFit>> fits(keyed.size());
  parallel_for(keyed.size(), [&](std::size_t k) {
    const auto& idx = keyed[k].second;
    if (static_cast<int>(idx.size()) < opts.min_samples) return;
    std::vector<double> d, s;
    for (std::size_t i : idx) {
      d.push_back(opts.absolute_distance ? std::abs(samples[i].signed_dist) : samples[i].signed_dist);
      s.push_back(samples[i].suvr);
    }
    try {
      ContaminationFit f = contamination_fit(d, s);
      f.anchor_id = keyed[k].first.first;
      f.subject_id = keyed[k].first.second;
      fits[k] = f;
    } catch (const ComputeError&) {
      // no spread: no fit for this pair
    }
  });
  std::vector<ContaminationFit> out;
  for (auto& f : fits)
    if (f) out.push_back(std::move(*f));
  return out;
}

std::vector<GroupContamination> contamination_group(const std::vector<ContaminationFit>& fits,
                                                    const std::map<std::string, std::string>& group_of) {
  std::set<std::string> groups;
  std::map<std::pair<int, std::string>, std::vector<double>> slopes;
  std::set<int> anchors;
  for (const auto& f : fits) {
    const auto g = group_of.find(f.subject_id);
    if (g == group_of.end()) continue;
    groups.insert(g->second);
    anchors.insert(f.anchor_id);
    slopes[{f.anchor_id, g->second}].push_back(f.beta1);
  }
  std::vector<GroupContamination> rows;
  for (int a : anchors) {
    for (const auto& g : groups) {
      GroupContamination r;
      r.anchor_id = a;
      r.group = g;
      const auto it = slopes.find({a, g});
      if (it != slopes.end()) {
        r.n = static_cast<int>(it->second.size());
        try {
          const TTest t = one_sample_ttest(it->second);
          r.mean_beta1 = t.mean;
          r.t = t.t;
          r.p_pos = t.p_pos;
          r.p_neg = t.p_neg;
        } catch (const ComputeError&) {
          // fewer than two subjects or identical slopes
        }
      }
      rows.push_back(r);
    }
  }
  for (const auto& g : groups) {
    for (int dir = 0; dir < 2; ++dir) {
      std::vector<double> ps;
      std::vector<std::optional<double>*> slots;
      for (auto& r : rows) {
        if (r.group != g || !r.t) continue;
        ps.push_back(dir == 0 ? *r.p_pos : *r.p_neg);
        slots.push_back(dir == 0 ? &r.p_pos_bh : &r.p_neg_bh);
      }
      const auto adj = bh_adjust(ps);
      for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = adj[i];
    }
  }
  return rows;
}

void write_subject_contamination_csv(const std::vector<ContaminationFit>& fits, const std::filesystem::path& path) {
  csv::Writer w(path, {"anchor_id", "subject_id", "beta1", "p_pos", "p_neg"});
  for (const auto& f : fits) {
    w << f.anchor_id << f.subject_id << f.beta1 << f.p_pos << f.p_neg;
    w.end_row();
  }
}

void write_group_contamination_csv(const std::vector<GroupContamination>& rows, const std::filesystem::path& path) {
  csv::Writer w(path, {"anchor_id", "group", "t", "p_pos_bh", "p_neg_bh"});
  for (const auto& r : rows) {
    w << r.anchor_id << r.group << r.t << r.p_pos_bh << r.p_neg_bh;
    w.end_row();
  }
}

}  // namespace medrep
