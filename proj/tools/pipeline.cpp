#include "pipeline.hpp"

#include "medrep/cohort.hpp"
#include "medrep/contamination.hpp"
#include "medrep/csv.hpp"
#include "medrep/features.hpp"
#include "medrep/inference.hpp"
#include "medrep/parallel.hpp"
#include "medrep/prediction.hpp"
#include "medrep/skeleton.hpp"
#include "medrep/surface.hpp"
#include "medrep/volume.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#ifndef MEDREP_VERSION
#define MEDREP_VERSION "unknown"
#endif

namespace medrep::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------- config

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path q(p);
  return (q.is_absolute() ? q : base / q).lexically_normal();
}

template <typename T>
void take(const json& j, const char* key, T& into) {
  if (!j.contains(key)) return;
  try {
    into = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw IoError(std::string("config: bad value for \"") + key + "\": " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw IoError("config: unknown key \"" + k + "\"" + (where.empty() ? "" : " in " + where));
}

}  // namespace

RunConfig config_from_json(const json& j, const fs::path& base) {
  if (!j.is_object()) throw IoError("config: top level must be an object");
  reject_unknown(j,
                 {"structures", "subjects_dir", "covariates", "out", "cutoff", "tau_flux", "flux_radius", "num_dirs",
                  "upsample", "upsample_factor", "tps_lambda", "fit_max_iter", "loess_span", "min_support",
                  "model_covariates", "subtypes", "max_stage", "p_min", "bh_alpha", "contamination", "prediction",
                  "phantom_subjects", "seed", "threads"},
                 "");
  RunConfig c;
  if (j.contains("structures")) {
    if (!j["structures"].is_array()) throw IoError("config: structures must be an array");
    c.structures.clear();
    for (const auto& s : j["structures"]) {
      reject_unknown(s, {"name", "mask", "grid_count"}, "structures");
      StructureInput in;
      std::string mask;
      take(s, "name", in.name);
      take(s, "mask", mask);
      take(s, "grid_count", in.grid_count);
      in.mask = resolve(base, mask);
      c.structures.push_back(in);
    }
  }
  std::string p;
  if (j.contains("subjects_dir")) c.subjects_dir = resolve(base, (take(j, "subjects_dir", p), p));
  if (j.contains("covariates")) c.covariates = resolve(base, (take(j, "covariates", p), p));
  if (j.contains("out")) c.out = resolve(base, (take(j, "out", p), p));
  take(j, "cutoff", c.cutoff);
  take(j, "tau_flux", c.tau_flux);
  take(j, "flux_radius", c.flux_radius);
  take(j, "num_dirs", c.num_dirs);
  take(j, "upsample", c.upsample);
  take(j, "upsample_factor", c.upsample_factor);
  if (j.contains("tps_lambda")) {
    const json& l = j["tps_lambda"];
    if (l.is_string() && l.get<std::string>() == "gcv") c.tps_lambda.reset();
    else if (l.is_number()) c.tps_lambda = l.get<double>();
    else throw IoError("config: tps_lambda must be \"gcv\" or a number");
  }
  take(j, "fit_max_iter", c.fit_max_iter);
  take(j, "loess_span", c.loess_span);
  take(j, "min_support", c.min_support);
  take(j, "model_covariates", c.model_covariates);
  take(j, "subtypes", c.subtypes);
  take(j, "max_stage", c.max_stage);
  take(j, "p_min", c.p_min);
  take(j, "bh_alpha", c.bh_alpha);
  if (j.contains("contamination")) {
    const json& k = j["contamination"];
    reject_unknown(k, {"group", "absolute_distance", "min_samples"}, "contamination");
    take(k, "group", c.contamination_group);
    take(k, "absolute_distance", c.absolute_distance);
    take(k, "min_samples", c.contamination_min_samples);
  }
  if (j.contains("prediction")) {
    const json& k = j["prediction"];
    reject_unknown(k, {"preset", "age", "sex", "diagnosis", "stages", "threshold", "subtypes"}, "prediction");
    take(k, "preset", c.prediction.preset);
    take(k, "age", c.prediction.age);
    take(k, "sex", c.prediction.sex);
    take(k, "diagnosis", c.prediction.diagnosis);
    take(k, "stages", c.prediction.stages);
    take(k, "subtypes", c.prediction.subtypes);
    if (k.contains("threshold")) {
      const json& t = k["threshold"];
      if (t.is_string() && t.get<std::string>() == "youden") c.prediction.threshold.reset();
      else if (t.is_number()) c.prediction.threshold = t.get<double>();
      else throw IoError("config: prediction.threshold must be \"youden\" or a number");
    }
  }
  take(j, "phantom_subjects", c.phantom_subjects);
  take(j, "seed", c.seed);
  take(j, "threads", c.threads);
  validate(c);
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return config_from_json(j, fs::absolute(path).parent_path());
}

json to_json(const RunConfig& c) {
  json j;
  j["structures"] = json::array();
  for (const auto& s : c.structures)
    j["structures"].push_back({{"name", s.name}, {"mask", s.mask.string()}, {"grid_count", s.grid_count}});
  j["subjects_dir"] = c.subjects_dir.string();
  j["covariates"] = c.covariates.string();
  j["out"] = c.out.string();
  j["cutoff"] = c.cutoff;
  j["tau_flux"] = c.tau_flux;
  j["flux_radius"] = c.flux_radius;
  j["num_dirs"] = c.num_dirs;
  j["upsample"] = c.upsample;
  j["upsample_factor"] = c.upsample_factor;
  j["tps_lambda"] = c.tps_lambda ? json(*c.tps_lambda) : json("gcv");
  j["fit_max_iter"] = c.fit_max_iter;
  j["loess_span"] = c.loess_span;
  j["min_support"] = c.min_support;
  j["model_covariates"] = c.model_covariates;
  j["subtypes"] = c.subtypes;
  j["max_stage"] = c.max_stage;
  j["p_min"] = c.p_min;
  j["bh_alpha"] = c.bh_alpha;
  j["contamination"] = {{"group", c.contamination_group},
                        {"absolute_distance", c.absolute_distance},
                        {"min_samples", c.contamination_min_samples}};
  const auto& pr = c.prediction;
  j["prediction"] = {{"preset", pr.preset},   {"age", pr.age},       {"sex", pr.sex},
                     {"diagnosis", pr.diagnosis}, {"stages", pr.stages}, {"subtypes", pr.subtypes},
                     {"threshold", pr.threshold ? json(*pr.threshold) : json("youden")}};
  j["phantom_subjects"] = c.phantom_subjects;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  return j;
}

void validate(const RunConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw IoError("config: " + what);
  };
  need(!c.structures.empty(), "at least one structure is required");
  std::set<std::string> names;
  for (const auto& s : c.structures) {
    need(!s.name.empty(), "structure without a name");
    need(s.name.find_first_of("/\\") == std::string::npos, "structure name \"" + s.name + "\" contains a path separator");
    need(names.insert(s.name).second, "duplicate structure name \"" + s.name + "\"");
    need(s.grid_count >= 3, "grid_count of \"" + s.name + "\" must be >= 3");
  }
  need(std::isfinite(c.cutoff), "cutoff must be finite");
  need(c.tau_flux < 0.0 && c.tau_flux >= -1.0, "tau_flux must lie in [-1, 0)");
  need(c.num_dirs >= 6, "num_dirs must be >= 6");
  need(c.upsample_factor >= 1 && c.upsample_factor <= 8, "upsample_factor must be in 1..8");
  need(!c.tps_lambda || *c.tps_lambda >= 0.0, "tps_lambda must be >= 0");
  need(c.fit_max_iter >= 1, "fit_max_iter must be >= 1");
  need(c.loess_span > 0.0 && c.loess_span <= 1.0, "loess_span must lie in (0, 1]");
  need(c.min_support >= 3, "min_support must be >= 3");
  need(c.max_stage >= 1 && c.max_stage <= 20, "max_stage must be in 1..20");
  need(c.p_min > 0.0 && c.p_min < 1.0, "p_min must lie in (0, 1)");
  need(c.bh_alpha > 0.0 && c.bh_alpha < 1.0, "bh_alpha must lie in (0, 1)");
  need(c.contamination_group == "diagnosis" || c.contamination_group == "subtype",
       "contamination.group must be \"diagnosis\" or \"subtype\"");
  need(c.contamination_min_samples >= 3, "contamination.min_samples must be >= 3");
  need(c.prediction.preset == "paper-cohort" || c.prediction.preset == "custom",
       "prediction.preset must be \"paper-cohort\" or \"custom\"");
  need(!c.prediction.stages.empty(), "prediction.stages is empty");
  for (int s : c.prediction.stages) need(s >= 1 && s <= 20, "prediction stages must be in 1..20");
  need(c.phantom_subjects >= 10, "phantom_subjects must be >= 10");
}

// ---------------------------------------------------------------- manifests

namespace {

using Clock = std::chrono::steady_clock;

class Manifest {
 public:
  Manifest(const RunConfig& cfg, std::string command, fs::path dir)
      : cfg_(to_json(cfg)), command_(std::move(command)), dir_(std::move(dir)), start_(Clock::now()) {
    fs::create_directories(dir_);
  }

  void input(const fs::path& p) { inputs_.push_back(p.string()); }
  void output(const fs::path& p) { outputs_.push_back(p); }
  void step(const std::string& name, Clock::time_point since) {
    timings_[name] = std::chrono::duration<double, std::milli>(Clock::now() - since).count();
  }
  json& summary() { return summary_; }

  void write() {
    json j;
    j["command"] = command_;
    j["version"] = MEDREP_VERSION;
    j["config"] = cfg_;
    j["config_hash"] = "fnv1a64:" + hex64(fnv1a64(cfg_.dump()));
    j["inputs"] = inputs_;
    j["outputs"] = json::array();
    for (const auto& p : outputs_) {
      std::ifstream in(p, std::ios::binary);
      std::ostringstream s;
      s << in.rdbuf();
      j["outputs"].push_back({{"path", fs::relative(p, dir_).string()}, {"fnv1a64", hex64(fnv1a64(s.str()))}});
    }
    j["summary"] = summary_;
    step("total", start_);
    j["timings_ms"] = timings_;
    std::ofstream out(dir_ / "manifest.json");
    if (!out) throw IoError("cannot write " + (dir_ / "manifest.json").string());
    out << j.dump(2) << '\n';
  }

 private:
  json cfg_;
  std::string command_;
  fs::path dir_;
  Clock::time_point start_;
  std::vector<std::string> inputs_;
  std::vector<fs::path> outputs_;
  std::map<std::string, double> timings_;
  json summary_ = json::object();
};

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw IoError(what + " is not configured");
  if (!fs::exists(p)) throw IoError(what + " not found: " + p.string());
}

BinaryMask load_mask(const StructureInput& s) {
  require_file(s.mask, "mask of structure \"" + s.name + "\"");
  const BinaryMask m = threshold_mask(load_volume(s.mask), 0.5);
  if (count(m) == 0) throw IoError(s.mask.string() + ": mask is empty");
  return m;
}

SkeletonOptions skeleton_options(const RunConfig& c) {
  SkeletonOptions o;
  o.tau_flux = c.tau_flux;
  o.radius_mm = c.flux_radius;
  o.num_dirs = c.num_dirs;
  o.upsample = c.upsample;
  o.upsample_factor = c.upsample_factor;
  return o;
}

FeatureOptions feature_options(const RunConfig& c) {
  FeatureOptions o;
  o.cutoff = c.cutoff;
  o.span = c.loess_span;
  o.min_support = c.min_support;
  return o;
}

fs::path stage_dir(const RunConfig& c, const char* stage) { return c.out / stage; }

// Surfaces and grids as written by fit-surface.
std::vector<StructureModel> load_structures(const RunConfig& c, Manifest& m) {
  std::vector<StructureModel> out;
  int offset = 0;
  for (const auto& s : c.structures) {
    const fs::path surf = stage_dir(c, "surface") / (s.name + ".surface.json");
    const fs::path grid = stage_dir(c, "surface") / (s.name + ".grid.csv");
    require_file(surf, "surface of \"" + s.name + "\" (run fit-surface first)");
    require_file(grid, "reference grid of \"" + s.name + "\" (run fit-surface first)");
    StructureModel sm{load_mask(s), read_surface_json(surf), read_grid_csv(grid)};
    sm.grid.structure = s.name;
    if (sm.grid.id_offset != offset || static_cast<int>(sm.grid.size()) != s.grid_count)
      throw IoError(grid.string() + ": grid does not match the configured structures (rerun fit-surface)");
    offset += s.grid_count;
    m.input(s.mask);
    m.input(surf);
    m.input(grid);
    out.push_back(std::move(sm));
  }
  return out;
}

std::vector<SubjectRecord> load_records(const RunConfig& c, Manifest& m) {
  require_file(c.covariates, "covariates CSV");
  m.input(c.covariates);
  auto records = read_records_csv(c.covariates);
  if (records.empty()) throw IoError(c.covariates.string() + ": no subjects");
  for (const auto& r : records)
    if (r.stage > c.max_stage)
      throw IoError(c.covariates.string() + ": subject " + r.subject_id + " has stage above max_stage");
  return records;
}

fs::path subject_volume_path(const RunConfig& c, const std::string& id) {
  for (const char* ext : {".json", ".nii.gz", ".nii"}) {
    const fs::path p = c.subjects_dir / (id + ext);
    if (fs::exists(p)) return p;
  }
  throw IoError("no volume for subject " + id + " in " + c.subjects_dir.string());
}

}  // namespace

// ---------------------------------------------------------------- commands

void cmd_skeletonize(const RunConfig& c) {
  Manifest m(c, "skeletonize", stage_dir(c, "skeleton"));
  json counts = json::object();
  for (const auto& s : c.structures) {
    const auto t0 = Clock::now();
    const BinaryMask mask = load_mask(s);
    m.input(s.mask);
    const MedialSkeleton sk = skeletonize(mask, skeleton_options(c));
    if (sk.size() == 0) throw ComputeError("skeletonize: no medial points for \"" + s.name + "\" (tau_flux too strict?)");
    const fs::path csv_path = stage_dir(c, "skeleton") / (s.name + ".csv");
    const fs::path ply_path = stage_dir(c, "skeleton") / (s.name + ".ply");
    write_skeleton_csv(sk, csv_path);
    write_point_ply(sk.points, ply_path);
    m.output(csv_path);
    m.output(ply_path);
    counts[s.name] = sk.size();
    m.step(s.name, t0);
  }
  m.summary()["skeleton_points"] = counts;
  m.write();
}

void cmd_fit_surface(const RunConfig& c) {
  Manifest m(c, "fit-surface", stage_dir(c, "surface"));
  int offset = 0;
  for (const auto& s : c.structures) {
    const auto t0 = Clock::now();
    const fs::path sk_path = stage_dir(c, "skeleton") / (s.name + ".csv");
    require_file(sk_path, "skeleton of \"" + s.name + "\" (run skeletonize first)");
    m.input(sk_path);
    const BinaryMask mask = load_mask(s);
    const MedialSkeleton thin = thin_skeleton(read_skeleton_csv(sk_path), default_thin_cell(mask.geom));
    FitOptions fo;
    fo.lambda = c.tps_lambda;
    fo.max_iter = c.fit_max_iter;
    const PrincipalSurface surface = iterate_fit(thin, fo);
    const ReferenceGrid grid = sample_reference_grid(surface, s.grid_count, s.name, offset);
    offset += s.grid_count;

    const CurvatureReport curv = gaussian_curvature(surface, grid.params);
    const CurvatureVerdict verdict = curvature_filter(curv, default_kmax(mask.geom.spacing));
    const fs::path curv_path = stage_dir(c, "surface") / (s.name + ".curvature.csv");
    {
      csv::Writer w(curv_path, {"anchor_id", "K", "valid", "offender"});
      std::set<std::size_t> bad(verdict.offenders.begin(), verdict.offenders.end());
      for (std::size_t a = 0; a < grid.size(); ++a) {
        w << grid.anchor_id(a) << curv.points[a].K << (curv.points[a].valid ? 1 : 0) << (bad.count(a) ? 1 : 0);
        w.end_row();
      }
    }
    m.output(curv_path);
    if (!verdict.accept) {
      std::string ids;
      for (std::size_t i = 0; i < verdict.offenders.size() && i < 20; ++i)
        ids += (i ? ", " : "") + std::to_string(grid.anchor_id(verdict.offenders[i]));
      if (verdict.offenders.size() > 20) ids += ", ...";
      m.summary()["rejected"] = s.name;
      m.write();
      throw ComputeError("fit-surface: \"" + s.name + "\" rejected by the curvature filter (|K| > " +
                         csv::fmt(verdict.kmax) + ") at anchors " + ids + "; see " + curv_path.string());
    }
    const fs::path base = stage_dir(c, "surface") / s.name;
    write_surface_json(surface, base.string() + ".surface.json");
    write_grid_csv(grid, base.string() + ".grid.csv");
    write_surface_obj(surface, base.string() + ".obj");
    for (const char* ext : {".surface.json", ".grid.csv", ".obj"}) m.output(base.string() + ext);
    m.summary()[s.name] = {{"lambda", surface.lambda()},
                           {"iterations", surface.log.size()},
                           {"converged", surface.converged},
                           {"skeleton_points", thin.size()},
                           {"normal_sign_flips", grid.sign_flips}};
    m.step(s.name, t0);
  }
  m.write();
}

void cmd_features(const RunConfig& c) {
  Manifest m(c, "features", stage_dir(c, "features"));
  const auto structures = load_structures(c, m);
  const auto records = load_records(c, m);
  if (c.subjects_dir.empty()) throw IoError("subjects_dir is not configured");
  m.input(c.subjects_dir);
  const FeatureOptions fo = feature_options(c);
  SurfaceFeatureTable table;
  std::vector<ProjectedSample> samples;
  auto t0 = Clock::now();
  const FeatureExtractor fx(structures, fo);
  m.step("project_structures", t0);
  t0 = Clock::now();
  for (const auto& r : records) {
    const SubjectVolume sv{r.subject_id, load_volume(subject_volume_path(c, r.subject_id))};
    for (const auto& st : structures)
      if (sv.suvr.geom != st.mask.geom)
        throw IoError("subject " + r.subject_id + ": volume geometry differs from the mask of \"" + st.grid.structure + "\"");
    auto rows = fx.extract(sv, &samples);
    table.rows.insert(table.rows.end(), rows.begin(), rows.end());
  }
  m.step("subjects", t0);
  const fs::path f = stage_dir(c, "features") / "features.csv";
  const fs::path s = stage_dir(c, "features") / "samples.csv";
  write_feature_csv(table, f);
  write_samples_csv(samples, s);
  m.output(f);
  m.output(s);
  std::size_t covered = 0;
  for (const auto& row : table.rows) covered += row.covered;
  m.summary()["subjects"] = records.size();
  m.summary()["rows"] = table.rows.size();
  m.summary()["covered_rows"] = covered;
  m.summary()["samples"] = samples.size();
  m.write();
}

void cmd_regress(const RunConfig& c) {
  const fs::path dir = stage_dir(c, "regress");
  Manifest m(c, "regress", dir);
  const auto records = load_records(c, m);
  const fs::path f = stage_dir(c, "features") / "features.csv";
  require_file(f, "feature table (run features first)");
  m.input(f);
  AnalysisOptions ao;
  ao.covariates = c.model_covariates;
  ao.subtypes = c.subtypes;
  ao.p_min = c.p_min;
  const auto t0 = Clock::now();
  const AnalysisResult res = pointwise_analysis(read_feature_csv(f), records, ao);
  m.step("fit", t0);
  write_analysis(res, dir);
  m.output(dir / "design.json");
  json significant = json::object();
  for (Model model : kAllModels) {
    m.output(dir / ("fits_" + to_string(model) + ".csv"));
    m.summary()["estimable"][to_string(model)] = res.estimable_count(model);
    for (const auto& term : res.design.columns()) {
      if (term == "intercept") continue;
      int n = 0;
      for (const auto& a : res.anchors)
        if (const Coefficient* co = a.fits[static_cast<int>(model)].find(term); co && co->p_bh && *co->p_bh <= c.bh_alpha)
          ++n;
      significant[to_string(model)][term] = n;
    }
  }
  int clipped = 0;
  for (const auto& a : res.anchors) clipped += a.n_clipped;
  m.summary()["significant_at_alpha"] = significant;
  m.summary()["anchors"] = res.anchors.size();
  m.summary()["ipw_clipped_weights"] = clipped;
  m.write();
}

void cmd_contaminate(const RunConfig& c) {
  const fs::path dir = stage_dir(c, "contaminate");
  Manifest m(c, "contaminate", dir);
  const auto records = load_records(c, m);
  const fs::path s = stage_dir(c, "features") / "samples.csv";
  require_file(s, "projected samples (run features first)");
  m.input(s);
  ContaminationOptions co;
  co.absolute_distance = c.absolute_distance;
  co.min_samples = c.contamination_min_samples;
  const auto t0 = Clock::now();
  const auto fits = subject_contamination(read_samples_csv(s), co);
  std::map<std::string, std::string> group;
  static const char* kDx[] = {"CN", "MCI", "AD"};
  for (const auto& r : records)
    group[r.subject_id] = c.contamination_group == "diagnosis" ? kDx[r.diagnosis] : "subtype_" + std::to_string(r.subtype);
  const auto rows = contamination_group(fits, group);
  m.step("fit", t0);
  write_subject_contamination_csv(fits, dir / "subject.csv");
  write_group_contamination_csv(rows, dir / "group.csv");
  m.output(dir / "subject.csv");
  m.output(dir / "group.csv");
  std::map<std::string, std::array<int, 2>> sig;
  for (const auto& r : rows) {
    auto& n = sig[r.group];
    n[0] += r.p_pos_bh && *r.p_pos_bh <= c.bh_alpha;
    n[1] += r.p_neg_bh && *r.p_neg_bh <= c.bh_alpha;
  }
  for (const auto& [g, n] : sig) m.summary()["significant_at_alpha"][g] = {{"positive", n[0]}, {"negative", n[1]}};
  m.summary()["subject_fits"] = fits.size();
  m.write();
}

namespace {

SubjectRecord prediction_covariates(const PredictionConfig& p, int subtype) {
  if (p.preset == "paper-cohort") return paper_cohort_preset(subtype);
  SubjectRecord r;
  r.subject_id = "custom";
  r.age = p.age;
  r.sex = parse_sex(p.sex);
  r.diagnosis = parse_diagnosis(p.diagnosis);
  r.subtype = subtype;
  r.stage = 1;
  return r;
}

std::string stage_tag(int stage) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d", stage);
  return buf;
}

}  // namespace

void cmd_predict(const RunConfig& c) {
  const fs::path dir = stage_dir(c, "predict");
  Manifest m(c, "predict", dir);
  const auto records = load_records(c, m);
  const fs::path rdir = stage_dir(c, "regress");
  const fs::path f = stage_dir(c, "features") / "features.csv";
  require_file(rdir / "design.json", "regression results (run regress first)");
  require_file(f, "feature table (run features first)");
  m.input(rdir);
  m.input(f);
  const AnalysisResult fits = read_analysis(rdir);
  const SurfaceFeatureTable table = read_feature_csv(f);
  const auto structures = load_structures(c, m);

  std::vector<int> subtypes = c.prediction.subtypes.empty() ? fits.design.subtypes() : c.prediction.subtypes;
  json summary = json::object();
  const auto t0 = Clock::now();
  for (int st : subtypes) {
    const std::string tag = "subtype_" + std::to_string(st);
    json& js = summary[tag];
    const CoverageScores sc = coverage_scores(fits, table, records, st);
    std::optional<double> youden;
    int n_pos = 0;
    for (bool b : sc.labels) n_pos += b;
    js["n_pos"] = n_pos;
    js["n_neg"] = static_cast<int>(sc.labels.size()) - n_pos;
    if (n_pos > 0 && n_pos < static_cast<int>(sc.labels.size())) {
      const RocCurve roc = roc_auc(sc.scores, sc.labels);
      youden = youden_threshold(roc);
      write_roc_csv(roc, dir / ("roc_" + tag + ".csv"));
      m.output(dir / ("roc_" + tag + ".csv"));
      js["auc"] = roc.auc;
      js["youden_threshold"] = *youden;
    } else {
      js["auc"] = nullptr;
      js["youden_threshold"] = nullptr;
      std::cerr << "warning: " << tag << ": coverage labels contain a single class; no ROC curve\n";
    }
    const std::optional<double> threshold = c.prediction.threshold ? c.prediction.threshold : youden;
    if (!threshold) throw ComputeError("predict: " + tag + " has no Youden threshold; set prediction.threshold");
    js["threshold"] = *threshold;
    const SubjectRecord cov = prediction_covariates(c.prediction, st);
    js["covariates"] = {{"age", cov.age}, {"sex", cov.sex == Sex::kM ? "M" : "F"}, {"diagnosis", cov.diagnosis}};
    for (int stage : c.prediction.stages) {
      const PredictedShape shape = predict_shape(fits, cov, stage, *threshold, structures);
      for (const auto& w : shape.warnings) std::cerr << "warning: " << tag << ": " << w << '\n';
      const std::string base = "shape_" + tag + "_stage_" + stage_tag(stage);
      write_prediction_csv(shape, dir / (base + ".csv"));
      write_boundary_ply(shape.geometry, dir / (base + ".ply"));
      m.output(dir / (base + ".csv"));
      m.output(dir / (base + ".ply"));
      js["included_anchors"][std::to_string(stage)] = shape.included_count();
      if (!shape.warnings.empty()) js["warnings"].push_back(shape.warnings.front());
    }
  }
  m.step("predict", t0);
  {
    std::ofstream out(dir / "summary.json");
    if (!out) throw IoError("cannot write " + (dir / "summary.json").string());
    out << summary.dump(2) << '\n';
  }
  m.output(dir / "summary.json");
  m.summary() = summary;
  m.write();
}

void cmd_phantom(const RunConfig& c) {
  const fs::path dir = stage_dir(c, "phantom");
  Manifest m(c, "phantom", dir);
  VolumeCohortSpec spec;
  spec.cohort.seed = c.seed;
  spec.cohort.n_subjects = c.phantom_subjects;
  spec.cohort.max_stage = c.max_stage;
  spec.names.clear();
  for (const auto& s : c.structures) spec.names.push_back(s.name);
  if (spec.names.size() != spec.structures.size())
    throw IoError("phantom: the synthetic dataset has " + std::to_string(spec.structures.size()) +
                  " structures; configure exactly that many");
  const auto t0 = Clock::now();
  const VolumeCohort vc = generate_volume_cohort(spec);
  write_volume_cohort(vc, dir);
  m.step("generate", t0);
  for (const auto& n : spec.names) m.output(dir / "masks" / (n + ".json"));
  m.output(dir / "covariates.csv");

  RunConfig run = c;
  for (auto& s : run.structures) s.mask = "masks/" + s.name + ".json";
  run.subjects_dir = "subjects";
  run.covariates = "covariates.csv";
  run.out = "..";
  // The planted boundary gradient is symmetric about the medial sheet.
  run.absolute_distance = true;
  run.threads = 0;
  json cfg = to_json(run);
  {
    std::ofstream out(dir / "config.json");
    if (!out) throw IoError("cannot write " + (dir / "config.json").string());
    out << cfg.dump(2) << '\n';
  }
  m.output(dir / "config.json");
  m.summary()["subjects"] = vc.records.size();
  m.summary()["dims"] = {vc.structures.front().geom.dims.x(), vc.structures.front().geom.dims.y(),
                         vc.structures.front().geom.dims.z()};
  for (std::size_t s = 0; s < vc.structures.size(); ++s) m.summary()["voxels"][vc.names[s]] = count(vc.structures[s]);
  m.write();
}

void cmd_run(const RunConfig& c) {
  cmd_skeletonize(c);
  cmd_fit_surface(c);
  cmd_features(c);
  cmd_regress(c);
  cmd_contaminate(c);
  cmd_predict(c);
}

}  // namespace medrep::cli
