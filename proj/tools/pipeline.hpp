#ifndef MEDREP_TOOLS_PIPELINE_HPP_
#define MEDREP_TOOLS_PIPELINE_HPP_

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace medrep::cli {

struct StructureInput {
  std::string name;
  std::filesystem::path mask;
  int grid_count = 0;
};

struct PredictionConfig {
  std::string preset = "paper-cohort";
  // Used when preset is "custom".
  double age = 75.5;
  std::string sex = "M";
  std::string diagnosis = "MCI";
  std::vector<int> stages{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::optional<double> threshold;  // empty: Youden per subtype
  std::vector<int> subtypes;        // empty: every subtype in the design
};

struct RunConfig {
  std::vector<StructureInput> structures{{"left", {}, 235}, {"right", {}, 262}};
  std::filesystem::path subjects_dir;
  std::filesystem::path covariates;
  std::filesystem::path out = "medrep_out";

  double cutoff = 2.0;
  double tau_flux = -0.2;
  double flux_radius = 0.0;  // <= 0: derived from the mask
  int num_dirs = 64;
  bool upsample = true;
  int upsample_factor = 3;
  std::optional<double> tps_lambda;  // empty: "gcv"
  int fit_max_iter = 25;

  double loess_span = 0.3;
  int min_support = 5;

  std::vector<std::string> model_covariates{"age", "sex", "diagnosis", "stage"};
  std::vector<int> subtypes;
  int max_stage = 20;
  double p_min = 0.01;
  double bh_alpha = 0.05;

  std::string contamination_group = "diagnosis";  // or "subtype"
  bool absolute_distance = false;
  int contamination_min_samples = 3;

  PredictionConfig prediction;

  int phantom_subjects = 300;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

// Relative paths resolve against the config file's directory. Unknown keys
// and out-of-range values raise IoError.
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
nlohmann::json to_json(const RunConfig& cfg);
void validate(const RunConfig& cfg);

std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

// Each command writes under cfg.out/<stage>/ and leaves a manifest.json there.
void cmd_skeletonize(const RunConfig& cfg);
void cmd_fit_surface(const RunConfig& cfg);
void cmd_features(const RunConfig& cfg);
void cmd_regress(const RunConfig& cfg);
void cmd_contaminate(const RunConfig& cfg);
void cmd_predict(const RunConfig& cfg);
// Synthetic dataset under cfg.out/phantom plus a config.json that runs the
// pipeline on it with outputs in cfg.out.
void cmd_phantom(const RunConfig& cfg);
void cmd_run(const RunConfig& cfg);

}  // namespace medrep::cli

#endif  // MEDREP_TOOLS_PIPELINE_HPP_
