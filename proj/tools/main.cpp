#include "pipeline.hpp"

#include "medrep/parallel.hpp"
#include "medrep/types.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>

int main(int argc, char** argv) {
  using namespace medrep;
  CLI::App app{"medrep: medial surface representation and regression of regional PET signal"};
  app.require_subcommand(1);
  app.set_version_flag("--version", MEDREP_VERSION);

  std::string config_path, out;
  unsigned threads = 0;
  std::uint64_t seed = 0;

  const std::map<std::string, std::pair<std::string, std::function<void(const cli::RunConfig&)>>> commands{
      {"skeletonize", {"medial skeleton of each template mask", cli::cmd_skeletonize}},
      {"fit-surface", {"principal surface, reference grid and curvature check", cli::cmd_fit_surface}},
      {"features", {"per-subject coverage, SUVR and thickness at every anchor", cli::cmd_features}},
      {"regress", {"two-stage IPW regression per anchor", cli::cmd_regress}},
      {"contaminate", {"SUVR-distance slopes per subject and group tests", cli::cmd_contaminate}},
      {"predict", {"ROC per subtype and predicted shapes across stages", cli::cmd_predict}},
      {"phantom", {"synthetic volumetric cohort and a config that runs it", cli::cmd_phantom}},
      {"run", {"skeletonize through predict in one go", cli::cmd_run}},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", config_path, "JSON config")->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output root (overrides the config)");
    sub->add_option("--threads", threads, "worker threads, 0 = all cores");
    sub->add_option("--seed", seed, "random seed (overrides the config)");
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Error& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    cli::RunConfig cfg;
    if (!config_path.empty()) cfg = cli::load_config(config_path);
    for (const auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      if (sub->count("--out")) cfg.out = out;
      if (sub->count("--threads")) cfg.threads = threads;
      if (sub->count("--seed")) cfg.seed = seed;
      cli::validate(cfg);
      set_thread_count(cfg.threads);
      commands.at(name).second(cfg);
    }
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ComputeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
