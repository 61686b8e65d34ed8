// Command-line driver: one subcommand per pipeline stage.
#include "rmgms/experiments.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <iostream>

using namespace rmgms;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  bool paper = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config, "INI configuration file")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "override the master seed");
  sub->add_option("-o,--out", c.out, "output directory");
  sub->add_flag("--paper-scale", c.paper, "use the full-scale study sizes");
}

ExperimentConfig resolve(const Common& c, CLI::App* sub) {
  ExperimentConfig cfg = load_config(c.config);
  if (sub->count("--seed")) cfg.seed = c.seed;
  if (!c.out.empty()) cfg.out = c.out;
  if (c.paper) cfg = paper_scale(cfg);
  validate(cfg);
  return cfg;
}

// Failed stages still leave a manifest with the failure record.
int execute(const std::string& stage, const Common& common, CLI::App* sub,
            const std::function<StageResult(const ExperimentConfig&)>& fn) {
  ExperimentConfig cfg;
  try {
    cfg = resolve(common, sub);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  try {
    const double t0 = wall_seconds();
    StageResult r = fn(cfg);
    r.manifest.timings["total"] = wall_seconds() - t0;
    const std::string path = write_stage(cfg, r);
    for (const auto& [name, t] : r.tables) std::cout << name << ": " << t.rows().size() << " rows\n";
    std::cout << "manifest: " << path << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << stage << ": " << e.what() << '\n';
    try {
      Manifest m;
      m.experiment = cfg.experiment + "." + stage;
      m.config_hash = config_hash(cfg);
      m.seed = cfg.seed;
      m.ok = false;
      m.failure = e.what();
      std::filesystem::create_directories(cfg.out);
      write_manifest(cfg.out, m);
    } catch (const std::exception& e2) {
      std::cerr << "error: cannot write failure manifest: " << e2.what() << '\n';
    }
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reduced mixed GMsFEM toolkit"};
  app.require_subcommand(1);
  struct Stage {
    const char* name;
    const char* help;
    std::function<StageResult(const ExperimentConfig&)> fn;
  };
  const std::vector<Stage> stages{
      {"fine-solve", "fine mixed solve at one drawn parameter", run_fine_solve},
      {"offline", "greedy or random selection, snapshot library and reduced basis", run_offline_stage},
      {"online", "reduced solves on the test set", run_online_stage},
      {"compare", "GBOCV, GPOD, RBOCV and RPOD error curves", run_compare},
      {"separate", "LSMOS and STAOMP surrogates of the reduced model", run_separate},
      {"twophase", "two-phase ensemble and its surrogates", run_twophase},
      {"run", "full pipeline of the configured experiment", static_cast<StageResult (*)(const ExperimentConfig&)>(run)},
  };
  std::vector<Common> commons(stages.size());
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    subs.push_back(app.add_subcommand(stages[i].name, stages[i].help));
    add_common(subs.back(), commons[i]);
  }
  std::vector<std::string> manifests;
  std::string report_out = "report";
  auto* rep = app.add_subcommand("report", "merge result manifests");
  rep->add_option("manifests", manifests, "manifest.json files")->required()->check(CLI::ExistingFile);
  rep->add_option("-o,--out", report_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  if (rep->parsed()) {
    try {
      const Manifest m = report(manifests, report_out);
      std::cout << "merged " << manifests.size() << " manifest(s): " << m.tables.size() << " tables -> "
                << report_out << '\n';
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "error: report: " << e.what() << '\n';
      return 1;
    }
  }
  for (std::size_t i = 0; i < stages.size(); ++i)
    if (subs[i]->parsed()) return execute(stages[i].name, commons[i], subs[i], stages[i].fn);
  return 2;
}
