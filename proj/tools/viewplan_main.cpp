// viewplan: scenario generation, benchmark trials and report emission for
// the occlusion-aware viewpoint planner.

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <vector>

#include "vpp/config.hpp"
#include "vpp/evaluation.hpp"
#include "vpp/scene.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;    // usage or config error
constexpr int kExitRuntime = 2;  // runtime failure
constexpr int kExitStalled = 3;  // some trial stalled before 10% of the budget

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << content;
  }
  fs::rename(tmp, path);
}

int cmd_generate(int scenario, std::uint64_t seed, const std::string& out) {
  vpp::Scene scene = vpp::generate_scene(scenario, seed);
  std::ostringstream body;
  vpp::export_scene(body, scene, seed);
  write_file_atomic(out, body.str());
  std::cout << "fruit_count " << scene.fruits.size() << "\n";
  return kExitOk;
}

struct TrialTask {
  vpp::TrialParams params;
  vpp::TrialRecord record;
  std::string log_text;
  std::string map_text;
};

int cmd_run(const std::string& config_path, int jobs, const std::string& out_dir_override) {
  std::ifstream cfg_stream(config_path);
  if (!cfg_stream) throw vpp::ConfigError("cannot open config file: " + config_path);
  vpp::RunConfig cfg = vpp::parse_run_config(cfg_stream);
  if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
  if (cfg.out_dir.empty()) {
    const char* env = std::getenv("VIEWPLAN_OUT_DIR");
    cfg.out_dir = env != nullptr && *env != '\0' ? env : ".";
  }
  const std::string snapshot = vpp::serialize_run_config(cfg);

  std::vector<TrialTask> tasks;
  for (const std::string& planner : cfg.planners) {
    for (int t = 0; t < cfg.trials; ++t) {
      TrialTask task;
      task.params = cfg.base;
      task.params.planner_id = planner;
      task.params.seed = cfg.seed_base + static_cast<std::uint64_t>(t);
      task.params.config_snapshot = snapshot;
      tasks.push_back(std::move(task));
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      std::ostringstream log, map_snapshot;
      tasks[i].record =
          vpp::run_trial(tasks[i].params, &log, cfg.export_final_map ? &map_snapshot : nullptr);
      tasks[i].log_text = log.str();
      tasks[i].map_text = map_snapshot.str();
    }
  };
  jobs = std::max(1, jobs);
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  fs::create_directories(fs::path(cfg.out_dir) / "trials");
  std::vector<vpp::TrialRecord> records;
  bool early_stall = false;
  for (TrialTask& task : tasks) {
    records.push_back(task.record);
    const auto& last = task.record.samples.back();
    if (task.record.stalled && last.plan_length < 0.1 * cfg.base.budget) early_stall = true;
    fs::path trial_dir = fs::path(cfg.out_dir) / "trials";
    std::string stem = task.params.planner_id + "_seed" + std::to_string(task.params.seed);
    write_file_atomic(trial_dir / (stem + ".log"), task.log_text);
    if (cfg.export_final_map) write_file_atomic(trial_dir / (stem + ".map"), task.map_text);
  }

  std::ostringstream results;
  vpp::write_results(results, records);
  write_file_atomic(fs::path(cfg.out_dir) / "results.csv", results.str());

  vpp::ComparisonSummary sum = vpp::summarize(records);
  std::ostringstream summary;
  vpp::write_summary(summary, sum);
  write_file_atomic(fs::path(cfg.out_dir) / "summary.txt", summary.str());
  write_file_atomic(fs::path(cfg.out_dir) / "config_snapshot.txt", snapshot);

  std::cout << "wrote " << (fs::path(cfg.out_dir) / "results.csv").string() << "\n"
            << "wrote " << (fs::path(cfg.out_dir) / "summary.txt").string() << "\n";
  for (const vpp::GroupStats& g : sum.groups) {
    std::printf("%-14s n=%d  det_rois %.2f +- %.2f  cov_vol %.3f +- %.3f\n", g.planner.c_str(),
                g.n, g.rois_mean, g.rois_std, g.vol_mean, g.vol_std);
  }
  return early_stall ? kExitStalled : kExitOk;
}

int cmd_report(const std::string& results_path, std::string curves_out) {
  std::ifstream is(results_path);
  if (!is) throw std::runtime_error("cannot open results file: " + results_path);
  std::vector<vpp::TrialRecord> trials = vpp::read_results(is);
  vpp::ComparisonSummary sum = vpp::summarize(trials);

  std::printf("%-16s", "");
  for (const auto& g : sum.groups) std::printf("  %20s", g.planner.c_str());
  std::printf("\n");
  std::printf("%-16s", "# Det. ROIs");
  for (const auto& g : sum.groups) {
    char cell[64];
    std::snprintf(cell, sizeof(cell), "%.1f +- %.1f", g.rois_mean, g.rois_std);
    std::printf("  %20s", cell);
  }
  std::printf("\n");
  std::printf("%-16s", "Cov. ROI vol.");
  for (const auto& g : sum.groups) {
    char cell[64];
    std::snprintf(cell, sizeof(cell), "%.2f +- %.2f", g.vol_mean, g.vol_std);
    std::printf("  %20s", cell);
  }
  std::printf("\n\none-sided Mann-Whitney U tests:\n");
  for (const auto& t : sum.tests) {
    std::printf("  %s > %s: detected_rois p=%.4g, covered_volume p=%.4g\n", t.greater.c_str(),
                t.lesser.c_str(), t.p_rois, t.p_vol);
  }
  std::printf("\n# machine-readable\n");
  std::ostringstream machine;
  vpp::write_summary(machine, sum);
  std::cout << machine.str();

  // per-plan-length averaged curves for external plotting
  if (curves_out.empty()) curves_out = results_path + ".curves.csv";
  double max_len = 0.0;
  for (const auto& t : trials) max_len = std::max(max_len, t.samples.back().plan_length);
  std::ostringstream curves;
  curves << "planner,plan_length_m,mean_detected_rois,mean_covered_volume\n";
  std::vector<std::string> planners;
  for (const auto& g : sum.groups) planners.push_back(g.planner);
  const int kGridSteps = 60;
  char buf[200];
  for (const std::string& planner : planners) {
    for (int gi = 0; gi <= kGridSteps; ++gi) {
      double x = max_len * gi / kGridSteps;
      double sum_r = 0.0, sum_v = 0.0;
      int n = 0;
      for (const auto& t : trials) {
        if (t.planner_id != planner) continue;
        const vpp::TrialSample* at = &t.samples.front();
        for (const auto& s : t.samples) {
          if (s.plan_length <= x) at = &s;
        }
        sum_r += at->detected_rois;
        sum_v += at->covered_volume;
        ++n;
      }
      if (n == 0) continue;
      std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g\n", planner.c_str(), x, sum_r / n,
                    sum_v / n);
      curves << buf;
    }
  }
  write_file_atomic(curves_out, curves.str());
  std::cerr << "curve data written to " << curves_out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"occlusion-aware viewpoint planning benchmark"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "generate a scenario scene file");
  int scenario = 1;
  std::uint64_t seed = 0;
  std::string out;
  gen->add_option("--scenario", scenario, "scenario id (1, 2 or 3)")->required();
  gen->add_option("--seed", seed, "scene seed");
  gen->add_option("--out", out, "output scene file")->required();

  auto* run = app.add_subcommand("run", "run benchmark trials from a config file");
  std::string config_path;
  int jobs = 1;
  std::string out_dir_override;
  run->add_option("--config", config_path, "run config file")->required();
  run->add_option("--jobs", jobs, "parallel trial workers");
  run->add_option("--out-dir", out_dir_override, "override output directory");

  auto* rep = app.add_subcommand("report", "summarize a results file");
  std::string results_path, curves_out;
  rep->add_option("--results", results_path, "results csv")->required();
  rep->add_option("--curves-out", curves_out, "curve data output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      if (scenario < 1 || scenario > 3) {
        std::cerr << "error: bad scenario id " << scenario << " (valid ids: 1, 2, 3)\n";
        return kExitUsage;
      }
      return cmd_generate(scenario, seed, out);
    }
    if (run->parsed()) return cmd_run(config_path, jobs, out_dir_override);
    if (rep->parsed()) return cmd_report(results_path, curves_out);
  } catch (const vpp::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
