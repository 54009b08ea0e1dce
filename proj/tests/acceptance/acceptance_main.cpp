// Acceptance suite: one pass/fail line per criterion. Exit code is the
// number of failed criteria.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "support/oracles.hpp"
#include "support/scenes.hpp"
#include "vpp/config.hpp"
#include "vpp/evaluation.hpp"
#include "vpp/mts.hpp"
#include "vpp/planner.hpp"

using namespace vpp;
namespace fs = std::filesystem;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& msg) {
    if (!cond) {
      ok = false;
      if (!detail.empty()) detail += "; ";
      detail += msg;
    }
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<TrialRecord> run_trials_parallel(const TrialParams& base, int scenario,
                                             int trials_per_planner, int jobs) {
  std::vector<TrialParams> tasks;
  for (const char* planner : {"combined", "global_only"}) {
    for (int t = 0; t < trials_per_planner; ++t) {
      TrialParams p = base;
      p.scenario = scenario;
      p.planner_id = planner;
      p.seed = 1000 + static_cast<std::uint64_t>(t);
      tasks.push_back(p);
    }
  }
  std::vector<TrialRecord> records(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      records[i] = run_trial(tasks[i]);
    }
  };
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return records;
}

// --- criterion 1 -----------------------------------------------------------

Check criterion_least_squares() {
  Check c;
  DirectionMatrix v = CameraArrayConfig{}.directions();
  Rng rng(160001);
  for (int i = 0; i < 1000; ++i) {
    Eigen::VectorXd df(8);
    for (int k = 0; k < 8; ++k) df(k) = rng.uniform(-0.5, 0.5);
    Vec3 got = estimate_gradient(v, df);
    Vec3 want = oracle::svd_gradient(v, df);
    double rel = (got - want).norm() / std::max(1e-30, want.norm());
    c.require(rel <= 1e-8, "svd mismatch rel=" + std::to_string(rel));
    if (!c.ok) break;
  }
  for (int i = 0; i < 200 && c.ok; ++i) {
    Vec3 g0(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    Eigen::VectorXd df = v * g0;
    c.require((estimate_gradient(v, df) - g0).norm() <= 1e-10, "consistent recovery drift");
  }
  return c;
}

// --- criterion 2 -----------------------------------------------------------

Check criterion_info_gain() {
  Check c;
  c.require(proximity_weight(0.0, 0.3) == 1.0, "w(0) != 1");
  c.require(proximity_weight(0.3, 0.3) == 0.5, "w(d_max) != 0.5");
  c.require(proximity_weight(0.15, 0.3) == 0.75, "w(d_max/2) != 0.75");

  Rng rng(160002);
  PlannerConfig cfg;
  cfg.sensor_range = 0.12;
  cfg.d_max = 0.04;
  CameraModel cam;
  for (int trial = 0; trial < 50; ++trial) {
    RoiOcTree map;
    for (int x = 0; x < 5; ++x) {
      for (int y = 0; y < 5; ++y) {
        for (int z = 0; z < 5; ++z) {
          double u = rng.uniform();
          if (u < 0.4) continue;
          if (u < 0.7) {
            map.set_logodds({x, y, z}, -1.0, 0.0);
          } else if (u < 0.9) {
            map.set_logodds({x, y, z}, 1.0, -1.0);
          } else {
            map.set_logodds({x, y, z}, 1.0, 1.0);
          }
        }
      }
    }
    Vec3 eye(rng.uniform(-0.08, -0.03), rng.uniform(0.0, 0.05), rng.uniform(0.0, 0.05));
    Pose pose = look_at(eye, {0.025, 0.025, 0.025});
    double got = info_gain(map, pose, cam, cfg);
    double want = oracle::info_gain(map, pose, cam, cfg);
    c.require(std::abs(got - want) <= 1e-12,
              "ig mismatch " + std::to_string(got - want) + " at trial " +
                  std::to_string(trial));
    if (!c.ok) break;
  }
  return c;
}

// --- criterion 3 -----------------------------------------------------------

Check criterion_frontiers() {
  Check c;
  Rng rng(160003);
  for (int trial = 0; trial < 20; ++trial) {
    RoiOcTree map;
    for (int x = 0; x < 10; ++x) {
      for (int y = 0; y < 10; ++y) {
        for (int z = 0; z < 10; ++z) {
          double u = rng.uniform();
          if (u < 0.35) continue;
          if (u < 0.65) {
            map.set_logodds({x, y, z}, -1.0, 0.0);
          } else if (u < 0.85) {
            map.set_logodds({x, y, z}, 1.2, -0.5);
          } else {
            map.set_logodds({x, y, z}, 1.2, 1.0);
          }
        }
      }
    }
    bool roi_ok = map.roi_frontiers() ==
                  oracle::brute_frontiers(map, {-1, -1, -1}, {10, 10, 10}, true);
    bool explo_ok = map.exploration_frontiers() ==
                    oracle::brute_frontiers(map, {-1, -1, -1}, {10, 10, 10}, false);
    c.require(roi_ok, "roi frontier mismatch at trial " + std::to_string(trial));
    c.require(explo_ok, "exploration frontier mismatch at trial " + std::to_string(trial));
    if (!c.ok) break;
  }
  return c;
}

// --- criterion 4 -----------------------------------------------------------

Check criterion_selection_loop() {
  Check c;
  std::vector<MtsStepResult> mts_script;
  std::vector<std::vector<Viewpoint>> sample_script;
  std::size_t mts_calls = 0, sample_calls = 0;

  auto move_to = [](double x) {
    MtsStepResult r;
    r.kind = MtsStepResult::Kind::Move;
    r.pose.position = {x, 0.0, 0.0};
    return r;
  };
  auto localmax = [] {
    MtsStepResult r;
    r.kind = MtsStepResult::Kind::LocalMax;
    return r;
  };
  auto vp = [](double utility, double tag) {
    Viewpoint v;
    v.utility = utility;
    v.pose.position = {tag, tag, tag};
    return v;
  };

  PlannerHooks hooks;
  hooks.mts = [&](int) { return mts_script.at(mts_calls++); };
  hooks.sample = [&](int) { return sample_script.at(sample_calls++); };
  hooks.try_move = [](const Pose& p) { return p.position.x() < 90.0; };

  PlanState st;
  std::vector<std::string> trace;
  auto record = [&](const PlanAction& a) {
    if (a.kind == PlanActionKind::MtsMove) {
      trace.push_back("mts:" + std::to_string(static_cast<int>(a.pose.position.x())));
    } else if (a.kind == PlanActionKind::GlobalMove) {
      trace.push_back("global:" + std::to_string(static_cast<int>(a.pose.position.x())));
    } else {
      trace.push_back("stalled");
    }
  };

  // hand-derived script: move, delta-below-threshold with unreachable top
  // candidate, two moves to the allowance, skip-MTS + resample, stall
  mts_script.push_back(move_to(1));                       // ep1 -> mts move
  mts_script.push_back(localmax());                       // ep2 -> global
  sample_script.push_back({vp(0.5, 99), vp(0.3, 7)});     // 99 unreachable -> take 7
  mts_script.push_back(move_to(2));                       // ep3
  mts_script.push_back(move_to(3));                       // ep4 (hits maxMoves=2)
  sample_script.push_back({vp(0.04, 1)});                 // ep5 round 0: below thresh
  sample_script.push_back({vp(0.2, 8)});                  // ep5 round 1: resample works
  mts_script.push_back(localmax());                       // ep6
  sample_script.push_back({vp(0.01, 1)});                 // ep6 round 0
  sample_script.push_back({});                            // ep6 round 1 -> stalled

  for (int ep = 0; ep < 6; ++ep) record(plan_episode(st, hooks, 2, 0.05));

  std::vector<std::string> expected{"mts:1", "global:7", "mts:2", "mts:3", "global:8",
                                    "stalled"};
  c.require(trace == expected, "trace mismatch");
  c.require(mts_calls == 5, "mts consulted " + std::to_string(mts_calls) + " times, want 5");
  c.require(sample_calls == 5, "sampler consulted " + std::to_string(sample_calls) +
                                   " times, want 5");
  return c;
}

// --- criterion 5 -----------------------------------------------------------

Check criterion_local_ascent() {
  Check c;
  CameraModel cam;
  DetectionConfig det;
  MtsConfig mts_cfg;

  int accepted = 0, improved = 0, positive = 0, negative = 0;
  double mean_improvement = 0.0;
  for (std::uint64_t s = 0; accepted < 50 && s < 120; ++s) {
    double angle = 2.0 * std::numbers::pi * (static_cast<double>(s % 8) / 8.0);
    auto setup = testsup::make_occluded_fruit(50000 + s, angle);
    MtsStepResult r = mts_step(setup.scene, setup.camera, setup.workspace, CameraArrayConfig{},
                               cam, det, mts_cfg, 0);
    if (r.kind != MtsStepResult::Kind::Move) continue;
    ++accepted;
    LabeledImage img = render(setup.scene, r.pose, cam);
    auto clusters = detect_clusters(img, det.min_cluster_px);
    double f_after = objective(img, select_reference_target(clusters, img.width, img.height));
    double diff = f_after - r.ref_objective;
    mean_improvement += diff;
    if (f_after >= r.ref_objective) ++improved;
    if (diff > 0.0) ++positive;
    if (diff < 0.0) ++negative;
  }
  c.require(accepted == 50, "only " + std::to_string(accepted) + " accepted moves");
  if (accepted > 0) mean_improvement /= accepted;
  c.require(improved >= static_cast<int>(0.8 * accepted),
            "improved " + std::to_string(improved) + "/" + std::to_string(accepted));
  c.require(mean_improvement > 0.0, "mean improvement not positive");
  double p = oracle::sign_test_p(positive, positive + negative);
  c.require(p < 0.05, "sign test p=" + std::to_string(p));
  c.detail = "improved " + std::to_string(improved) + "/" + std::to_string(accepted) +
             ", mean dF=" + std::to_string(mean_improvement) + ", sign p=" + std::to_string(p);
  return c;
}

// --- criteria 6 and 7 ------------------------------------------------------

const PairTest* find_test(const ComparisonSummary& sum, const std::string& greater,
                          const std::string& lesser) {
  for (const PairTest& t : sum.tests) {
    if (t.greater == greater && t.lesser == lesser) return &t;
  }
  return nullptr;
}

Check criterion_scenario3(int jobs) {
  Check c;
  TrialParams base;  // defaults: budget 6 m, 1 cm map, default planner knobs
  auto records = run_trials_parallel(base, /*scenario=*/3, /*trials=*/20, jobs);
  ComparisonSummary sum = summarize(records);

  const GroupStats *combined = nullptr, *global = nullptr;
  for (const GroupStats& g : sum.groups) {
    if (g.planner == "combined") combined = &g;
    if (g.planner == "global_only") global = &g;
  }
  c.require(combined != nullptr && global != nullptr, "missing groups");
  const PairTest* t = find_test(sum, "combined", "global_only");
  c.require(t != nullptr, "missing pair test");
  if (!c.ok) return c;

  c.require(t->p_vol < 0.05, "covered-volume p=" + std::to_string(t->p_vol));
  c.require(combined->rois_mean > global->rois_mean, "mean detected ROIs not higher");
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "combined vol %.3f+-%.3f rois %.1f+-%.1f | global vol %.3f+-%.3f rois "
                "%.1f+-%.1f | p_vol=%.4g p_rois=%.4g",
                combined->vol_mean, combined->vol_std, combined->rois_mean, combined->rois_std,
                global->vol_mean, global->vol_std, global->rois_mean, global->rois_std,
                t->p_vol, t->p_rois);
  c.detail = buf;
  return c;
}

Check criterion_scenario1(int jobs) {
  Check c;
  TrialParams base;
  auto records = run_trials_parallel(base, /*scenario=*/1, /*trials=*/20, jobs);
  ComparisonSummary sum = summarize(records);
  const PairTest* fwd = find_test(sum, "combined", "global_only");
  const PairTest* rev = find_test(sum, "global_only", "combined");
  c.require(fwd != nullptr && rev != nullptr, "missing pair tests");
  if (!c.ok) return c;
  c.require(fwd->p_vol >= 0.05, "combined>global volume p=" + std::to_string(fwd->p_vol));
  c.require(fwd->p_rois >= 0.05, "combined>global rois p=" + std::to_string(fwd->p_rois));
  c.require(rev->p_vol >= 0.05, "global>combined volume p=" + std::to_string(rev->p_vol));
  c.require(rev->p_rois >= 0.05, "global>combined rois p=" + std::to_string(rev->p_rois));
  char buf[128];
  std::snprintf(buf, sizeof(buf), "p: c>g vol %.3f rois %.3f, g>c vol %.3f rois %.3f",
                fwd->p_vol, fwd->p_rois, rev->p_vol, rev->p_rois);
  c.detail = buf;
  return c;
}

// --- criterion 8 -----------------------------------------------------------

Check criterion_metrics() {
  Check c;
  std::vector<Fruit> fruits{{0, {0.0, 0.0, 0.0}, {0.04, 0.04, 0.04}}};
  auto cluster_at = [](double x) {
    RoiCluster cl;
    cl.centroid = {x, 0.0, 0.0};
    cl.bbox = Aabb::of(cl.centroid - Vec3(0.01, 0.01, 0.01), cl.centroid + Vec3(0.01, 0.01, 0.01));
    return cl;
  };
  c.require(match_detected_rois({cluster_at(0.199)}, fruits, 0.20) == 1, "0.199 must match");
  c.require(match_detected_rois({cluster_at(0.201)}, fruits, 0.20) == 0, "0.201 must not match");

  const double res = 0.01;
  Rng rng(160008);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Fruit> fs;
    double total = 0.0;
    for (int f = 0; f < 3; ++f) {
      int x0 = rng.uniform_int(20), y0 = rng.uniform_int(20), z0 = rng.uniform_int(20);
      Vec3 lo(x0 * res, y0 * res, z0 * res);
      Vec3 ext((2 + rng.uniform_int(8)) * res, (2 + rng.uniform_int(8)) * res,
               (2 + rng.uniform_int(8)) * res);
      Fruit fruit;
      fruit.id = f;
      fruit.center = lo + 0.5 * ext;
      fruit.radii = 0.5 * ext;
      fs.push_back(fruit);
      total += ext.x() * ext.y() * ext.z();
    }
    std::vector<RoiCluster> cls;
    for (int k = 0; k < 4; ++k) {
      int x0 = rng.uniform_int(24), y0 = rng.uniform_int(24), z0 = rng.uniform_int(24);
      RoiCluster cl;
      cl.bbox = Aabb::of({x0 * res, y0 * res, z0 * res},
                         {(x0 + 1 + rng.uniform_int(9)) * res,
                          (y0 + 1 + rng.uniform_int(9)) * res,
                          (z0 + 1 + rng.uniform_int(9)) * res});
      cl.centroid = cl.bbox.center();
      cls.push_back(cl);
    }
    double got = covered_roi_volume(cls, fs, res);
    double want = oracle::raster_covered_volume(cls, fs, res);
    double quantum = res * res * res / total;
    c.require(std::abs(got - want) <= quantum,
              "coverage mismatch " + std::to_string(got - want) + " at trial " +
                  std::to_string(trial));
    if (!c.ok) break;
  }
  return c;
}

// --- criterion 9 -----------------------------------------------------------

Check criterion_cli_determinism() {
  Check c;
#ifdef VIEWPLAN_BIN
  fs::path tmp = fs::temp_directory_path() / "viewplan_acceptance";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  {
    std::ofstream cfg(tmp / "run.cfg");
    cfg << "scenario = 1\ntrials = 2\nseed_base = 300\nbudget_m = 0.3\nmax_steps = 10\n"
           "planners = combined,global_only\n";
  }
  std::string bin = VIEWPLAN_BIN;
  std::string cmd_a = bin + " run --config " + (tmp / "run.cfg").string() + " --out-dir " +
                      (tmp / "a").string() + " --jobs 1 > /dev/null";
  std::string cmd_b = bin + " run --config " + (tmp / "run.cfg").string() + " --out-dir " +
                      (tmp / "b").string() + " --jobs 2 > /dev/null";
  int ra = std::system(cmd_a.c_str());
  int rb = std::system(cmd_b.c_str());
  c.require(WIFEXITED(ra) && (WEXITSTATUS(ra) == 0 || WEXITSTATUS(ra) == 3), "run A failed");
  c.require(WIFEXITED(rb) && (WEXITSTATUS(rb) == 0 || WEXITSTATUS(rb) == 3), "run B failed");
  std::string res_a = slurp(tmp / "a" / "results.csv");
  std::string res_b = slurp(tmp / "b" / "results.csv");
  c.require(!res_a.empty(), "empty results A");
  c.require(res_a == res_b, "results files differ between runs");
#else
  c.require(false, "binary path not configured");
#endif
  return c;
}

}  // namespace

int main() {
  const int jobs = std::max(1u, std::thread::hardware_concurrency());
  struct Entry {
    int id;
    const char* name;
    std::function<Check()> fn;
    double time_limit = 0.0;  // seconds; 0 = no stated target
  };
  std::vector<Entry> entries{
      {1, "least-squares gradient matches SVD oracle", criterion_least_squares, 1.0},
      {2, "information gain matches exhaustive oracle", criterion_info_gain, 0.0},
      {3, "frontiers match brute-force scans", criterion_frontiers, 0.0},
      {4, "selection loop trace conformance", criterion_selection_loop, 0.0},
      {5, "local ascent on occluded fruit scenes", criterion_local_ascent, 120.0},
      {6, "scenario 3: combined beats global-only",
       [&] { return criterion_scenario3(jobs); }, 1800.0},
      {7, "scenario 1: no significant difference",
       [&] { return criterion_scenario1(jobs); }, 0.0},
      {8, "metric correctness at thresholds and vs rasterization", criterion_metrics, 0.0},
      {9, "cmd_run determinism (byte-identical results)", criterion_cli_determinism, 0.0},
  };

  int failures = 0;
  for (const Entry& e : entries) {
    auto t0 = std::chrono::steady_clock::now();
    Check c;
    try {
      c = e.fn();
    } catch (const std::exception& ex) {
      c.ok = false;
      c.detail = std::string("exception: ") + ex.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (e.time_limit > 0.0 && secs > e.time_limit) {
      c.ok = false;
      c.detail += (c.detail.empty() ? "" : "; ") + std::string("runtime over target");
    }
    std::printf("[%s] criterion %d: %s (%.1f s)%s%s\n", c.ok ? "PASS" : "FAIL", e.id, e.name,
                secs, c.detail.empty() ? "" : " -- ", c.detail.c_str());
    std::fflush(stdout);
    if (!c.ok) ++failures;
  }
  return failures;
}
