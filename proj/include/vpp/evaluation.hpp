#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "vpp/planner.hpp"
#include "vpp/scene.hpp"
#include "vpp/voxel_map.hpp"

namespace vpp {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Ground-truth fruits matched one-to-one by detected clusters whose centroid
/// lies closer than `radius`; greedy by ascending distance.
inline int match_detected_rois(const std::vector<RoiCluster>& clusters,
                               const std::vector<Fruit>& fruits, double radius = 0.20) {
  struct Pair {
    double dist;
    int cluster, fruit;
  };
  std::vector<Pair> pairs;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (std::size_t f = 0; f < fruits.size(); ++f) {
      double d = (clusters[c].centroid - fruits[f].center).norm();
      if (d < radius) pairs.push_back({d, static_cast<int>(c), static_cast<int>(f)});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::tie(a.dist, a.cluster, a.fruit) < std::tie(b.dist, b.cluster, b.fruit);
  });
  std::vector<bool> cluster_used(clusters.size(), false), fruit_used(fruits.size(), false);
  int matched = 0;
  for (const Pair& p : pairs) {
    if (cluster_used[p.cluster] || fruit_used[p.fruit]) continue;
    cluster_used[p.cluster] = true;
    fruit_used[p.fruit] = true;
    ++matched;
  }
  return matched;
}

/// Fraction of ground-truth fruit bounding-box volume covered by detected
/// cluster boxes. Disjoint clipped boxes sum analytically; overlapping ones
/// merge on the voxel grid (cluster boxes are voxel-aligned, so grid-cell
/// membership is exact; each cell's overlap with the fruit box is analytic).
inline double covered_roi_volume(const std::vector<RoiCluster>& clusters,
                                 const std::vector<Fruit>& fruits, double resolution = 0.01) {
  double total = 0.0, covered = 0.0;
  for (const Fruit& f : fruits) {
    const Aabb fb = f.bbox();
    const double fv = fb.volume();
    total += fv;
    if (fv <= 0.0) continue;

    std::vector<const Aabb*> touching;
    std::vector<Aabb> clipped;
    for (const RoiCluster& c : clusters) {
      Aabb ib = c.bbox.intersect(fb);
      if (!ib.empty() && ib.volume() > 0.0) {
        touching.push_back(&c.bbox);
        clipped.push_back(ib);
      }
    }
    if (clipped.empty()) continue;

    bool disjoint = true;
    for (std::size_t i = 0; i + 1 < clipped.size() && disjoint; ++i) {
      for (std::size_t j = i + 1; j < clipped.size(); ++j) {
        if (clipped[i].intersect(clipped[j]).volume() > 0.0) {
          disjoint = false;
          break;
        }
      }
    }
    if (disjoint) {
      for (const Aabb& ib : clipped) covered += ib.volume();
      continue;
    }

    const VoxelKey lo = voxel_key(fb.min, resolution);
    const VoxelKey hi = voxel_key(fb.max, resolution);
    for (std::int32_t kx = lo.x; kx <= hi.x; ++kx) {
      for (std::int32_t ky = lo.y; ky <= hi.y; ++ky) {
        for (std::int32_t kz = lo.z; kz <= hi.z; ++kz) {
          const Vec3 center = voxel_center({kx, ky, kz}, resolution);
          bool inside = false;
          for (const Aabb* cb : touching) {
            if (cb->contains(center)) {
              inside = true;
              break;
            }
          }
          if (!inside) continue;
          Aabb cell = Aabb::of({kx * resolution, ky * resolution, kz * resolution},
                               {(kx + 1) * resolution, (ky + 1) * resolution,
                                (kz + 1) * resolution});
          covered += cell.intersect(fb).volume();
        }
      }
    }
  }
  return total > 0.0 ? covered / total : 0.0;
}

struct MannWhitneyResult {
  double u = 0.0;
  double p = 1.0;
  bool degenerate = false;  // all observations identical
  bool exact = false;       // p from exact enumeration rather than normal approx
};

/// One-sided Mann-Whitney U test, alternative: a stochastically greater
/// than b. Exact enumeration for small samples, otherwise the normal
/// approximation with tie-corrected variance and continuity correction.
inline MannWhitneyResult mann_whitney_one_sided(std::span<const double> a,
                                                std::span<const double> b) {
  const std::size_t n1 = a.size(), n2 = b.size();
  if (n1 < 1 || n2 < 1) throw std::invalid_argument("mann_whitney: empty sample");

  auto u_of = [](std::span<const double> xs, std::span<const double> ys) {
    double u = 0.0;
    for (double x : xs) {
      for (double y : ys) {
        if (x > y) {
          u += 1.0;
        } else if (x == y) {
          u += 0.5;
        }
      }
    }
    return u;
  };
  MannWhitneyResult r;
  r.u = u_of(a, b);

  bool all_equal = true;
  for (double x : a) all_equal = all_equal && x == a[0];
  for (double y : b) all_equal = all_equal && y == a[0];
  if (all_equal) {
    r.p = 0.5;
    r.degenerate = true;
    r.exact = true;
    return r;
  }

  auto choose = [](std::size_t n, std::size_t k) {
    double c = 1.0;
    k = std::min(k, n - k);
    for (std::size_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / i;
    return c;
  };

  if (std::min(n1, n2) < 8 && choose(n1 + n2, n1) <= 2e6) {
    std::vector<double> combined(a.begin(), a.end());
    combined.insert(combined.end(), b.begin(), b.end());
    std::vector<char> sel(combined.size(), 0);
    std::fill(sel.begin(), sel.begin() + n1, 1);
    std::sort(sel.begin(), sel.end());  // lexicographically first arrangement
    long hits = 0, totaln = 0;
    std::vector<double> ga(n1), gb(n2);
    do {
      std::size_t ia = 0, ib = 0;
      for (std::size_t i = 0; i < combined.size(); ++i) {
        if (sel[i]) {
          ga[ia++] = combined[i];
        } else {
          gb[ib++] = combined[i];
        }
      }
      if (u_of(ga, gb) >= r.u - 1e-12) ++hits;
      ++totaln;
    } while (std::next_permutation(sel.begin(), sel.end()));
    r.p = static_cast<double>(hits) / static_cast<double>(totaln);
    r.exact = true;
    return r;
  }

  // midranks over the combined sample for the tie correction term
  std::vector<double> combined(a.begin(), a.end());
  combined.insert(combined.end(), b.begin(), b.end());
  std::sort(combined.begin(), combined.end());
  const double n = static_cast<double>(n1 + n2);
  double tie_sum = 0.0;
  for (std::size_t i = 0; i < combined.size();) {
    std::size_t j = i;
    while (j < combined.size() && combined[j] == combined[i]) ++j;
    double t = static_cast<double>(j - i);
    tie_sum += t * t * t - t;
    i = j;
  }
  const double mu = 0.5 * n1 * n2;
  double var = (static_cast<double>(n1) * n2 / 12.0) *
               ((n + 1.0) - tie_sum / (n * (n - 1.0)));
  if (var <= 0.0) {
    r.p = 0.5;
    r.degenerate = true;
    return r;
  }
  const double z = (r.u - mu - 0.5) / std::sqrt(var);
  r.p = 0.5 * std::erfc(z / std::numbers::sqrt2);
  return r;
}

struct TrialSample {
  double plan_length = 0.0;
  int detected_rois = 0;
  double covered_volume = 0.0;
};

struct TrialRecord {
  std::string planner_id;
  std::uint64_t seed = 0;
  double budget = std::numeric_limits<double>::quiet_NaN();  // NaN: unknown (parsed data)
  std::vector<TrialSample> samples;
  std::vector<PlanActionKind> actions;
  bool stalled = false;
  std::string config_snapshot;
};

struct TrialParams {
  int scenario = 1;
  std::string planner_id = "combined";  // combined | global_only
  std::uint64_t seed = 0;
  double budget = 6.0;  // meters of camera travel
  int max_steps = 600;  // safety cap on planned actions
  MapParams map;
  SceneParams scene;
  CameraModel camera;
  CameraArrayConfig array;
  DetectionConfig detect;
  MtsConfig mts;
  PlannerConfig planner;
  double match_radius = 0.20;
  std::string config_snapshot;
};

/// Plan/act/integrate loop against a prebuilt scene. Deterministic for a
/// fixed parameter set.
inline TrialRecord run_trial_on(const Scene& scene, const Workspace& ws, const Pose& start,
                                const TrialParams& params, std::ostream* log = nullptr,
                                std::ostream* map_export = nullptr) {
  if (params.planner_id != "combined" && params.planner_id != "global_only") {
    throw std::invalid_argument("unknown planner: " + params.planner_id);
  }
  params.camera.validate();
  params.planner.validate();

  TrialRecord rec;
  rec.planner_id = params.planner_id;
  rec.seed = params.seed;
  rec.budget = params.budget;
  rec.config_snapshot = params.config_snapshot;

  RoiOcTree map(params.map, scene.world_bounds);
  Rng rng(splitmix64(params.seed) ^ fnv1a(params.planner_id));
  Pose pose = start;
  double plan_length = 0.0;

  auto integrate_and_sample = [&]() {
    auto cloud = render_pointcloud(scene, pose, params.camera);
    map.integrate_scan(pose.position, cloud);
    auto clusters = map.roi_clusters();
    TrialSample s;
    s.plan_length = plan_length;
    s.detected_rois = match_detected_rois(clusters, scene.fruits, params.match_radius);
    s.covered_volume = covered_roi_volume(clusters, scene.fruits, map.resolution());
    if (!rec.samples.empty() && s.detected_rois < rec.samples.back().detected_rois && log) {
      // possible in principle (ROI log-odds can decay); worth a note, not a failure
      *log << "note detected_rois decreased " << rec.samples.back().detected_rois << " -> "
           << s.detected_rois << "\n";
    }
    rec.samples.push_back(s);
    if (log) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "sample plan_length=%.6f detected=%d covered=%.6f\n",
                    s.plan_length, s.detected_rois, s.covered_volume);
      *log << buf;
    }
  };

  integrate_and_sample();

  const bool use_mts = params.planner_id == "combined";
  PlanState state;
  int steps = 0;
  while (plan_length < params.budget && steps < params.max_steps) {
    PlannerHooks hooks;
    if (use_mts) {
      hooks.mts = [&](int moves) {
        return mts_step(scene, pose, ws, params.array, params.camera, params.detect, params.mts,
                        moves);
      };
    }
    hooks.sample = [&](int) {
      return sample_global(map, ws, params.camera, params.planner, pose, rng);
    };
    hooks.try_move = [&](const Pose& to) { return straight_line_reachable(ws, pose, to); };

    PlanAction action = plan_episode(state, hooks, params.mts.max_moves,
                                     params.planner.utility_thresh);
    ++steps;
    if (action.kind == PlanActionKind::Stalled) {
      rec.stalled = true;
      if (log) *log << "stalled step=" << steps << "\n";
      break;
    }
    plan_length += move_cost(pose, action.pose);
    pose = action.pose;
    rec.actions.push_back(action.kind);
    if (log) {
      char buf[400];
      if (action.kind == PlanActionKind::MtsMove) {
        const MtsStepResult& m = *action.mts;
        int n = std::snprintf(buf, sizeof(buf),
                              "action step=%d kind=mts delta=%.6g grad=%.4g,%.4g,%.4g "
                              "pos=%.4f,%.4f,%.4f objectives=",
                              steps, m.weighted_delta, m.gradient.x(), m.gradient.y(),
                              m.gradient.z(), pose.position.x(), pose.position.y(),
                              pose.position.z());
        for (int i = 0; i < 9 && n < static_cast<int>(sizeof(buf)) - 16; ++i) {
          n += std::snprintf(buf + n, sizeof(buf) - n, "%s%.5g", i ? "," : "",
                             m.objectives[i]);
        }
        std::snprintf(buf + n, sizeof(buf) - n, "\n");
      } else {
        std::snprintf(buf, sizeof(buf),
                      "action step=%d kind=global utility=%.6g ig=%.6g cost=%.6g "
                      "pos=%.4f,%.4f,%.4f\n",
                      steps, action.viewpoint->utility, action.viewpoint->ig,
                      action.viewpoint->cost, pose.position.x(), pose.position.y(),
                      pose.position.z());
      }
      *log << buf;
    }
    integrate_and_sample();
  }
  if (map_export) map.export_snapshot(*map_export);
  return rec;
}

inline TrialRecord run_trial(const TrialParams& params, std::ostream* log = nullptr,
                             std::ostream* map_export = nullptr) {
  Scene scene = generate_scene(params.scenario, params.seed, params.scene);
  Workspace ws = workspace_for_scenario(params.scenario);
  return run_trial_on(scene, ws, start_pose_for_scenario(params.scenario), params, log,
                      map_export);
}

struct GroupStats {
  std::string planner;
  int n = 0;
  double rois_mean = 0.0, rois_std = 0.0;
  double vol_mean = 0.0, vol_std = 0.0;
};

struct PairTest {
  std::string greater, lesser;  // alternative: greater's metric > lesser's
  double u_rois = 0.0, p_rois = 1.0;
  double u_vol = 0.0, p_vol = 1.0;
};

struct ComparisonSummary {
  std::vector<GroupStats> groups;
  std::vector<PairTest> tests;
};

/// Final-sample statistics per planner plus pairwise one-sided tests.
/// Requires at least two trials per group and a common budget.
inline ComparisonSummary summarize(const std::vector<TrialRecord>& trials) {
  std::vector<std::string> order;
  for (const TrialRecord& t : trials) {
    if (std::find(order.begin(), order.end(), t.planner_id) == order.end()) {
      order.push_back(t.planner_id);
    }
  }
  double budget = std::numeric_limits<double>::quiet_NaN();
  for (const TrialRecord& t : trials) {
    if (std::isnan(t.budget)) continue;
    if (std::isnan(budget)) {
      budget = t.budget;
    } else if (t.budget != budget) {
      throw std::invalid_argument("summarize: mismatched budgets across trials");
    }
  }

  ComparisonSummary out;
  std::vector<std::vector<double>> rois(order.size()), vols(order.size());
  for (const TrialRecord& t : trials) {
    if (t.samples.empty()) throw std::invalid_argument("summarize: trial without samples");
    std::size_t g = std::find(order.begin(), order.end(), t.planner_id) - order.begin();
    rois[g].push_back(static_cast<double>(t.samples.back().detected_rois));
    vols[g].push_back(t.samples.back().covered_volume);
  }

  auto mean_std = [](const std::vector<double>& xs) {
    double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    double sd = xs.size() > 1 ? std::sqrt(ss / (xs.size() - 1)) : 0.0;
    return std::pair<double, double>(mean, sd);
  };

  for (std::size_t g = 0; g < order.size(); ++g) {
    if (rois[g].size() < 2) {
      throw std::invalid_argument("summarize: fewer than 2 trials for " + order[g]);
    }
    GroupStats s;
    s.planner = order[g];
    s.n = static_cast<int>(rois[g].size());
    std::tie(s.rois_mean, s.rois_std) = mean_std(rois[g]);
    std::tie(s.vol_mean, s.vol_std) = mean_std(vols[g]);
    out.groups.push_back(s);
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = 0; j < order.size(); ++j) {
      if (i == j) continue;
      PairTest t;
      t.greater = order[i];
      t.lesser = order[j];
      auto mr = mann_whitney_one_sided(rois[i], rois[j]);
      auto mv = mann_whitney_one_sided(vols[i], vols[j]);
      t.u_rois = mr.u;
      t.p_rois = mr.p;
      t.u_vol = mv.u;
      t.p_vol = mv.p;
      out.tests.push_back(t);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// results / summary files

inline constexpr const char* kResultsHeader =
    "planner,seed,plan_length_m,detected_rois,covered_volume";

inline void write_results(std::ostream& os, const std::vector<TrialRecord>& trials) {
  os << kResultsHeader << "\n";
  char buf[200];
  for (const TrialRecord& t : trials) {
    for (const TrialSample& s : t.samples) {
      std::snprintf(buf, sizeof(buf), "%s,%llu,%.9g,%d,%.9g\n", t.planner_id.c_str(),
                    static_cast<unsigned long long>(t.seed), s.plan_length, s.detected_rois,
                    s.covered_volume);
      os << buf;
    }
  }
}

/// Parses a results file back into per-(planner,seed) trial records. Budgets
/// are unknown after parsing and left NaN.
inline std::vector<TrialRecord> read_results(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kResultsHeader) {
    throw std::runtime_error("results: missing or bad header line 1");
  }
  std::vector<TrialRecord> trials;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::string planner;
    unsigned long long seed = 0;
    TrialSample s;
    if (!(ls >> planner >> seed >> s.plan_length >> s.detected_rois >> s.covered_volume)) {
      throw std::runtime_error("results: malformed row at line " + std::to_string(line_no));
    }
    if (trials.empty() || trials.back().planner_id != planner || trials.back().seed != seed) {
      TrialRecord t;
      t.planner_id = planner;
      t.seed = seed;
      trials.push_back(t);
    }
    trials.back().samples.push_back(s);
  }
  if (trials.empty()) throw std::runtime_error("results: no data rows");
  return trials;
}

inline void write_summary(std::ostream& os, const ComparisonSummary& sum) {
  char buf[320];
  for (const GroupStats& g : sum.groups) {
    std::snprintf(buf, sizeof(buf),
                  "group planner=%s n=%d detected_rois_mean=%.17g detected_rois_std=%.17g "
                  "covered_volume_mean=%.17g covered_volume_std=%.17g\n",
                  g.planner.c_str(), g.n, g.rois_mean, g.rois_std, g.vol_mean, g.vol_std);
    os << buf;
  }
  for (const PairTest& t : sum.tests) {
    std::snprintf(buf, sizeof(buf),
                  "test greater=%s lesser=%s metric=detected_rois u=%.17g p=%.17g\n",
                  t.greater.c_str(), t.lesser.c_str(), t.u_rois, t.p_rois);
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "test greater=%s lesser=%s metric=covered_volume u=%.17g p=%.17g\n",
                  t.greater.c_str(), t.lesser.c_str(), t.u_vol, t.p_vol);
    os << buf;
  }
}

}  // namespace vpp
