#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "support/oracles.hpp"
#include "support/scenes.hpp"
#include "vpp/planner.hpp"

using namespace vpp;
using Catch::Approx;

namespace {

RoiOcTree random_5cube(Rng& rng) {
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
  return map;
}

}  // namespace

TEST_CASE("proximity_weight: analytic points") {
  CHECK(proximity_weight(0.0, 0.3) == 1.0);
  CHECK(proximity_weight(0.3, 0.3) == 0.5);
  CHECK(proximity_weight(0.15, 0.3) == 0.75);
  CHECK(proximity_weight(std::nullopt, 0.3) == 0.5);
  CHECK_THROWS_AS(proximity_weight(-0.01, 0.3), std::invalid_argument);
  CHECK_THROWS_AS(proximity_weight(0.1, 0.0), std::invalid_argument);
}

TEST_CASE("utility arithmetic") {
  CHECK(utility(0.5, 0.0, 0.7) == Approx(0.5));
  CHECK(utility(0.6, 2.0, 0.1) == Approx(0.4));
  CHECK(utility(0.37, 1.23, 0.0) == Approx(0.37));
}

TEST_CASE("kd-tree nearest matches brute force") {
  Rng rng(808);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec3> pts;
    int n = 1 + rng.uniform_int(200);
    for (int i = 0; i < n; ++i) {
      pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    }
    KdTree3 tree(pts);
    for (int q = 0; q < 20; ++q) {
      Vec3 p(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2));
      double d_max = rng.uniform(0.05, 0.8);
      auto got = tree.nearest_within(p, d_max);
      auto want = oracle::brute_nearest(pts, p, d_max);
      REQUIRE(got.has_value() == want.has_value());
      if (got) CHECK(*got == Approx(*want).margin(1e-12));
    }
  }
}

TEST_CASE("info_gain: fully known space has no gain") {
  RoiOcTree map;
  for (int x = -25; x <= 25; ++x) {
    for (int y = -25; y <= 25; ++y) {
      for (int z = -25; z <= 25; ++z) map.set_logodds({x, y, z}, -1.0, 0.0);
    }
  }
  PlannerConfig cfg;
  cfg.sensor_range = 0.2;  // rays stay within the carved block
  CameraModel cam;
  CHECK(info_gain(map, Pose{}, cam, cfg) == Approx(0.0).margin(1e-15));
}

TEST_CASE("info_gain: empty map with no ROIs sits at the base weight") {
  RoiOcTree map;
  PlannerConfig cfg;
  CameraModel cam;
  CHECK(info_gain(map, Pose{}, cam, cfg) == Approx(0.5).margin(1e-12));
}

TEST_CASE("info_gain: random 5-cube maps match the exhaustive oracle") {
  Rng rng(909);
  PlannerConfig cfg;
  cfg.sensor_range = 0.12;
  cfg.d_max = 0.03;
  CameraModel cam;
  for (int trial = 0; trial < 10; ++trial) {
    RoiOcTree map = random_5cube(rng);
    Pose pose = look_at({-0.05, 0.025, 0.025}, {0.025, 0.025, 0.025});
    double got = info_gain(map, pose, cam, cfg);
    double want = oracle::info_gain(map, pose, cam, cfg);
    CHECK(got == Approx(want).margin(1e-12));
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);
  }
}

TEST_CASE("info_gain: revealing an unknown voxel as free never raises the gain") {
  Rng rng(910);
  PlannerConfig cfg;
  cfg.sensor_range = 0.12;
  CameraModel cam;
  for (int trial = 0; trial < 10; ++trial) {
    RoiOcTree map = random_5cube(rng);
    Pose pose = look_at({-0.05, 0.025, 0.025}, {0.025, 0.025, 0.025});
    double before = info_gain(map, pose, cam, cfg);
    // reveal the first unknown voxel on the central axis
    bool revealed = false;
    for (const VoxelKey& k : ray_voxels(map.resolution(), pose.position,
                                        Vec3(0.12, 0.025, 0.025))) {
      if (map.classify(k).occupancy == Occupancy::Unknown) {
        map.set_logodds(k, -1.0, 0.0);
        revealed = true;
        break;
      }
    }
    if (!revealed) continue;
    CHECK(info_gain(map, pose, cam, cfg) <= before + 1e-12);
  }
}

TEST_CASE("sample_viewpoints") {
  PlannerConfig cfg;
  Rng rng(303);
  Workspace ws = testsup::permissive_workspace();

  SECTION("no targets, no viewpoints") {
    RoiOcTree map;
    std::vector<VoxelKey> targets;
    CHECK(sample_viewpoints(map, ws, targets, 10, cfg, rng, ViewpointKind::RoiTargeted)
              .empty());
  }
  SECTION("single target in an empty map: all accepted at sensor range, aimed at it") {
    RoiOcTree map;
    std::vector<VoxelKey> targets{{10, 10, 10}};
    auto vps = sample_viewpoints(map, ws, targets, 15, cfg, rng, ViewpointKind::RoiTargeted);
    REQUIRE(vps.size() == 15);
    Vec3 target = map.center_of(targets[0]);
    for (const Viewpoint& vp : vps) {
      CHECK((vp.pose.position - target).norm() == Approx(cfg.sensor_range).epsilon(1e-9));
      Vec3 aim = (target - vp.pose.position).normalized();
      CHECK(vp.pose.forward().dot(aim) == Approx(1.0).epsilon(1e-9));
      CHECK(vp.target == target);
    }
  }
  SECTION("target sealed inside an occupied shell is never accepted") {
    RoiOcTree map;
    for (int x = 8; x <= 12; ++x) {
      for (int y = 8; y <= 12; ++y) {
        for (int z = 8; z <= 12; ++z) {
          if (x == 10 && y == 10 && z == 10) continue;
          map.set_logodds({x, y, z}, 2.0, 0.0);
        }
      }
    }
    std::vector<VoxelKey> targets{{10, 10, 10}};
    CHECK(sample_viewpoints(map, ws, targets, 5, cfg, rng, ViewpointKind::RoiTargeted).empty());
  }
  SECTION("occlusion soundness on a random map") {
    Rng map_rng(304);
    RoiOcTree map;
    for (int i = 0; i < 400; ++i) {
      map.set_logodds({map_rng.uniform_int(30), map_rng.uniform_int(30), map_rng.uniform_int(30)},
                      2.0, 0.0);
    }
    std::vector<VoxelKey> targets{{15, 15, 15}, {5, 5, 5}, {25, 25, 25}};
    auto vps = sample_viewpoints(map, ws, targets, 20, cfg, rng, ViewpointKind::Exploration);
    for (const Viewpoint& vp : vps) {
      double dist = (vp.target - vp.pose.position).norm();
      RayHit hit = map.cast_ray(vp.pose.position, (vp.target - vp.pose.position) / dist, dist);
      bool clear = hit.kind != RayHit::Kind::Occupied ||
                   hit.key == map.key_at(vp.target);
      CHECK(clear);
    }
  }
}

TEST_CASE("sample_global: branch semantics") {
  PlannerConfig cfg;
  Workspace ws = testsup::permissive_workspace();
  CameraModel cam;

  SECTION("strong roi candidates keep exploration out of the pool") {
    RoiOcTree map;
    // roi voxel with a free neighbor that touches unknown space
    map.set_logodds({0, 0, 0}, 2.0, 2.0);
    map.set_logodds({1, 0, 0}, -1.0, 0.0);
    Rng rng(305);
    auto pool = sample_global(map, ws, cam, cfg, Pose{}, rng);
    REQUIRE_FALSE(pool.empty());
    CHECK(pool.front().utility > cfg.utility_thresh);
    for (const Viewpoint& vp : pool) CHECK(vp.origin_kind == ViewpointKind::RoiTargeted);
  }
  SECTION("without roi voxels everything is exploration") {
    RoiOcTree map;
    map.set_logodds({0, 0, 0}, 2.0, -1.0);  // occupied, not roi
    map.set_logodds({1, 0, 0}, -1.0, 0.0);
    Rng rng(306);
    auto pool = sample_global(map, ws, cam, cfg, Pose{}, rng);
    REQUIRE_FALSE(pool.empty());
    for (const Viewpoint& vp : pool) CHECK(vp.origin_kind == ViewpointKind::Exploration);
  }
  SECTION("no frontiers of either kind means an empty pool") {
    RoiOcTree map;
    for (int x = -10; x <= 10; ++x) {
      for (int y = -10; y <= 10; ++y) {
        for (int z = -10; z <= 10; ++z) map.set_logodds({x, y, z}, -1.0, 0.0);
      }
    }
    Rng rng(307);
    CHECK(sample_global(map, ws, cam, cfg, Pose{}, rng).empty());
  }
  SECTION("pool is ranked by utility with cost tie-break; argmax shift-invariant") {
    RoiOcTree map;
    map.set_logodds({0, 0, 0}, 2.0, 2.0);
    map.set_logodds({1, 0, 0}, -1.0, 0.0);
    map.set_logodds({0, 20, 0}, 2.0, 2.0);
    map.set_logodds({1, 20, 0}, -1.0, 0.0);
    Rng rng(308);
    auto pool = sample_global(map, ws, cam, cfg, Pose{}, rng);
    REQUIRE(pool.size() >= 2);
    for (std::size_t i = 0; i + 1 < pool.size(); ++i) {
      bool ordered = pool[i].utility > pool[i + 1].utility ||
                     (pool[i].utility == pool[i + 1].utility &&
                      pool[i].cost <= pool[i + 1].cost);
      CHECK(ordered);
    }
    auto argmax = std::max_element(pool.begin(), pool.end(),
                                   [](const Viewpoint& x, const Viewpoint& y) {
                                     return x.utility < y.utility;
                                   });
    CHECK(argmax == pool.begin());
    std::vector<Viewpoint> shifted = pool;
    for (Viewpoint& vp : shifted) vp.utility += 10.0;
    auto shifted_argmax = std::max_element(shifted.begin(), shifted.end(),
                                           [](const Viewpoint& x, const Viewpoint& y) {
                                             return x.utility < y.utility;
                                           });
    CHECK(shifted_argmax - shifted.begin() == argmax - pool.begin());
  }
}

TEST_CASE("plan_episode: scripted components walk every branch") {
  // hand-derived trace; max_moves = 2, utility_thresh = 0.05
  Pose p1, p2, p3;
  p1.position = {1, 0, 0};
  p2.position = {2, 0, 0};
  p3.position = {3, 0, 0};

  auto vp = [](double utility, double tag) {
    Viewpoint v;
    v.utility = utility;
    v.pose.position = {tag, tag, tag};
    return v;
  };

  int mts_calls = 0, sample_calls = 0;
  std::vector<MtsStepResult> mts_script;
  std::vector<std::vector<Viewpoint>> sample_script;

  auto move_result = [](const Pose& p) {
    MtsStepResult r;
    r.kind = MtsStepResult::Kind::Move;
    r.pose = p;
    return r;
  };
  auto localmax = []() {
    MtsStepResult r;
    r.kind = MtsStepResult::Kind::LocalMax;
    return r;
  };

  PlannerHooks hooks;
  hooks.mts = [&](int) { return mts_script.at(mts_calls++); };
  hooks.sample = [&](int) { return sample_script.at(sample_calls++); };
  hooks.try_move = [&](const Pose& p) { return p.position.x() < 90.0; };  // 99 = unreachable

  PlanState st;

  // episode 1: MTS move
  mts_script.push_back(move_result(p1));
  PlanAction a1 = plan_episode(st, hooks, 2, 0.05);
  CHECK(a1.kind == PlanActionKind::MtsMove);
  CHECK(a1.pose.position == p1.position);
  CHECK(st.m2s_moves == 1);

  // episode 2: delta below threshold -> top candidate unreachable -> second taken
  mts_script.push_back(localmax());
  Viewpoint unreachable = vp(0.5, 99.0);
  Viewpoint second = vp(0.3, 7.0);
  sample_script.push_back({unreachable, second});
  PlanAction a2 = plan_episode(st, hooks, 2, 0.05);
  CHECK(a2.kind == PlanActionKind::GlobalMove);
  CHECK(a2.viewpoint->pose.position.x() == Approx(7.0));
  CHECK(st.m2s_moves == 0);

  // episodes 3-4: MTS moves up to the allowance
  mts_script.push_back(move_result(p2));
  mts_script.push_back(move_result(p3));
  CHECK(plan_episode(st, hooks, 2, 0.05).kind == PlanActionKind::MtsMove);
  CHECK(plan_episode(st, hooks, 2, 0.05).kind == PlanActionKind::MtsMove);
  CHECK(st.m2s_moves == 2);

  // episode 5: allowance exhausted -> MTS is not consulted; first round below
  // threshold -> resample succeeds
  int mts_calls_before = mts_calls;
  sample_script.push_back({vp(0.04, 1.0)});
  sample_script.push_back({vp(0.2, 8.0)});
  PlanAction a5 = plan_episode(st, hooks, 2, 0.05);
  CHECK(mts_calls == mts_calls_before);
  CHECK(a5.kind == PlanActionKind::GlobalMove);
  CHECK(a5.viewpoint->pose.position.x() == Approx(8.0));
  CHECK(sample_calls == 3);

  // episode 6: nothing above threshold twice -> stalled
  mts_script.push_back(localmax());
  sample_script.push_back({vp(0.01, 1.0)});
  sample_script.push_back({});
  PlanAction a6 = plan_episode(st, hooks, 2, 0.05);
  CHECK(a6.kind == PlanActionKind::Stalled);
  CHECK(sample_calls == 5);

  // the global-only variant never consults MTS
  PlannerHooks global_only = hooks;
  global_only.mts = nullptr;
  sample_script.push_back({vp(0.3, 5.0)});
  mts_calls_before = mts_calls;
  PlanAction a7 = plan_episode(st, global_only, 2, 0.05);
  CHECK(a7.kind == PlanActionKind::GlobalMove);
  CHECK(mts_calls == mts_calls_before);
}

TEST_CASE("straight_line_reachable") {
  Workspace ws;
  ws.kind = Workspace::Kind::SpherePole;
  ws.pole_tip = {0, 0, 0.85};
  Pose a, b;
  a.position = {0.3, 0.0, 0.85};
  b.position = {-0.3, 0.0, 0.85};
  // the straight segment passes through the arm-base exclusion shell
  CHECK_FALSE(straight_line_reachable(ws, a, b));
  b.position = {0.3, 0.3, 0.85};
  CHECK(straight_line_reachable(ws, a, b));
}
