// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lidarsim/error.hpp"
#include "lidarsim/metrics.hpp"
#include "lidarsim/scenegen.hpp"
#include "oracles.hpp"

using namespace lidarsim;

namespace {

class WrongSizeExtractor final : public FeatureExtractor {
 public:
  std::string name() const override { return "wrong"; }
  std::size_t dimension() const override { return 4; }
  Json parameters() const override { return Json::object(); }
  Eigen::VectorXd extract(const PointCloud&, std::span<const OrientedBox3>) const override {
    return Eigen::VectorXd::Zero(3);
  }
};

struct ObjectScene {
  PointCloud cloud;
  std::vector<OrientedBox3> boxes;
};

ObjectScene dense_object(std::uint64_t seed) {
  ObjectScene s;
  const auto box = OrientedBox3::make(Vec3(8, 3, 0.75), Vec3(3.6, 1.8, 1.5), 0.4, "obj", ObjectClass::vehicle);
  scenegen::AnalyticWorld w;
  w.add_box(box, 0.6);
  s.cloud = w.sample(2000.0, seed);
  s.boxes.push_back(OrientedBox3::make(box.center, box.dims + Vec3::Constant(0.4), box.yaw, "obj"));
  return s;
}

PointCloud jitter(const PointCloud& c, double sigma, std::uint64_t seed) {
  PointCloud out = c;
  Rng rng(seed);
  for (auto& p : out.xyz) p += Vec3(rng.normal(0, sigma), rng.normal(0, sigma), rng.normal(0, sigma));
  return out;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("chamfer: examples") {
  const PointCloud a = oracle::random_cloud(50, 71);
  CHECK(chamfer(a, a) == 0.0);
  PointCloud p, q;
  p.xyz.push_back(Vec3::Zero());
  q.xyz.push_back(Vec3(1, 0, 0));
  CHECK(chamfer(p, q) == 2.0);
  CHECK_THROWS_AS(chamfer(p, PointCloud{}), DomainError);
}

TEST_CASE("chamfer: brute force, symmetry and multiset equality") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PointCloud a = oracle::random_cloud(200, 100 + seed, 3.0);
    const PointCloud b = oracle::random_cloud(200 - seed * 7, 200 + seed, 3.0);
    const double c = chamfer(a, b);
    CHECK(std::abs(c - oracle::chamfer(a, b)) <= 1e-9);
    CHECK(c == chamfer(b, a));
    CHECK(c > 0.0);
  }
  PointCloud a = oracle::random_cloud(200, 72);
  PointCloud shuffled = a;
  std::reverse(shuffled.xyz.begin(), shuffled.xyz.end());
  CHECK(chamfer(a, shuffled) == 0.0);
}

TEST_CASE("default extractor: structure") {
  const Vec3 extent(4, 4, 2);
  const Eigen::VectorXd zero = default_extractor(PointCloud{}, 0.25, extent);
  CHECK(zero.size() == 4096);
  CHECK(zero.isZero());
  CHECK(DefaultExtractor().dimension() == 4096);

  PointCloud c = PointCloud::with_channels(kIntensity);
  Rng rng(73);
  for (int i = 0; i < 300; ++i) {
    c.xyz.emplace_back(rng.uniform(-1.5, 1.2), rng.uniform(-1.5, 1.5), rng.uniform(-0.8, 0.8));
    c.intensity->push_back(rng.uniform());
  }
  const Eigen::VectorXd f = default_extractor(c, 0.25, extent);

  // One voxel along x moves every occupied cell by ny * nz = 128 slots.
  PointCloud shifted = c;
  for (auto& p : shifted.xyz) p.x() += 0.25;
  const Eigen::VectorXd g = default_extractor(shifted, 0.25, extent);
  for (int cell = 0; cell + 128 < 2048; ++cell) {
    CHECK(g[cell + 128] == doctest::Approx(f[cell]));
    CHECK(g[2048 + cell + 128] == doctest::Approx(f[2048 + cell]));
  }

  PointCloud doubled = c;
  doubled.append(c);
  const Eigen::VectorXd h = default_extractor(doubled, 0.25, extent);
  for (int cell = 0; cell < 2048; ++cell) {
    const double count = std::expm1(f[cell]);
    CHECK(h[cell] == doctest::Approx(std::log1p(2.0 * count)));
    CHECK(h[2048 + cell] == doctest::Approx(f[2048 + cell]));
  }
}

TEST_CASE("lpcs: identity, symmetry and triangle inequality") {
  const DefaultExtractor F;
  const ObjectScene s = dense_object(74);
  const PointCloud b = jitter(s.cloud, 0.05, 75);
  const PointCloud c = jitter(s.cloud, 0.10, 76);
  CHECK(lpcs(s.cloud, s.cloud, s.boxes, F) == 0.0);
  CHECK(lpcs(s.cloud, b, s.boxes, F) == lpcs(b, s.cloud, s.boxes, F));
  CHECK(lpcs(s.cloud, c, s.boxes, F) <= lpcs(s.cloud, b, s.boxes, F) + lpcs(b, c, s.boxes, F) + 1e-9);
  CHECK_THROWS_AS(lpcs(s.cloud, b, s.boxes, WrongSizeExtractor()), ConsistencyError);
}

TEST_CASE("lpcs: ignores points outside the boxes") {
  const DefaultExtractor F;
  const ObjectScene s = dense_object(77);
  PointCloud with_clutter = s.cloud;
  with_clutter.append(oracle::random_cloud(1000, 78, 2.0, kIntensity));  // around the origin, far from the box
  CHECK(lpcs(s.cloud, with_clutter, s.boxes, F) == 0.0);
}

TEST_CASE("lpcs: monotone over the perturbation ladder") {
  const DefaultExtractor F;
  const ObjectScene s = dense_object(79);
  double prev = -1.0;
  for (double sigma : {0.0, 0.02, 0.05, 0.10}) {
    const double v = lpcs(s.cloud, jitter(s.cloud, sigma, 80), s.boxes, F);
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("evaluate_lpcs aggregates pairs") {
  const DefaultExtractor F;
  const ObjectScene s = dense_object(81);
  std::vector<LpcsPair> pairs{{s.cloud, s.cloud, s.boxes}, {s.cloud, jitter(s.cloud, 0.05, 82), s.boxes}};
  const auto r = evaluate_lpcs(pairs, F);
  CHECK(r.pairs == 2);
  CHECK(r.values[0] == 0.0);
  CHECK(r.mean == doctest::Approx(r.values[1] / 2));
  CHECK(r.extractor == "voxel-occupancy-intensity");
  CHECK(to_json(r).at("values").size() == 2);
}

TEST_CASE("rank_raycast_configs") {
  scenegen::DemoSpec spec;
  spec.azimuth_resolution = deg2rad(0.8);
  const auto world = scenegen::demo_world(spec, 0);
  const PointCloud scene = world.world.sample(300.0, 83);
  const auto beams = scenegen::lattice_beams(spec.beams, spec.elevation_min, spec.elevation_max,
                                             spec.azimuth_resolution, spec.max_range);
  RaycastConfig truth;
  truth.width = 450;
  truth.height = 32;
  truth.elevation_min = spec.elevation_min - 0.5 * (spec.elevation_max - spec.elevation_min) / 31;
  truth.elevation_max = spec.elevation_max + 0.5 * (spec.elevation_max - spec.elevation_min) / 31;

  RaycastPair pair;
  pair.scene = scene;
  pair.sensor_pose = world.sensor_pose;
  pair.beams = beams;
  pair.real = raycast_fpa(scene, world.sensor_pose, beams, truth).cloud;
  for (const auto& o : world.objects) pair.boxes.push_back(o.box.transformed(world.sensor_pose.inverse()));
  const std::vector<RaycastPair> pairs{pair};
  const DefaultExtractor F;

  const std::vector<RaycastConfig> one{truth};
  const auto single = rank_raycast_configs(one, pairs, F);
  REQUIRE(single.size() == 1);
  CHECK(single[0].score == std::optional<double>(0.0));

  RaycastConfig coarse = truth, wide = truth, bad = truth, paper;
  coarse.width = 225;
  wide.peak_width = 1.0;
  bad.width = 0;
  std::vector<RaycastConfig> cands{coarse, paper, bad, truth, wide};
  const auto ranked = rank_raycast_configs(cands, pairs, F);
  REQUIRE(ranked.size() == 5);
  CHECK(ranked[0].config == truth);
  CHECK(ranked.back().config == bad);
  CHECK_FALSE(ranked.back().score.has_value());
  CHECK_FALSE(ranked.back().error.empty());
  for (std::size_t i = 0; i + 2 < ranked.size(); ++i) CHECK(*ranked[i].score <= *ranked[i + 1].score);
  const auto it = std::find_if(ranked.begin(), ranked.end(), [&](const RankEntry& e) { return e.config == paper; });
  REQUIRE(it != ranked.end());
  CHECK(std::isfinite(*it->score));

  std::reverse(cands.begin(), cands.end());
  const auto again = rank_raycast_configs(cands, pairs, F);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    CHECK(again[i].config == ranked[i].config);
    CHECK(again[i].score == ranked[i].score);
  }

  const std::string table = ranking_table(ranked);
  CHECK(table.find("450") != std::string::npos);
  const std::string csv = ranking_csv(ranked);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(to_json(std::span<const RankEntry>(ranked)).size() == 5);
}

TEST_CASE("rank ties prefer more pixels, then narrower peaks") {
  RaycastPair pair;
  pair.scene.xyz.push_back(Vec3(100, 0, 0));  // out of range: every candidate simulates nothing
  pair.beams = scenegen::lattice_beams(2, -0.1, 0.0, 0.5, 50);
  pair.boxes.push_back(OrientedBox3::make(Vec3(5, 0, 0), Vec3::Ones(), 0.0));
  const std::vector<RaycastPair> pairs{pair};
  RaycastConfig a, b, c;
  a.width = 100;
  b.width = 200;
  c.width = 200;
  c.peak_width = 0.1;
  const std::vector<RaycastConfig> cands{a, b, c};
  const auto r = rank_raycast_configs(cands, pairs, DefaultExtractor());
  CHECK(r[0].config == c);
  CHECK(r[1].config == b);
  CHECK(r[2].config == a);
}

TEST_CASE("raycast config json round trip") {
  RaycastConfig c;
  c.width = 900;
  c.peak_width = 0.15;
  c.elevation_min = deg2rad(-20);
  const RaycastConfig back = raycast_config_from_json(to_json(c));
  CHECK(back.width == 900);
  CHECK(back.peak_width == 0.15);
  CHECK(back.elevation_min == doctest::Approx(c.elevation_min).epsilon(1e-14));
  CHECK(raycast_config_from_json(Json::object()) == RaycastConfig{});
}

}  // TEST_SUITE
