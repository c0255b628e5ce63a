// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <set>
#include <tuple>

#include "lidarsim/error.hpp"
#include "lidarsim/reconstruct.hpp"
#include "lidarsim/scenegen.hpp"
#include "oracles.hpp"

using namespace lidarsim;

namespace {

ObjectTrack track_with_centers(const std::vector<Vec3>& centers) {
  ObjectTrack t;
  t.track_id = "t";
  for (std::size_t i = 0; i < centers.size(); ++i)
    t.observations.push_back({i, OrientedBox3::make(centers[i], Vec3(4, 2, 1.5), 0.0), {}});
  return t;
}

// Half of a car-sized box surface: top, +y side and both ends above y = 0.
PointCloud half_car(std::uint64_t seed, double density = 400.0) {
  scenegen::AnalyticWorld w;
  w.add_box(OrientedBox3::make(Vec3::Zero(), Vec3(4.0, 1.8, 1.5), 0.0), 0.5);
  PointCloud all = w.sample(density, seed);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < all.size(); ++i)
    if (all.xyz[i].y() > 0.0 && all.xyz[i].z() > -0.74) keep.push_back(i);
  return all.select(keep);
}

}  // namespace

TEST_SUITE("reconstruct") {

TEST_CASE("classify_dynamic") {
  CHECK_FALSE(classify_dynamic(track_with_centers({Vec3(1, 2, 3)})));
  CHECK(classify_dynamic(track_with_centers({Vec3::Zero(), Vec3(0.6, 0, 0)}), 0.5));
  CHECK_FALSE(classify_dynamic(track_with_centers({Vec3::Zero(), Vec3(0.5, 0, 0)}), 0.5));

  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec3> centers;
    for (int i = 0; i < 20; ++i)
      centers.emplace_back(10 + rng.normal(0, 0.05), -3 + rng.normal(0, 0.05), rng.normal(0, 0.05));
    double max_d = 0.0;
    for (const auto& a : centers)
      for (const auto& b : centers) max_d = std::max(max_d, (a - b).norm());
    const auto t = track_with_centers(centers);
    CHECK(classify_dynamic(t, 0.5) == (max_d > 0.5));
    CHECK(classify_dynamic(t, max_d * 0.99));
    CHECK_FALSE(classify_dynamic(t, max_d));
  }
}

TEST_CASE("remove_foreground") {
  FrameRecord fr;
  fr.cloud = oracle::random_cloud(3000, 32, 6.0, kIntensity);
  EnlargementPolicy policy;
  CHECK(remove_foreground(fr, policy) == fr.cloud);

  fr.boxes.push_back(OrientedBox3::make(Vec3(1, 1, 0), Vec3(3, 2, 4), 0.4, "dyn"));
  fr.boxes.push_back(OrientedBox3::make(Vec3(-3, -2, 1), Vec3(2, 2, 2), -1.0, "static"));
  policy.dynamic_tracks.insert("dyn");
  policy.dynamic_enlargement = Vec3::Constant(0.3);

  const PointCloud kept = remove_foreground(fr, policy);
  std::vector<std::size_t> expect;
  for (std::size_t i = 0; i < fr.cloud.size(); ++i) {
    bool in = false;
    for (const auto& b : fr.boxes) in = in || oracle::in_box(b, fr.cloud.xyz[i], policy.for_track(b.track_id));
    if (!in) expect.push_back(i);
  }
  CHECK(kept == fr.cloud.select(expect));

  FrameRecord all;
  all.cloud = oracle::random_cloud(100, 33, 0.5);
  all.boxes.push_back(OrientedBox3::make(Vec3::Zero(), Vec3::Ones() * 2, 0.0, "a"));
  CHECK(remove_foreground(all, {}).empty());
}

TEST_CASE("enlargement policy marks only moving tracks") {
  SequenceDataset seq;
  for (int f = 0; f < 3; ++f) {
    FrameRecord fr;
    fr.timestamp_us = f;
    fr.sensor_pose = RigidTransform::from_yaw(0.0, Vec3(f * 2.0, 0, 0));
    fr.cloud = oracle::random_cloud(10, 34 + f);
    // "parked" stays put in the global frame, "mover" does not.
    fr.boxes.push_back(OrientedBox3::make(Vec3(10 - f * 2.0, 3, 0), Vec3(4, 2, 1.5), 0.0, "parked"));
    fr.boxes.push_back(OrientedBox3::make(Vec3(5, -3, 0), Vec3(4, 2, 1.5), 0.0, "mover"));
    seq.frames.push_back(fr);
  }
  const auto policy = make_enlargement_policy(seq, {});
  CHECK(policy.dynamic_tracks == std::set<std::string>{"mover"});
}

TEST_CASE("voxel_downsample") {
  PointCloud one;
  one.xyz.push_back(Vec3(0.3, 0.2, 0.1));
  CHECK(voxel_downsample(one, 1.0) == one);

  PointCloud two = PointCloud::with_channels(kIntensity);
  two.xyz = {Vec3(0.1, 0.1, 0.1), Vec3(0.3, 0.5, 0.7)};
  two.intensity = std::vector<double>{0.2, 0.6};
  const PointCloud mid = voxel_downsample(two, 1.0);
  REQUIRE(mid.size() == 1);
  CHECK((mid.xyz[0] - Vec3(0.2, 0.3, 0.4)).norm() < 1e-15);
  CHECK((*mid.intensity)[0] == doctest::Approx(0.4));

  const PointCloud c = oracle::random_cloud(5000, 35, 3.0);
  for (double v : {0.1, 0.37, 1.0}) {
    std::set<std::tuple<long, long, long>> cells;
    for (const auto& p : c.xyz)
      cells.insert({static_cast<long>(std::floor(p.x() / v)), static_cast<long>(std::floor(p.y() / v)),
                    static_cast<long>(std::floor(p.z() / v))});
    const PointCloud out = voxel_downsample(c, v);
    CHECK(out.size() == cells.size());
  }
  // Tiny voxels leave distinct points untouched.
  const PointCloud fine = voxel_downsample(c, 1e-7);
  REQUIRE(fine.size() == c.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) worst = std::max(worst, (fine.xyz[i] - c.xyz[i]).norm());
  CHECK(worst < 1e-12);
  CHECK_THROWS_AS(voxel_downsample(c, 0.0), DomainError);
}

TEST_CASE("radius_outlier_removal") {
  PointCloud iso;
  iso.xyz = {Vec3::Zero(), Vec3(10, 0, 0)};
  CHECK(radius_outlier_removal(iso, 1.0, 1).empty());

  PointCloud grid;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) grid.xyz.emplace_back(i * 0.1, j * 0.1, 0.0);
  CHECK(radius_outlier_removal(grid, 1.0, 3) == grid);

  const PointCloud c = oracle::random_cloud(500, 36, 2.0);
  for (int k : {1, 2, 4}) {
    std::vector<std::size_t> expect;
    for (std::size_t i = 0; i < c.size(); ++i)
      if (oracle::count_within(c, i, 0.5) >= static_cast<std::size_t>(k)) expect.push_back(i);
    CHECK(radius_outlier_removal(c, 0.5, k) == c.select(expect));
  }
  CHECK_THROWS_AS(radius_outlier_removal(c, 0.0, 1), DomainError);
  CHECK_THROWS_AS(radius_outlier_removal(c, 1.0, 0), DomainError);
}

TEST_CASE("accumulate_background: trivial cases") {
  SequenceDataset seq;
  FrameRecord fr;
  fr.cloud = oracle::random_cloud(400, 37, 2.0);
  seq.frames.push_back(fr);
  ReconstructParams p;
  p.voxel = 1.0;
  p.outlier_radius = 3.0;
  p.min_neighbors = 1;
  const auto one = accumulate_background(seq, p);
  std::set<std::tuple<long, long, long>> cells;
  for (const auto& q : fr.cloud.xyz)
    cells.insert({static_cast<long>(std::floor(q.x())), static_cast<long>(std::floor(q.y())),
                  static_cast<long>(std::floor(q.z()))});
  CHECK(one.cloud.size() == cells.size());

  seq.frames.push_back(fr);
  seq.frames[1].timestamp_us = 1;
  const auto two = accumulate_background(seq, p);
  CHECK(two.cloud.size() == one.cloud.size());
  CHECK(two.provenance.frames == 2);

  PointCloud sparse;
  sparse.xyz = {Vec3::Zero(), Vec3(50, 0, 0)};
  SequenceDataset lonely;
  lonely.frames.push_back({0, {}, sparse, {}});
  CHECK_THROWS_AS(accumulate_background(lonely, {}), EmptyMapError);
}

TEST_CASE("accumulate_background: two planes from five poses") {
  scenegen::AnalyticWorld w;
  w.add({Vec3(10, 0, 0), Vec3::UnitX(), Vec3::UnitY(), 25, 15, 0.4});              // ground z = 0
  w.add({Vec3(10, 8, 3), Vec3::UnitX(), Vec3::UnitZ(), 25, 3, 0.7});               // wall y = 8
  const BeamTable beams = scenegen::lattice_beams(32, deg2rad(-25), deg2rad(10), deg2rad(0.5), 40);
  SequenceDataset seq;
  for (int f = 0; f < 5; ++f) {
    FrameRecord fr;
    fr.timestamp_us = f * 100000;
    fr.sensor_pose = RigidTransform::from_yaw(0.05 * f, Vec3(2.0 * f, 0.5 * f, 1.8));
    fr.cloud = scenegen::scan(w, fr.sensor_pose, beams);
    // A box whose contents must vanish from the map.
    fr.boxes.push_back(
        OrientedBox3::make(fr.sensor_pose.inverse().apply(Vec3(12, 6, 1)), Vec3(3, 3, 3), 0.0, "fg"));
    seq.frames.push_back(std::move(fr));
  }
  ReconstructParams p;
  const auto map = accumulate_background(seq, p);
  CHECK(map.cloud.size() > 1000);
  double worst = 0.0;
  for (const auto& q : map.cloud.xyz) worst = std::max(worst, std::min(std::abs(q.z()), std::abs(q.y() - 8)));
  CHECK(worst <= p.voxel);
  for (const auto& fr : seq.frames)
    for (const auto& b : fr.boxes) {
      const auto g = b.transformed(fr.sensor_pose);
      for (const auto& q : map.cloud.xyz) REQUIRE_FALSE(g.contains(q));
    }
}

TEST_CASE("icp_align: identity and known translation") {
  const PointCloud obj = half_car(41);
  const auto same = icp_align(obj, obj, RigidTransform::identity());
  CHECK((same.transform.matrix() - Eigen::Matrix4d::Identity()).norm() < 1e-9);
  CHECK(same.rms < 1e-9);
  CHECK_FALSE(same.point_to_point_fallback);

  const PointCloud target = transform_cloud(obj, RigidTransform::from_yaw(0.0, Vec3(0.1, 0, 0)));
  const auto r = icp_align(obj, target, RigidTransform::identity());
  CHECK((r.transform.translation() - Vec3(0.1, 0, 0)).norm() < 1e-3);
  CHECK(r.converged);
  CHECK_THROWS_AS(icp_align(obj.select(std::vector<std::size_t>{0, 1, 2}), obj, {}), DomainError);
}

TEST_CASE("icp_align: plane target falls back to point-to-point") {
  PointCloud plane;
  Rng rng(42);
  for (int i = 0; i < 2000; ++i) plane.xyz.emplace_back(rng.uniform(-2, 2), rng.uniform(-2, 2), 0.0);
  const PointCloud shifted = transform_cloud(plane, RigidTransform::from_yaw(0.0, Vec3(0.05, 0, 0)));
  const auto r = icp_align(shifted, plane, RigidTransform::identity());
  CHECK(r.point_to_point_fallback);
  // The plane does not constrain in-plane motion: the out-of-plane residual
  // stays zero whatever the in-plane translation is.
  CHECK(std::abs(r.transform.translation().z()) < 1e-9);
  for (const auto& q : transform_cloud(shifted, r.transform).xyz) REQUIRE(std::abs(q.z()) < 1e-9);
}

TEST_CASE("reconstruct_object: adaptive ICP") {
  ReconstructParams p;
  ObjectTrack t;
  t.track_id = "car";
  t.label = ObjectClass::vehicle;
  const auto box = OrientedBox3::make(Vec3(5, 5, 0.75), Vec3(4.0, 1.8, 1.5), 0.3, "car", ObjectClass::vehicle);

  SUBCASE("single observation") {
    const PointCloud c = half_car(43);
    t.observations.push_back({0, box, c});
    const auto a = reconstruct_object(t, p);
    CHECK(a.cloud == c);
    CHECK(a.canonical_box.center == Vec3::Zero());
    CHECK(a.canonical_box.yaw == 0.0);
    CHECK_NOTHROW(a.validate());
  }
  SUBCASE("small clusters are concatenated") {
    const PointCloud c1 = half_car(44, 10.0), c2 = half_car(45, 10.0);
    REQUIRE(c1.size() < p.icp_min_points);
    t.observations.push_back({0, box, c1});
    t.observations.push_back({1, box, c2});
    const auto a = reconstruct_object(t, p);
    PointCloud both = c1;
    both.append(c2);
    CHECK(a.cloud == both);
    CHECK(a.provenance.icp_applied + a.provenance.icp_rejected == 0);
  }
  SUBCASE("box pose error is reduced") {
    const PointCloud c1 = half_car(46);
    const auto err = RigidTransform::from_yaw(deg2rad(1.0), Vec3(0.02, -0.015, 0.01));
    const PointCloud c2 = transform_cloud(half_car(47), err);
    REQUIRE(c1.size() > p.icp_min_points);
    t.observations.push_back({0, box, c1});
    t.observations.push_back({1, box, c2});
    const auto a = reconstruct_object(t, p);
    CHECK(a.provenance.icp_applied == 1);
    const double before = nearest_neighbor_rms(c2, c1);
    const PointCloud second = a.cloud.select([&] {
      std::vector<std::size_t> idx;
      for (std::size_t i = c1.size(); i < a.cloud.size(); ++i) idx.push_back(i);
      return idx;
    }());
    CHECK(nearest_neighbor_rms(second, c1) < before);
    CHECK_NOTHROW(a.validate());
  }
}

TEST_CASE("object library and background persistence") {
  scenegen::DemoSpec spec;
  spec.azimuth_resolution = deg2rad(0.8);
  const SequenceDataset seq = scenegen::make_demo_sequence(spec);
  ReconstructParams p;
  p.outlier_radius = 1.0;
  p.min_neighbors = 2;
  const auto map = accumulate_background(seq, p);
  const auto lib = build_object_library(seq, p);
  CHECK(lib.count("car_m0") == 1);
  for (const auto& [id, a] : lib) CHECK_NOTHROW(a.validate());

  oracle::TempDir dir("lib");
  save_background(map, dir / "bg", CloudFormat::binary_columnar);
  save_object_library(lib, dir / "assets", CloudFormat::binary_columnar);
  const auto map2 = load_background(dir / "bg");
  CHECK(map2.cloud == map.cloud);
  CHECK(map2.provenance.downsampled_points == map.provenance.downsampled_points);
  const auto lib2 = load_object_library(dir / "assets");
  REQUIRE(lib2.size() == lib.size());
  for (const auto& [id, a] : lib) {
    CHECK(lib2.at(id).cloud == a.cloud);
    CHECK(lib2.at(id).canonical_box == a.canonical_box);
    CHECK(lib2.at(id).label == a.label);
  }

  // Same inputs, same outputs.
  CHECK(accumulate_background(seq, p).cloud == map.cloud);
}

}  // TEST_SUITE
