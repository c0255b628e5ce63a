// SPDX-License-Identifier: Apache-2.0
// End-to-end acceptance checks; prints one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lidarsim/error.hpp"
#include "lidarsim/kdtree.hpp"
#include "lidarsim/metrics.hpp"
#include "lidarsim/parallel.hpp"
#include "lidarsim/raydrop.hpp"
#include "lidarsim/reconstruct.hpp"
#include "lidarsim/scenegen.hpp"
#include "lidarsim/synth.hpp"
#include "oracles.hpp"
#include "project.hpp"

using namespace lidarsim;
namespace fs = std::filesystem;

namespace {

#ifdef LIDARSIM_CLI_PATH
const std::string kCli = LIDARSIM_CLI_PATH;
#else
const std::string kCli;
#endif

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------- raycasting

// Three walls and a box in front of the sensor at the origin.
scenegen::AnalyticWorld walls_and_box() {
  scenegen::AnalyticWorld w;
  const Vec3 up = Vec3::UnitZ();
  w.add({Vec3(8, 0, -1), Vec3::UnitY(), up, 2.0, 2.5, 0.6});
  const Vec3 left = Vec3(-4, 4, 0).normalized(), right = Vec3(-4, -4, 0).normalized();
  w.add({Vec3(6, 4, -1), left, up, std::sqrt(8.0), 2.5, 0.4});
  w.add({Vec3(6, -4, -1), right, up, std::sqrt(8.0), 2.5, 0.5});
  w.add_box(OrientedBox3::make(Vec3(5, 0.5, -1.5), Vec3(1.0, 1.2, 1.0), 0.4), 0.8);
  return w;
}

struct RayCase {
  SphericalDirection ray;
  double range = 0.0;  // analytic
};

// Pixel-centered rays whose whole pixel footprint lies on a single face.
std::vector<RayCase> interior_rays(const scenegen::AnalyticWorld& w, const RaycastConfig& cfg, double az_limit,
                                   std::size_t& edge_rays) {
  std::vector<RayCase> out;
  edge_rays = 0;
  const double da = cfg.azimuth_step(), de = cfg.elevation_step();
  for (int row = 0; row < cfg.height; ++row) {
    for (int col = 0; col < cfg.width; ++col) {
      const double az = cfg.azimuth_min + (col + 0.5) * da;
      if (std::abs(az) > az_limit) continue;
      const double el = cfg.elevation_min + (row + 0.5) * de;
      const auto hit = w.intersect(Vec3::Zero(), direction_from_angles(az, el), 75.0);
      if (!hit) continue;
      bool single = true;
      for (double sa : {-0.5, 0.5})
        for (double se : {-0.5, 0.5}) {
          const auto h = w.intersect(Vec3::Zero(), direction_from_angles(az + sa * da, el + se * de), 75.0);
          single = single && h && h->face == hit->face;
        }
      if (!single) {
        ++edge_rays;
        continue;
      }
      out.push_back({{az, el, std::nullopt}, hit->range});
    }
  }
  return out;
}

BeamTable beams_of(const std::vector<RayCase>& rays) {
  BeamTable t;
  for (const auto& r : rays) t.rays.push_back(r.ray);
  return t;
}

void c1(Verdict& v) {
  const auto world = walls_and_box();
  const double density = 20000.0;
  const PointCloud scene = world.sample(density, 101);
  const RaycastConfig cfg;
  std::size_t edges = 0;
  const auto rays = interior_rays(world, cfg, deg2rad(60), edges);
  const BeamTable beams = beams_of(rays);

  set_default_workers(1);
  const auto t0 = Clock::now();
  const SimulatedFrame f = raycast_fpa(scene, {}, beams, cfg);
  const double elapsed = seconds_since(t0);

  double sq = 0.0;
  for (std::size_t k = 0; k < f.cloud.size(); ++k) {
    const double e = f.cloud.xyz[k].norm() - rays[f.ray_index[k]].range;
    sq += e * e;
  }
  const double rmse = std::sqrt(sq / std::max<std::size_t>(f.cloud.size(), 1));
  v.detail << "fpa 2560x128 peak 0.20 m: depth rmse " << rmse << " m over " << f.cloud.size() << " of "
           << rays.size() << " single-surface rays (" << edges << " silhouette rays excluded), scene "
           << scene.size() << " pts at " << density << " pts/m^2, " << elapsed << " s on 1 worker";
  v.require(density >= 400.0, "sampling density >= 400 pts/m^2");
  v.require(f.cloud.size() >= 10000, ">= 1e4 rays evaluated");
  v.require(f.cloud.size() == rays.size(), "every evaluated ray returns");
  v.require(rmse < 0.02, "rmse < 2 cm");
  v.require(elapsed < 60.0, "runtime < 60 s");
}

void c2(Verdict& v) {
  const auto world = walls_and_box();
  const RaycastConfig cfg;
  std::size_t edges = 0;
  const auto rays = interior_rays(world, cfg, deg2rad(60), edges);
  const BeamTable beams = beams_of(rays);
  v.detail << "radial noise sd 0.05 m:";
  for (std::uint64_t seed : {201, 202, 203}) {
    PointCloud scene = world.sample(20000.0, seed);
    Rng rng(seed * 7919);
    for (auto& p : scene.xyz) p *= 1.0 + rng.normal(0.0, 0.05) / p.norm();
    const auto fpa = raycast_fpa(scene, {}, beams, cfg);
    const auto cp = raycast_cp(scene, {}, beams, cfg);
    std::map<std::size_t, double> fpa_err;
    for (std::size_t k = 0; k < fpa.cloud.size(); ++k)
      fpa_err[fpa.ray_index[k]] = std::abs(fpa.cloud.xyz[k].norm() - rays[fpa.ray_index[k]].range);
    double ef = 0.0, ec = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < cp.cloud.size(); ++k) {
      const auto it = fpa_err.find(cp.ray_index[k]);
      if (it == fpa_err.end()) continue;
      ef += it->second;
      ec += std::abs(cp.cloud.xyz[k].norm() - rays[cp.ray_index[k]].range);
      ++n;
    }
    ef /= std::max<std::size_t>(n, 1);
    ec /= std::max<std::size_t>(n, 1);
    v.detail << " seed " << seed << " fpa " << ef << " m vs cp " << ec << " m (" << n << " rays);";
    v.require(n >= 10000, "seed " + std::to_string(seed) + ": >= 1e4 rays");
    v.require(ef <= ec, "seed " + std::to_string(seed) + ": fpa error <= cp error");
  }
}

// ------------------------------------------------------------------- raydrop

ParamBins acceptance_bins() {
  ParamBins b;
  b.distance = {0.0, 80.0, 4.0};
  b.incidence = {0.0, kPi / 2, deg2rad(10.0)};
  b.intensity = {0.0, 1.0, 0.1};
  return b;
}

double law(const RayFeature& f) { return scenegen::default_drop_law(f.distance, f.incidence, f.intensity); }

SimulatedFrame scanned_frame(const scenegen::DemoSpec& spec, std::size_t frame) {
  const auto world = scenegen::demo_world(spec, frame);
  const auto beams = scenegen::lattice_beams(spec.beams, spec.elevation_min, spec.elevation_max,
                                             spec.azimuth_resolution, spec.max_range);
  SimulatedFrame f;
  f.cloud = scenegen::scan(world.world, world.sensor_pose, beams);
  f.hit.assign(f.cloud.size(), 1);
  for (std::size_t i = 0; i < f.cloud.size(); ++i) f.ray_index.push_back(i);
  attach_normals(f, 10);
  return f;
}

// Keep flags drawn from the law on each point's feature; featureless points are kept.
std::vector<std::uint8_t> thin_by_law(const SimulatedFrame& f, Rng& rng) {
  const FeatureSet fs = ray_features(f);
  std::vector<std::uint8_t> keep(f.cloud.size(), 1);
  for (std::size_t k = 0; k < fs.features.size(); ++k) keep[fs.point_index[k]] = rng.uniform() < law(fs.features[k]);
  return keep;
}

struct RaydropFixture {
  scenegen::DemoSpec spec;
  std::vector<RayFeature> sim, real;
  ParamVoxelGrid grid;
  Surrogate mlp;
  SimulatedFrame held_out;
  std::size_t held_out_thinned = 0;

  RaydropFixture() {
    spec.frames = 17;
    const std::size_t train_frames = 16;
    Rng rng(301);
    for (std::size_t f = 0; f < train_frames; ++f) {
      const SimulatedFrame frame = scanned_frame(spec, f);
      const FeatureSet fs = ray_features(frame);
      for (const auto& x : fs.features) {
        sim.push_back(x);
        if (rng.uniform() < law(x)) real.push_back(x);
      }
    }
    grid = build_param_grid(sim, real, acceptance_bins(), 20);
    mlp = train_surrogate(grid, {}, 302);
    held_out = scanned_frame(spec, train_frames);
    Rng hrng(303);
    const auto keep = thin_by_law(held_out, hrng);
    held_out_thinned = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), 1));
  }
};

const RaydropFixture& raydrop_fixture() {
  static const RaydropFixture f;
  return f;
}

void c3(Verdict& v) {
  const auto& fx = raydrop_fixture();
  const auto& g = fx.grid;

  // Expected voxel ratio: the law averaged over the voxel's simulated members.
  std::vector<double> law_sum(g.voxel_count(), 0.0);
  for (const auto& x : fx.sim) law_sum[g.voxel_of(x)] += law(x);
  std::size_t defined = 0, within = 0;
  double mlp_err = 0.0, table_dev = 0.0;
  const LookupTable table(g);
  for (std::size_t vx = 0; vx < g.voxel_count(); ++vx) {
    const auto r = g.ratio(vx);
    if (!r) continue;
    ++defined;
    const double n = static_cast<double>(g.sim_count[vx]);
    const double p = law_sum[vx] / n;
    if (std::abs(*r - p) <= 3.0 * std::sqrt(p * (1.0 - p) / n) + 1e-12) ++within;
    const RayFeature c = g.center(vx);
    mlp_err += std::abs(fx.mlp.predict(c) - law(c));
    table_dev += std::abs(fx.mlp.predict(c) - table.predict(c));
  }
  const double within_frac = static_cast<double>(within) / std::max<std::size_t>(defined, 1);
  mlp_err /= std::max<std::size_t>(defined, 1);
  table_dev /= std::max<std::size_t>(defined, 1);

  const ReturnModel model = fx.mlp;
  std::vector<std::size_t> counts;
  std::vector<std::uint8_t> prev(fx.held_out.cloud.size(), 1);
  bool nested = true;
  for (double t : {0.28, 0.30, 0.32, 0.34}) {
    const auto r = apply_raydrop(fx.held_out, model, t);
    for (std::size_t i = 0; i < prev.size(); ++i) nested = nested && (!r.keep[i] || prev[i]);
    prev = r.keep;
    counts.push_back(r.frame.cloud.size());
  }
  v.detail << fx.sim.size() << " sim / " << fx.real.size() << " thinned features, " << defined
           << " defined voxels: " << 100.0 * within_frac << "% within binomial 3 sigma; mean |mlp - law| "
           << mlp_err << "; mean |mlp - table| " << table_dev << "; keep counts at 0.28/0.30/0.32/0.34:";
  for (auto c : counts) v.detail << ' ' << c;
  v.require(defined >= 50, "enough defined voxels");
  v.require(within_frac >= 0.99, ">= 99% of voxels within 3 sigma");
  v.require(mlp_err <= 0.05, "mlp error <= 0.05");
  v.require(table_dev <= 0.05, "table/mlp deviation <= 0.05");
  v.require(std::is_sorted(counts.rbegin(), counts.rend()), "keep counts non-increasing");
  v.require(nested, "keep sets nested");
}

void c4(Verdict& v) {
  const auto& fx = raydrop_fixture();
  const auto r = apply_raydrop(fx.held_out, ReturnModel(fx.mlp), 0.0, DropMode::bernoulli, 401);
  const double rel = (static_cast<double>(r.frame.cloud.size()) - static_cast<double>(fx.held_out_thinned)) /
                     static_cast<double>(fx.held_out_thinned);
  v.detail << "held-out frame: " << fx.held_out.cloud.size() << " simulated, " << fx.held_out_thinned
           << " kept by the true law, " << r.frame.cloud.size() << " kept by the learned model (bernoulli), "
           << "relative difference " << 100.0 * rel << "%";
  v.require(std::abs(rel) <= 0.05, "point count within 5%");
}

// ------------------------------------------------------------ sensor synthesis

void c5(Verdict& v) {
  scenegen::DemoSpec spec;
  spec.range_noise_sd = 0.02;
  const SequenceDataset seq = scenegen::make_demo_sequence(spec);
  ReconstructParams p;
  p.outlier_radius = 1.0;
  p.min_neighbors = 2;
  const BackgroundMap bg = accumulate_background(seq, p);
  const ObjectLibrary lib = build_object_library(seq, p);

  const double es = (spec.elevation_max - spec.elevation_min) / (spec.beams - 1);
  NewSensorSpec same;
  same.name = "same";
  for (int b = 0; b < spec.beams; ++b) same.elevations.push_back(spec.elevation_min + b * es);
  same.azimuth_resolution = spec.azimuth_resolution;
  same.azimuth_start = -kPi + spec.azimuth_resolution / 2;
  same.azimuth_end = kPi + spec.azimuth_resolution / 2 - 1e-9;
  same.max_range = spec.max_range;

  SynthOptions opt;
  opt.raycast.width = static_cast<int>(std::lround(2 * kPi / spec.azimuth_resolution));
  opt.raycast.height = spec.beams;
  opt.raycast.elevation_min = spec.elevation_min - es / 2;
  opt.raycast.elevation_max = spec.elevation_max + es / 2;
  const auto res = synthesize_dataset(seq, same, bg, lib, opt);

  // Baseline: the same simulator over a noiseless 4x super-resolved scan of the true scene.
  const int sr = 4;
  const auto beams = scenegen::lattice_beams(spec.beams, spec.elevation_min, spec.elevation_max,
                                             spec.azimuth_resolution, spec.max_range);
  const auto dense_beams =
      scenegen::lattice_beams(spec.beams * sr, spec.elevation_min - es / 2 + es / (2 * sr),
                              spec.elevation_max + es / 2 - es / (2 * sr), spec.azimuth_resolution / sr,
                              spec.max_range);
  double cd = 0.0, base = 0.0;
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    cd += chamfer(res.dataset.frames[f].cloud, seq.frames[f].cloud);
    const auto w = scenegen::demo_world(spec, f);
    PointCloud dense = transform_cloud(scenegen::scan(w.world, w.sensor_pose, dense_beams), w.sensor_pose);
    dense.beam_id.reset();
    base += chamfer(raycast_fpa(dense, w.sensor_pose, beams, opt.raycast).cloud, seq.frames[f].cloud);
  }
  cd /= static_cast<double>(seq.frames.size());
  base /= static_cast<double>(seq.frames.size());

  NewSensorSpec half = same;
  half.name = "half";
  half.elevations.clear();
  std::set<std::int32_t> wanted;
  for (int b = 0; b < spec.beams; b += 2) {
    half.elevations.push_back(same.elevations[static_cast<std::size_t>(b)]);
    half.beam_ids.push_back(b);
    wanted.insert(b);
  }
  const auto dec = synthesize_dataset(seq, half, bg, lib, opt);
  bool exact = dec.dataset.frames.size() == seq.frames.size();
  for (const auto& f : dec.dataset.frames) {
    const std::set<std::int32_t> got(f.cloud.beam_id->begin(), f.cloud.beam_id->end());
    exact = exact && got == wanted;
  }
  v.detail << "same sensor: mean chamfer " << cd << " vs baseline " << base << " (ratio " << cd / base
           << "); decimated spec beam set " << (exact ? "exact" : "mismatch") << " over "
           << dec.dataset.frames.size() << " frames";
  v.require(cd <= 2.0 * base, "chamfer <= 2x baseline");
  v.require(exact, "decimated beam set exact");
  v.require(res.dataset.frames.size() == seq.frames.size(), "frame count preserved");
}

// ------------------------------------------------------------------- metrics

Eigen::VectorXd features_oracle(const PointCloud& cloud, std::span<const OrientedBox3> boxes) {
  const int nx = 16, ny = 16, nz = 8;
  const double voxel = 0.25;
  const std::size_t cells = nx * ny * nz;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(2 * cells);
  std::vector<std::size_t> cropped;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (const auto& b : boxes)
      if (oracle::in_box(b, cloud.xyz[i], Vec3::Zero())) {
        cropped.push_back(i);
        break;
      }
  for (const auto& b : boxes) {
    std::map<std::size_t, std::pair<double, double>> acc;
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    for (auto i : cropped) {
      const Vec3 d = cloud.xyz[i] - b.center;
      const double l[3] = {c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z()};
      const int n[3] = {nx, ny, nz};
      int idx[3];
      bool inside = true;
      for (int k = 0; k < 3; ++k) {
        idx[k] = static_cast<int>(std::floor((l[k] + n[k] * voxel / 2) / voxel));
        inside = inside && idx[k] >= 0 && idx[k] < n[k];
      }
      if (!inside) continue;
      auto& a = acc[(static_cast<std::size_t>(idx[0]) * ny + idx[1]) * nz + idx[2]];
      a.first += 1.0;
      a.second += cloud.intensity ? (*cloud.intensity)[i] : 0.0;
    }
    for (const auto& [cell, a] : acc) {
      sum[cell] += std::log1p(a.first);
      sum[cells + cell] += a.second / a.first;
    }
  }
  return sum;
}

void c6(Verdict& v) {
  double worst_chamfer = 0.0, worst_lpcs = 0.0;
  bool identity = true, symmetry = true;
  const DefaultExtractor F;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const PointCloud a = oracle::random_cloud(200, 500 + seed, 2.0, kIntensity);
    const PointCloud b = oracle::random_cloud(200, 600 + seed, 2.0, kIntensity);
    worst_chamfer = std::max(worst_chamfer, std::abs(chamfer(a, b) - oracle::chamfer(a, b)));
    identity = identity && chamfer(a, a) == 0.0;
    symmetry = symmetry && chamfer(a, b) == chamfer(b, a);

    const std::vector<OrientedBox3> boxes{OrientedBox3::make(Vec3(0.3, -0.2, 0.1), Vec3(3, 2.5, 1.8), 0.3 * seed),
                                          OrientedBox3::make(Vec3(-1, 1, 0), Vec3(1.5, 1.5, 1.5), -0.2)};
    const double l = lpcs(a, b, boxes, F);
    worst_lpcs = std::max(worst_lpcs, std::abs(l - (features_oracle(a, boxes) - features_oracle(b, boxes)).cwiseAbs().sum()));
    identity = identity && lpcs(a, a, boxes, F) == 0.0;
    symmetry = symmetry && l == lpcs(b, a, boxes, F);
  }

  // Perturbation ladder on a densely sampled object.
  const auto box = OrientedBox3::make(Vec3(8, 3, 0.75), Vec3(3.6, 1.8, 1.5), 0.4, "obj", ObjectClass::vehicle);
  scenegen::AnalyticWorld w;
  w.add_box(box, 0.6);
  const PointCloud obj = w.sample(2000.0, 701);
  const std::vector<OrientedBox3> crop{OrientedBox3::make(box.center, box.dims + Vec3::Constant(0.4), box.yaw)};
  std::vector<double> ladder;
  for (double sigma : {0.0, 0.02, 0.05, 0.10}) {
    PointCloud q = obj;
    Rng rng(702);
    for (auto& p : q.xyz) p += Vec3(rng.normal(0, sigma), rng.normal(0, sigma), rng.normal(0, sigma));
    ladder.push_back(lpcs(obj, q, crop, F));
  }
  const bool strict = ladder[0] < ladder[1] && ladder[1] < ladder[2] && ladder[2] < ladder[3];
  v.detail << "chamfer max |fast - brute| " << worst_chamfer << ", lpcs max |fast - brute| " << worst_lpcs
           << ", identity " << (identity ? "ok" : "broken") << ", symmetry " << (symmetry ? "ok" : "broken")
           << "; lpcs ladder 0/2/5/10 cm:";
  for (double x : ladder) v.detail << ' ' << x;
  v.require(worst_chamfer <= 1e-9, "chamfer brute force");
  v.require(worst_lpcs <= 1e-9, "lpcs brute force");
  v.require(identity, "identity");
  v.require(symmetry, "symmetry");
  v.require(strict, "strictly monotone ladder");
}

// ------------------------------------------------------------------ geometry

double max_normal_error(const PointCloud& cloud, const std::function<Vec3(const Vec3&)>& truth,
                        const std::function<bool(const Vec3&)>& interior) {
  const NormalEstimate est = estimate_normals(cloud, 10);
  double worst = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!interior(cloud.xyz[i])) continue;
    if (!est.valid[i]) return 180.0;
    const Vec3 n = (*est.cloud.normals)[i];
    const Vec3 t = truth(cloud.xyz[i]);
    worst = std::max(worst, oracle::angle_between_deg(n.dot(t) < 0 ? -n : n, t));
  }
  return worst;
}

void c7(Verdict& v) {
  // ICP on a 5k-point object.
  scenegen::AnalyticWorld car;
  car.add_box(OrientedBox3::make(Vec3(0, 0, 0.8), Vec3(4.2, 1.8, 1.6), 0.0), 0.5);
  car.add_box(OrientedBox3::make(Vec3(-0.3, 0, 1.9), Vec3(2.2, 1.6, 0.6), 0.0), 0.5);
  PointCloud target = car.sample(120.0, 801);
  target = target.select([&] {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < target.size() && idx.size() < 5000; ++i) idx.push_back(i);
    return idx;
  }());
  const RigidTransform truth =
      RigidTransform::from_axis_angle(Vec3(0.2, -0.3, 1.0).normalized(), deg2rad(5.0), Vec3(0.06, -0.08, 0.0));
  const PointCloud source = transform_cloud(target, truth.inverse());
  const IcpResult icp = icp_align(source, target, RigidTransform{});
  const double dt = (icp.transform.translation() - truth.translation()).norm();
  const Eigen::AngleAxisd dr(icp.transform.rotation() * truth.rotation().transpose());
  const double drot = rad2deg(std::abs(dr.angle()));

  // Normals on analytic surfaces.
  Rng rng(802);
  PointCloud plane, sphere, cylinder;
  const int n = 4000;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    plane.xyz.push_back(Vec3(3, 0, 1) + a * Vec3(0.6, 0.8, 0) + b * Vec3(0, 0, 1));
    const double z = 1.0 - 2.0 * (i + 0.5) / n, r = std::sqrt(1.0 - z * z);
    sphere.xyz.push_back(Vec3(10, 0, 0) + 2.0 * Vec3(r * std::cos(golden * i), r * std::sin(golden * i), z));
    const double th = 2 * kPi * (i % 100) / 100.0;
    cylinder.xyz.push_back(Vec3(std::cos(th), std::sin(th), -1.5 + 3.0 * (i / 100) / 39.0) + Vec3(0, 6, 0));
  }
  const double e_plane = max_normal_error(
      plane, [](const Vec3&) { return Vec3(0.8, -0.6, 0); },
      [](const Vec3& p) { return std::abs((p - Vec3(3, 0, 1)).dot(Vec3(0.6, 0.8, 0))) < 1.8 && std::abs(p.z() - 1) < 1.8; });
  const double e_sphere = max_normal_error(
      sphere, [](const Vec3& p) { return (p - Vec3(10, 0, 0)).normalized(); }, [](const Vec3&) { return true; });
  const double e_cyl = max_normal_error(
      cylinder, [](const Vec3& p) { return Vec3(p.x(), p.y() - 6, 0).normalized(); },
      [](const Vec3& p) { return std::abs(p.z()) < 1.3; });

  // Round-trip and brute-force oracles.
  const PointCloud c = oracle::random_cloud(2000, 803, 30.0, kIntensity | kBeamId);
  const bool lfpc = decode_lfpc(encode_lfpc(c)) == c;
  const bool ply = decode_ply(encode_ply_ascii(c)) == c;
  const KdTree tree(c.xyz);
  bool knn = true;
  for (int q = 0; q < 200; ++q) {
    const Vec3 x(rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-30, 30));
    knn = knn && tree.nearest(x).sq_distance == oracle::nearest_sq(x, c);
  }
  const auto box = OrientedBox3::make(Vec3(1, 2, 0), Vec3(20, 10, 8), 0.7);
  const auto crop = crop_by_box(c, box);
  std::size_t brute_inside = 0;
  for (const auto& p : c.xyz) brute_inside += oracle::in_box(box, p, Vec3::Zero());
  const bool crop_ok = crop.inside.size() == brute_inside && crop.inside.size() + crop.outside.size() == c.size();

  v.detail << "icp on " << target.size() << " pts: translation error " << dt << " m, rotation error " << drot
           << " deg (" << icp.iterations << " iterations); normals max error plane " << e_plane << " sphere "
           << e_sphere << " cylinder " << e_cyl << " deg; lfpc " << (lfpc ? "ok" : "broken") << ", ply "
           << (ply ? "ok" : "broken") << ", kd-tree " << (knn ? "ok" : "broken") << ", crop "
           << (crop_ok ? "ok" : "broken");
  v.require(target.size() == 5000, "5k-point object");
  v.require(dt <= 1e-3, "translation within 1e-3 m");
  v.require(drot <= 0.1, "rotation within 0.1 deg");
  v.require(std::max({e_plane, e_sphere, e_cyl}) <= 2.0, "normals within 2 deg");
  v.require(lfpc && ply && knn && crop_ok, "round-trip and brute-force oracles");
}

// --------------------------------------------------------------- determinism

void c8(Verdict& v) {
  if (kCli.empty()) {
    v.require(false, "cli binary not built");
    return;
  }
  oracle::TempDir tmp("acceptance-cli");
  const fs::path cfg = project::write_demo_project(tmp.path());
  const std::vector<std::string> stages{"reconstruct", "raycast", "raydrop-train", "raydrop-apply",
                                        "synth",       "metrics", "gridsearch"};
  std::vector<std::map<std::string, std::string>> runs;
  for (const std::string workers : {"1", "1", "8"}) {
    for (const auto& stage : stages) {
      const auto r = project::run_cli(kCli, {stage, "--config", cfg.string(), "--workers", workers}, tmp / "logs");
      if (r.exit_code != 0) {
        v.require(false, stage + " exited " + std::to_string(r.exit_code) + ": " + r.err);
        return;
      }
    }
    runs.push_back(project::data_files(tmp / "out"));
  }
  std::size_t differing = 0;
  for (const auto& [path, bytes] : runs[0]) {
    for (std::size_t k = 1; k < runs.size(); ++k) {
      const auto it = runs[k].find(path);
      if (it == runs[k].end() || it->second != bytes) {
        ++differing;
        v.detail << " differs: " << path << " (run " << k << ")";
      }
    }
  }
  const bool same_sets = runs[0].size() == runs[1].size() && runs[0].size() == runs[2].size();
  v.detail << stages.size() << " stages run at workers 1, 1, 8: " << runs[0].size() << " data files compared, "
           << differing << " differ";
  v.require(differing == 0 && same_sets, "byte-identical data outputs");
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria{
      {"1", c1}, {"2", c2}, {"3", c3}, {"4", c4}, {"5", c5}, {"6", c6}, {"7", c7}, {"8", c8}};
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) only.insert(argv[i]);
  const int workers = default_workers();
  bool all = true;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Verdict v;
    set_default_workers(workers);
    const auto t0 = Clock::now();
    try {
      fn(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    all = all && v.pass;
    std::printf("criterion %s: %s  (%.1f s) %s\n", id.c_str(), v.pass ? "PASS" : "FAIL", seconds_since(t0),
                v.detail.str().c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
