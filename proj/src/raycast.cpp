// SPDX-License-Identifier: Apache-2.0
#include "lidarsim/raycast.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lidarsim/error.hpp"
#include "lidarsim/json_io.hpp"
#include "lidarsim/parallel.hpp"

namespace lidarsim {

void BeamTable::validate() const {
  if (!(max_range > 0.0) || !std::isfinite(max_range))
    throw DomainError("beam table max_range must be positive");
  if (!beam_ids.empty() && beam_ids.size() != rays.size())
    throw DomainError("beam table has " + std::to_string(beam_ids.size()) + " ids for " +
                      std::to_string(rays.size()) + " rays");
  for (const auto& r : rays) {
    if (!std::isfinite(r.azimuth) || !std::isfinite(r.elevation))
      throw DomainError("beam direction is not finite");
    if (r.elevation < -kPi / 2 || r.elevation > kPi / 2)
      throw DomainError("beam elevation outside [-pi/2, pi/2]");
  }
}

BeamTable load_beam_table(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  BeamTable t;
  try {
    t.max_range = j.at("max_range").get<double>();
    bool any_id = false;
    for (const auto& r : j.at("rays")) {
      t.rays.push_back({normalize_angle(deg2rad(r.at("azimuth_deg").get<double>())),
                        deg2rad(r.at("elevation_deg").get<double>()),
                        std::nullopt});
      if (r.contains("beam_id")) {
        any_id = true;
        t.beam_ids.push_back(r["beam_id"].get<std::int32_t>());
      }
    }
    if (any_id && t.beam_ids.size() != t.rays.size())
      throw LoadError(path.string(), std::nullopt, "beam_id must be given for all rays or none");
    t.validate();
  } catch (const Json::exception& e) {
    throw LoadError(path.string(), std::nullopt, std::string("schema mismatch: ") + e.what());
  } catch (const DomainError& e) {
    throw LoadError(path.string(), std::nullopt, e.what());
  }
  return t;
}

void save_beam_table(const BeamTable& table, const std::filesystem::path& path) {
  table.validate();
  Json rays = Json::array();
  for (std::size_t i = 0; i < table.rays.size(); ++i) {
    Json r{{"azimuth_deg", rad2deg(table.rays[i].azimuth)},
           {"elevation_deg", rad2deg(table.rays[i].elevation)}};
    if (!table.beam_ids.empty()) r["beam_id"] = table.beam_ids[i];
    rays.push_back(std::move(r));
  }
  write_json_file(path, Json{{"max_range", table.max_range}, {"rays", rays}});
}

void RaycastConfig::validate() const {
  if (width < 1 || height < 1) throw DomainError("range image dimensions must be >= 1");
  if (!(peak_width > 0.0)) throw DomainError("peak width must be positive");
  if (!(idw_power >= 0.0) || !std::isfinite(idw_power))
    throw DomainError("idw power must be a finite non-negative number");
  if (!(azimuth_span > 0.0) || azimuth_span > 2.0 * kPi + 1e-12)
    throw DomainError("azimuth span must lie in (0, 2*pi]");
  if (!(azimuth_min >= -kPi && azimuth_min <= kPi)) throw DomainError("azimuth_min outside [-pi, pi]");
  if (!(elevation_min < elevation_max) || elevation_min < -kPi / 2 || elevation_max > kPi / 2)
    throw DomainError("elevation span must be an increasing interval inside [-pi/2, pi/2]");
}

bool RaycastConfig::full_circle() const { return azimuth_span >= 2.0 * kPi - 1e-12; }

std::optional<std::pair<int, int>> RaycastConfig::bin_of(double azimuth, double elevation) const {
  const double rel_el = elevation - elevation_min;
  if (!(rel_el >= 0.0) || elevation > elevation_max) return std::nullopt;
  double rel_az = azimuth - azimuth_min;
  if (rel_az < 0.0) rel_az += 2.0 * kPi;
  if (rel_az >= 2.0 * kPi) rel_az -= 2.0 * kPi;
  int col;
  if (full_circle()) {
    col = static_cast<int>(std::floor(rel_az / azimuth_step()));
    col = ((col % width) + width) % width;
  } else {
    if (rel_az > azimuth_span) return std::nullopt;
    col = std::min(static_cast<int>(std::floor(rel_az / azimuth_step())), width - 1);
  }
  const int row = std::min(static_cast<int>(std::floor(rel_el / elevation_step())), height - 1);
  return std::pair{col, row};
}

std::span<const std::size_t> RangeImageGrid::bin(int col, int row) const {
  const std::size_t b = static_cast<std::size_t>(row) * config.width + col;
  return std::span<const std::size_t>(members).subspan(offsets[b], offsets[b + 1] - offsets[b]);
}

RangeImageGrid project_to_grid(const PointCloud& scene, const RaycastConfig& config) {
  config.validate();
  RangeImageGrid grid;
  grid.config = config;
  const std::size_t n = scene.size();
  grid.depth.resize(n);
  grid.azimuth.resize(n);
  grid.elevation.resize(n);
  constexpr std::size_t kNoBin = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> bin_of_point(n, kNoBin);
  parallel_for(n, [&](std::size_t i) {
    const Vec3& p = scene.xyz[i];
    const double d = p.norm();
    grid.depth[i] = d;
    if (d == 0.0) {
      grid.azimuth[i] = grid.elevation[i] = 0.0;
      return;
    }
    const auto s = cartesian_to_spherical(p);
    grid.azimuth[i] = s.azimuth;
    grid.elevation[i] = s.elevation;
    if (auto b = config.bin_of(s.azimuth, s.elevation))
      bin_of_point[i] = static_cast<std::size_t>(b->second) * config.width + b->first;
  });

  const std::size_t bins = static_cast<std::size_t>(config.width) * config.height;
  grid.offsets.assign(bins + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (bin_of_point[i] == kNoBin) ++grid.out_of_fov;
    else ++grid.offsets[bin_of_point[i] + 1];
  }
  std::partial_sum(grid.offsets.begin(), grid.offsets.end(), grid.offsets.begin());
  grid.members.resize(grid.offsets.back());
  std::vector<std::size_t> cursor(grid.offsets.begin(), grid.offsets.end() - 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (bin_of_point[i] != kNoBin) grid.members[cursor[bin_of_point[i]]++] = i;
  }
  parallel_for(bins, [&](std::size_t b) {
    auto first = grid.members.begin() + static_cast<std::ptrdiff_t>(grid.offsets[b]);
    auto last = grid.members.begin() + static_cast<std::ptrdiff_t>(grid.offsets[b + 1]);
    std::sort(first, last, [&](std::size_t a, std::size_t c) {
      return grid.depth[a] < grid.depth[c] || (grid.depth[a] == grid.depth[c] && a < c);
    });
  });
  return grid;
}

RangeImage closest_depth_image(const RangeImageGrid& grid) {
  RangeImage img{grid.config.width, grid.config.height, {}};
  img.depth.assign(grid.bin_count(), kEmptyDepth);
  for (std::size_t b = 0; b < grid.bin_count(); ++b) {
    if (grid.offsets[b + 1] > grid.offsets[b])
      img.depth[b] = static_cast<float>(grid.depth[grid.members[grid.offsets[b]]]);
  }
  return img;
}

std::vector<std::size_t> first_peak(std::span<const double> depths, double peak_width) {
  std::vector<std::size_t> out;
  if (depths.empty()) return out;
  const double d_min = *std::min_element(depths.begin(), depths.end());
  for (std::size_t i = 0; i < depths.size(); ++i)
    if (depths[i] <= d_min + peak_width) out.push_back(i);
  return out;
}

std::vector<double> idw_weights(std::span<const AngularSample> samples, double ray_azimuth,
                                double ray_elevation, double power) {
  const std::size_t n = samples.size();
  std::vector<double> w(n, 0.0);
  if (n == 0) return w;
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double da = std::remainder(samples[i].azimuth - ray_azimuth, 2.0 * kPi);
    const double de = samples[i].elevation - ray_elevation;
    dist[i] = std::sqrt(da * da + de * de);
    if (dist[i] <= 1e-12) {
      w[i] = 1.0;
      return w;
    }
  }
  if (power == 1.0) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += w[i] = 1.0 / dist[i];
    for (auto& x : w) x /= total;
    return w;
  }
  // Log domain keeps large powers from overflowing.
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = -power * std::log(dist[i]);
    max_log = std::max(max_log, w[i]);
  }
  double total = 0.0;
  for (auto& x : w) total += x = std::exp(x - max_log);
  for (auto& x : w) x /= total;
  return w;
}

Eigen::VectorXd idw_average(std::span<const AngularSample> samples, const Eigen::MatrixXd& features,
                            double ray_azimuth, double ray_elevation, double power) {
  if (samples.empty()) throw DomainError("idw_average needs at least one sample");
  if (static_cast<std::size_t>(features.rows()) != samples.size())
    throw DomainError("feature rows do not match sample count");
  const auto w = idw_weights(samples, ray_azimuth, ray_elevation, power);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(features.cols());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] != 0.0) f += w[i] * features.row(static_cast<Eigen::Index>(i)).transpose();
  }
  return f;
}

SimulatedFrame raycast_grid(const PointCloud& scene, const RangeImageGrid& grid,
                            const BeamTable& beams, RaycastMethod method) {
  beams.validate();
  const std::size_t nrays = beams.rays.size();
  const bool has_int = scene.intensity.has_value();
  const bool has_elo = scene.elongation.has_value();
  const double peak_width = grid.config.peak_width;
  const double power = grid.config.idw_power;

  struct Hit {
    Vec3 xyz;
    double intensity = 0.0;
    double elongation = 0.0;
  };
  std::vector<std::optional<Hit>> hits(nrays);

  parallel_for(nrays, [&](std::size_t r) {
    const auto& ray = beams.rays[r];
    const auto bin = grid.config.bin_of(ray.azimuth, ray.elevation);
    if (!bin) return;
    const auto members = grid.bin(bin->first, bin->second);
    if (members.empty()) return;
    Hit h;
    if (method == RaycastMethod::cp) {
      const std::size_t i = members.front();
      h.xyz = scene.xyz[i];
      if (has_int) h.intensity = (*scene.intensity)[i];
      if (has_elo) h.elongation = (*scene.elongation)[i];
    } else {
      // Members are depth-sorted, so the first peak is a prefix.
      const double limit = grid.depth[members.front()] + peak_width;
      std::size_t count = 0;
      while (count < members.size() && grid.depth[members[count]] <= limit) ++count;
      std::vector<AngularSample> samples(count);
      for (std::size_t k = 0; k < count; ++k)
        samples[k] = {grid.azimuth[members[k]], grid.elevation[members[k]]};
      const auto w = idw_weights(samples, ray.azimuth, ray.elevation, power);
      h.xyz.setZero();
      for (std::size_t k = 0; k < count; ++k) {
        if (w[k] == 0.0) continue;
        const std::size_t i = members[k];
        h.xyz += w[k] * scene.xyz[i];
        if (has_int) h.intensity += w[k] * (*scene.intensity)[i];
        if (has_elo) h.elongation += w[k] * (*scene.elongation)[i];
      }
    }
    if (h.xyz.norm() > beams.max_range) return;
    hits[r] = h;
  });

  SimulatedFrame frame;
  frame.hit.assign(nrays, 0);
  unsigned channels = kBeamId;
  if (has_int) channels |= kIntensity;
  if (has_elo) channels |= kElongation;
  frame.cloud = PointCloud::with_channels(channels);
  for (std::size_t r = 0; r < nrays; ++r) {
    if (!hits[r]) continue;
    frame.hit[r] = 1;
    frame.ray_index.push_back(r);
    frame.cloud.xyz.push_back(hits[r]->xyz);
    if (has_int) frame.cloud.intensity->push_back(hits[r]->intensity);
    if (has_elo) frame.cloud.elongation->push_back(hits[r]->elongation);
    frame.cloud.beam_id->push_back(beams.beam_id(r));
  }
  return frame;
}

namespace {

SimulatedFrame raycast_scene(const PointCloud& scene, const RigidTransform& sensor_pose,
                             const BeamTable& beams, const RaycastConfig& config,
                             RaycastMethod method) {
  const PointCloud local = transform_cloud(scene, sensor_pose.inverse());
  const RangeImageGrid grid = project_to_grid(local, config);
  return raycast_grid(local, grid, beams, method);
}

}  // namespace

SimulatedFrame raycast_fpa(const PointCloud& scene, const RigidTransform& sensor_pose,
                           const BeamTable& beams, const RaycastConfig& config) {
  return raycast_scene(scene, sensor_pose, beams, config, RaycastMethod::fpa);
}

SimulatedFrame raycast_cp(const PointCloud& scene, const RigidTransform& sensor_pose,
                          const BeamTable& beams, const RaycastConfig& config) {
  return raycast_scene(scene, sensor_pose, beams, config, RaycastMethod::cp);
}

}  // namespace lidarsim
