// SPDX-License-Identifier: Apache-2.0
#include "lidarsim/raydrop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lidarsim/error.hpp"
#include "lidarsim/kdtree.hpp"
#include "lidarsim/parallel.hpp"
#include "lidarsim/random.hpp"

namespace lidarsim {

double incidence_angle(const Vec3& ray, const Vec3& normal) {
  const double denom = ray.norm() * normal.norm();
  if (denom == 0.0) throw DomainError("incidence angle needs non-zero ray and normal");
  const double c = std::clamp(std::abs(ray.dot(normal)) / denom, 0.0, 1.0);
  return std::acos(c);
}

FeatureSet ray_features(const PointCloud& cloud, std::span<const std::uint8_t> normal_valid) {
  if (!cloud.normals) throw DomainError("ray features need a normals channel");
  if (normal_valid.size() != cloud.size()) throw DomainError("normal validity mask has the wrong size");
  FeatureSet out;
  out.features.reserve(cloud.size());
  out.point_index.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.xyz[i];
    const double d = p.norm();
    if (!normal_valid[i] || d == 0.0) {
      ++out.skipped;
      continue;
    }
    out.features.push_back({d, incidence_angle(p, (*cloud.normals)[i]),
                            cloud.intensity ? (*cloud.intensity)[i] : 0.0});
    out.point_index.push_back(i);
  }
  return out;
}

FeatureSet ray_features(const SimulatedFrame& frame) {
  return ray_features(frame.cloud, frame.normal_valid);
}

int AxisBins::count() const {
  return std::max(1, static_cast<int>(std::ceil((max - min) / step - 1e-9)));
}

int AxisBins::index(double v) const {
  const double f = std::floor((v - min) / step);
  if (!(f >= 0.0)) return 0;
  return static_cast<int>(std::min<double>(f, count() - 1));
}

void ParamBins::validate() const {
  for (const AxisBins* a : {&distance, &incidence, &intensity}) {
    if (!(a->max > a->min) || !(a->step > 0.0) || !std::isfinite(a->max) || !std::isfinite(a->min))
      throw DomainError("parameter-space bins need min < max and step > 0");
  }
}

std::size_t ParamVoxelGrid::linear_index(int d, int t, int i) const {
  return (static_cast<std::size_t>(d) * bins.incidence.count() + t) * bins.intensity.count() + i;
}

std::size_t ParamVoxelGrid::voxel_of(const RayFeature& f) const {
  return linear_index(bins.distance.index(f.distance), bins.incidence.index(f.incidence),
                      bins.intensity.index(f.intensity));
}

Eigen::Vector3i ParamVoxelGrid::coords(std::size_t voxel) const {
  const int ni = bins.intensity.count(), nt = bins.incidence.count();
  const int i = static_cast<int>(voxel % ni);
  const int t = static_cast<int>((voxel / ni) % nt);
  const int d = static_cast<int>(voxel / (static_cast<std::size_t>(ni) * nt));
  return {d, t, i};
}

RayFeature ParamVoxelGrid::center(std::size_t voxel) const {
  const Eigen::Vector3i c = coords(voxel);
  return {bins.distance.center(c[0]), bins.incidence.center(c[1]), bins.intensity.center(c[2])};
}

bool ParamVoxelGrid::defined(std::size_t v) const {
  return sim_count[v] >= min_sim_count && sim_count[v] > 0 && real_count[v] <= sim_count[v];
}

std::optional<double> ParamVoxelGrid::ratio(std::size_t v) const {
  if (!defined(v)) return std::nullopt;
  return static_cast<double>(real_count[v]) / static_cast<double>(sim_count[v]);
}

std::size_t ParamVoxelGrid::defined_count() const {
  std::size_t n = 0;
  for (std::size_t v = 0; v < voxel_count(); ++v) n += defined(v) ? 1 : 0;
  return n;
}

namespace {

bool admissible(const RayFeature& f) {
  return std::isfinite(f.distance) && std::isfinite(f.incidence) && std::isfinite(f.intensity);
}

}  // namespace

ParamVoxelGrid build_param_grid(std::span<const RayFeature> sim, std::span<const RayFeature> real,
                                const ParamBins& bins, std::size_t min_sim_count) {
  bins.validate();
  if (sim.empty() || real.empty()) throw DomainError("parameter grid needs simulated and real features");
  ParamVoxelGrid g;
  g.bins = bins;
  g.min_sim_count = min_sim_count;
  const std::size_t n = static_cast<std::size_t>(bins.distance.count()) * bins.incidence.count() *
                        bins.intensity.count();
  g.sim_count.assign(n, 0);
  g.real_count.assign(n, 0);
  for (const auto& f : sim) {
    if (!admissible(f)) continue;
    ++g.sim_count[g.voxel_of(f)];
    ++g.admitted_sim;
  }
  for (const auto& f : real) {
    if (!admissible(f)) continue;
    ++g.real_count[g.voxel_of(f)];
    ++g.admitted_real;
  }
  return g;
}

LookupTable::LookupTable(ParamVoxelGrid grid) : grid_(std::move(grid)) {
  std::vector<Vec3> defined_coords;
  std::vector<std::size_t> defined_voxels;
  for (std::size_t v = 0; v < grid_.voxel_count(); ++v) {
    if (grid_.defined(v)) {
      defined_coords.push_back(grid_.coords(v).cast<double>());
      defined_voxels.push_back(v);
    }
  }
  if (defined_voxels.empty()) throw DomainError("lookup table has no defined voxels");
  const KdTree tree(defined_coords);
  value_.resize(grid_.voxel_count());
  parallel_for(grid_.voxel_count(), [&](std::size_t v) {
    const std::size_t src =
        grid_.defined(v) ? v : defined_voxels[tree.nearest(grid_.coords(v).cast<double>()).index];
    value_[v] = *grid_.ratio(src);
  });
}

double LookupTable::predict(const RayFeature& f) const { return value_[grid_.voxel_of(f)]; }

double predict_return_prob(const ReturnModel& model, const RayFeature& f) {
  return std::visit([&](const auto& m) { return m.predict(f); }, model);
}

RaydropResult apply_raydrop(const SimulatedFrame& frame, const ReturnModel& model, double threshold,
                            DropMode mode, std::uint64_t seed, std::size_t normal_neighbors) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw DomainError("threshold must lie in [0, 1]");
  SimulatedFrame with_normals;
  const SimulatedFrame* src = &frame;
  if (!frame.cloud.normals || frame.normal_valid.size() != frame.cloud.size()) {
    with_normals = frame;
    attach_normals(with_normals, normal_neighbors);
    src = &with_normals;
  }
  const FeatureSet fs = ray_features(*src);
  const std::size_t n = src->cloud.size();

  RaydropResult out;
  out.keep.assign(n, 1);
  out.probability.assign(n, std::numeric_limits<double>::quiet_NaN());
  out.featureless = fs.skipped;
  parallel_for(fs.features.size(), [&](std::size_t k) {
    const std::size_t i = fs.point_index[k];
    const double r = predict_return_prob(model, fs.features[k]);
    out.probability[i] = r;
    if (mode == DropMode::threshold) {
      out.keep[i] = r >= threshold;
    } else {
      const std::uint64_t counter = src->ray_index.size() == n ? src->ray_index[i] : i;
      out.keep[i] = hash_uniform(seed, counter) < r;
    }
  });

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n; ++i)
    if (out.keep[i]) kept.push_back(i);
  out.frame.cloud = src->cloud.select(kept);
  out.frame.hit.assign(src->hit.size(), 0);
  for (std::size_t i : kept) {
    if (!src->ray_index.empty()) {
      out.frame.ray_index.push_back(src->ray_index[i]);
      if (src->ray_index[i] < out.frame.hit.size()) out.frame.hit[src->ray_index[i]] = 1;
    }
    if (!src->normal_valid.empty()) out.frame.normal_valid.push_back(src->normal_valid[i]);
  }
  return out;
}

Json to_json(const ParamVoxelGrid& g) {
  auto axis = [](const AxisBins& a) { return Json{{"min", a.min}, {"max", a.max}, {"step", a.step}}; };
  Json voxels = Json::array();
  for (std::size_t v = 0; v < g.voxel_count(); ++v) {
    if (g.sim_count[v] == 0 && g.real_count[v] == 0) continue;
    const Eigen::Vector3i c = g.coords(v);
    Json entry{{"index", {c[0], c[1], c[2]}}, {"sim", g.sim_count[v]}, {"real", g.real_count[v]}};
    if (auto r = g.ratio(v)) entry["ratio"] = *r;
    voxels.push_back(std::move(entry));
  }
  return Json{{"bins",
               {{"distance", axis(g.bins.distance)},
                {"incidence", axis(g.bins.incidence)},
                {"intensity", axis(g.bins.intensity)}}},
              {"min_sim_count", g.min_sim_count},
              {"admitted_sim", g.admitted_sim},
              {"admitted_real", g.admitted_real},
              {"voxels", voxels}};
}

ParamVoxelGrid param_grid_from_json(const Json& j) {
  auto axis = [](const Json& a) {
    return AxisBins{a.at("min").get<double>(), a.at("max").get<double>(), a.at("step").get<double>()};
  };
  ParamVoxelGrid g;
  const Json& b = j.at("bins");
  g.bins = {axis(b.at("distance")), axis(b.at("incidence")), axis(b.at("intensity"))};
  g.bins.validate();
  g.min_sim_count = j.at("min_sim_count").get<std::size_t>();
  g.admitted_sim = j.at("admitted_sim").get<std::size_t>();
  g.admitted_real = j.at("admitted_real").get<std::size_t>();
  const std::size_t n = static_cast<std::size_t>(g.bins.distance.count()) * g.bins.incidence.count() *
                        g.bins.intensity.count();
  g.sim_count.assign(n, 0);
  g.real_count.assign(n, 0);
  for (const auto& v : j.at("voxels")) {
    const auto& idx = v.at("index");
    const int d = idx.at(0).get<int>(), t = idx.at(1).get<int>(), i = idx.at(2).get<int>();
    if (d < 0 || d >= g.bins.distance.count() || t < 0 || t >= g.bins.incidence.count() || i < 0 ||
        i >= g.bins.intensity.count())
      throw DomainError("voxel index out of range");
    const std::size_t lin = g.linear_index(d, t, i);
    g.sim_count[lin] = v.at("sim").get<std::uint64_t>();
    g.real_count[lin] = v.at("real").get<std::uint64_t>();
  }
  return g;
}

}  // namespace lidarsim
