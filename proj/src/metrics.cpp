// SPDX-License-Identifier: Apache-2.0
#include "lidarsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <tuple>

#include "lidarsim/error.hpp"
#include "lidarsim/kdtree.hpp"
#include "lidarsim/parallel.hpp"

namespace lidarsim {

namespace {

double mean_nn_sq(const std::vector<Vec3>& from, const KdTree& to) {
  std::vector<double> d(from.size());
  parallel_for(from.size(), [&](std::size_t i) { d[i] = to.nearest(from[i]).sq_distance; });
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

Eigen::Vector3i grid_dims(double voxel, const Vec3& extent) {
  Eigen::Vector3i n;
  for (int k = 0; k < 3; ++k) n[k] = static_cast<int>(std::ceil(extent[k] / voxel - 1e-9));
  return n;
}

}  // namespace

double chamfer(const PointCloud& p, const PointCloud& q) {
  if (p.empty() || q.empty()) throw DomainError("chamfer distance needs two non-empty clouds");
  const KdTree tp(p.xyz), tq(q.xyz);
  return mean_nn_sq(p.xyz, tq) + mean_nn_sq(q.xyz, tp);
}

Eigen::VectorXd default_extractor(const PointCloud& cloud, double voxel, const Vec3& crop_extent) {
  if (!(voxel > 0.0)) throw DomainError("extractor voxel must be positive");
  if (!(crop_extent.array() > 0.0).all()) throw DomainError("extractor crop extent must be positive");
  const Eigen::Vector3i n = grid_dims(voxel, crop_extent);
  const std::size_t cells = static_cast<std::size_t>(n.prod());
  std::vector<double> count(cells, 0.0), isum(cells, 0.0);
  const Vec3 lo = -0.5 * n.cast<double>() * voxel;
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    const Vec3 rel = (cloud.xyz[p] - lo) / voxel;
    Eigen::Vector3i c;
    bool inside = true;
    for (int k = 0; k < 3; ++k) {
      const double f = std::floor(rel[k]);
      inside = inside && f >= 0.0 && f < n[k];
      c[k] = inside ? static_cast<int>(f) : 0;
    }
    if (!inside) continue;
    const std::size_t cell = (static_cast<std::size_t>(c[0]) * n[1] + c[1]) * n[2] + c[2];
    count[cell] += 1.0;
    if (cloud.intensity) isum[cell] += (*cloud.intensity)[p];
  }
  Eigen::VectorXd f(2 * cells);
  for (std::size_t c = 0; c < cells; ++c) {
    f[c] = std::log1p(count[c]);
    f[cells + c] = count[c] > 0.0 ? isum[c] / count[c] : 0.0;
  }
  return f;
}

DefaultExtractor::DefaultExtractor(double voxel, Vec3 crop_extent) : voxel_(voxel), extent_(crop_extent) {
  if (!(voxel > 0.0)) throw DomainError("extractor voxel must be positive");
  if (!(crop_extent.array() > 0.0).all()) throw DomainError("extractor crop extent must be positive");
}

std::size_t DefaultExtractor::dimension() const {
  return 2 * static_cast<std::size_t>(grid_dims(voxel_, extent_).prod());
}

Json DefaultExtractor::parameters() const {
  return Json{{"voxel", voxel_}, {"crop_extent", to_json(extent_)}};
}

Eigen::VectorXd DefaultExtractor::extract(const PointCloud& cloud,
                                          std::span<const OrientedBox3> boxes) const {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dimension()));
  for (const auto& box : boxes)
    sum += default_extractor(transform_cloud(cloud, box.pose().inverse()), voxel_, extent_);
  return sum;
}

PointCloud crop_to_boxes(const PointCloud& cloud, std::span<const OrientedBox3> boxes) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (const auto& b : boxes) {
      if (b.contains(cloud.xyz[i])) {
        keep.push_back(i);
        break;
      }
    }
  }
  return cloud.select(keep);
}

double lpcs(const PointCloud& sim, const PointCloud& real, std::span<const OrientedBox3> boxes,
            const FeatureExtractor& extractor) {
  const Eigen::VectorXd fs = extractor.extract(crop_to_boxes(sim, boxes), boxes);
  const Eigen::VectorXd fr = extractor.extract(crop_to_boxes(real, boxes), boxes);
  const auto n = static_cast<Eigen::Index>(extractor.dimension());
  if (fs.size() != n || fr.size() != n)
    throw ConsistencyError("extractor '" + extractor.name() + "' declared dimension " +
                           std::to_string(n) + " but produced " + std::to_string(fs.size()) + " and " +
                           std::to_string(fr.size()));
  return (fs - fr).cwiseAbs().sum();
}

LpcsReport evaluate_lpcs(std::span<const LpcsPair> pairs, const FeatureExtractor& extractor) {
  LpcsReport r;
  r.extractor = extractor.name();
  r.pairs = pairs.size();
  r.values.resize(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    r.values[i] = lpcs(pairs[i].sim, pairs[i].real, pairs[i].boxes, extractor);
  });
  if (!pairs.empty())
    r.mean = std::accumulate(r.values.begin(), r.values.end(), 0.0) / static_cast<double>(pairs.size());
  return r;
}

namespace {

auto tie_key(const RaycastConfig& c) {
  return std::make_tuple(-static_cast<long long>(c.width) * c.height, c.peak_width, c.idw_power,
                         -c.width, c.azimuth_min, c.azimuth_span, c.elevation_min,
                         c.elevation_max);
}

}  // namespace

std::vector<RankEntry> rank_raycast_configs(std::span<const RaycastConfig> candidates,
                                            std::span<const RaycastPair> pairs,
                                            const FeatureExtractor& extractor) {
  if (candidates.empty()) throw DomainError("gridsearch needs at least one candidate");
  if (pairs.empty()) throw DomainError("gridsearch needs at least one frame pair");
  std::vector<RankEntry> out(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    RankEntry& e = out[c];
    e.config = candidates[c];
    try {
      e.config.validate();
      e.per_pair.resize(pairs.size());
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto& pair = pairs[p];
        const SimulatedFrame sim = raycast_fpa(pair.scene, pair.sensor_pose, pair.beams, e.config);
        e.per_pair[p] = lpcs(sim.cloud, pair.real, pair.boxes, extractor);
      }
      e.score = std::accumulate(e.per_pair.begin(), e.per_pair.end(), 0.0) /
                static_cast<double>(pairs.size());
    } catch (const std::exception& ex) {
      e.per_pair.clear();
      e.score.reset();
      e.error = ex.what();
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const RankEntry& a, const RankEntry& b) {
    if (a.score.has_value() != b.score.has_value()) return a.score.has_value();
    if (a.score && *a.score != *b.score) return *a.score < *b.score;
    return tie_key(a.config) < tie_key(b.config);
  });
  return out;
}

Json to_json(const RaycastConfig& c) {
  return Json{{"width", c.width},
              {"height", c.height},
              {"peak_width", c.peak_width},
              {"idw_power", c.idw_power},
              {"azimuth_min_deg", rad2deg(c.azimuth_min)},
              {"azimuth_span_deg", rad2deg(c.azimuth_span)},
              {"elevation_min_deg", rad2deg(c.elevation_min)},
              {"elevation_max_deg", rad2deg(c.elevation_max)}};
}

RaycastConfig raycast_config_from_json(const Json& j, const RaycastConfig& defaults) {
  RaycastConfig c = defaults;
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.peak_width = j.value("peak_width", c.peak_width);
  c.idw_power = j.value("idw_power", c.idw_power);
  if (j.contains("azimuth_min_deg")) c.azimuth_min = deg2rad(j.at("azimuth_min_deg").get<double>());
  if (j.contains("azimuth_span_deg")) c.azimuth_span = deg2rad(j.at("azimuth_span_deg").get<double>());
  if (j.contains("elevation_min_deg")) c.elevation_min = deg2rad(j.at("elevation_min_deg").get<double>());
  if (j.contains("elevation_max_deg")) c.elevation_max = deg2rad(j.at("elevation_max_deg").get<double>());
  return c;
}

Json to_json(const LpcsReport& r) {
  return Json{{"extractor", r.extractor}, {"pairs", r.pairs}, {"mean", r.mean}, {"values", r.values}};
}

Json to_json(std::span<const RankEntry> ranking) {
  Json out = Json::array();
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const RankEntry& e = ranking[i];
    Json j{{"rank", i + 1}, {"config", to_json(e.config)}};
    if (e.score) {
      j["score"] = *e.score;
      j["per_pair"] = e.per_pair;
    } else {
      j["score"] = nullptr;
      j["error"] = e.error;
    }
    out.push_back(std::move(j));
  }
  return out;
}

std::string ranking_table(std::span<const RankEntry> ranking) {
  std::ostringstream os;
  os << std::left << std::setw(6) << "rank" << std::setw(8) << "width" << std::setw(8) << "height"
     << std::setw(12) << "peak_width" << std::setw(10) << "idw_power" << "score\n";
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const RankEntry& e = ranking[i];
    os << std::setw(6) << i + 1 << std::setw(8) << e.config.width << std::setw(8) << e.config.height
       << std::setw(12) << e.config.peak_width << std::setw(10) << e.config.idw_power;
    if (e.score)
      os << std::setprecision(10) << *e.score;
    else
      os << "failed: " << e.error;
    os << '\n';
  }
  return os.str();
}

std::string ranking_csv(std::span<const RankEntry> ranking) {
  std::ostringstream os;
  os << "rank,width,height,peak_width,idw_power,score\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const RankEntry& e = ranking[i];
    os << i + 1 << ',' << e.config.width << ',' << e.config.height << ',' << e.config.peak_width << ','
       << e.config.idw_power << ',';
    if (e.score) os << *e.score;
    os << '\n';
  }
  return os.str();
}

}  // namespace lidarsim
