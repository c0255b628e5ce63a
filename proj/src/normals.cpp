// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Eigenvalues>

#include "lidarsim/error.hpp"
#include "lidarsim/kdtree.hpp"
#include "lidarsim/parallel.hpp"
#include "lidarsim/raycast.hpp"

namespace lidarsim {

NormalEstimate estimate_normals(const PointCloud& cloud, std::size_t k, const Vec3& sensor_origin) {
  if (k < 3) throw DomainError("normal estimation needs k >= 3");
  if (k > cloud.size())
    throw DomainError("normal estimation needs k <= N (k=" + std::to_string(k) +
                      ", N=" + std::to_string(cloud.size()) + ")");
  const KdTree tree(cloud.xyz);
  NormalEstimate out;
  out.cloud = cloud;
  auto& normals = out.cloud.normals.emplace(cloud.size());
  out.valid.assign(cloud.size(), 0);

  parallel_for(cloud.size(), [&](std::size_t i) {
    const Vec3& p = cloud.xyz[i];
    const auto nbrs = tree.knn(p, k);
    Vec3 mean = Vec3::Zero();
    for (const auto& nb : nbrs) mean += cloud.xyz[nb.index];
    mean /= static_cast<double>(nbrs.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& nb : nbrs) {
      const Vec3 d = cloud.xyz[nb.index] - mean;
      cov += d * d.transpose();
    }
    Vec3 toward = sensor_origin - p;
    const double toward_norm = toward.norm();
    toward = toward_norm > 0.0 ? Vec3(toward / toward_norm) : Vec3::UnitZ();

    const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Vec3 ev = eig.eigenvalues();  // ascending
    // Collinear or coincident neighbourhoods have no defined plane.
    if (!(ev[2] > 0.0) || ev[1] <= 1e-10 * ev[2]) {
      normals[i] = toward;
      return;
    }
    Vec3 n = eig.eigenvectors().col(0).normalized();
    if (n.dot(sensor_origin - p) < 0.0) n = -n;
    normals[i] = n;
    out.valid[i] = 1;
  });
  for (auto v : out.valid) out.invalid_count += v ? 0 : 1;
  return out;
}

void attach_normals(SimulatedFrame& frame, std::size_t k) {
  const std::size_t n = frame.cloud.size();
  if (n < 3) {
    auto& normals = frame.cloud.normals.emplace();
    for (const auto& p : frame.cloud.xyz) {
      const double d = p.norm();
      normals.push_back(d > 0.0 ? Vec3(-p / d) : Vec3::UnitZ());
    }
    frame.normal_valid.assign(n, 0);
    return;
  }
  auto est = estimate_normals(frame.cloud, std::min(k, n), Vec3::Zero());
  frame.cloud = std::move(est.cloud);
  frame.normal_valid = std::move(est.valid);
}

}  // namespace lidarsim
