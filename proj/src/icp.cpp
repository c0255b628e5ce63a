// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include "lidarsim/error.hpp"
#include "lidarsim/kdtree.hpp"
#include "lidarsim/parallel.hpp"
#include "lidarsim/raycast.hpp"
#include "lidarsim/reconstruct.hpp"

namespace lidarsim {
namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct Pair {
  std::size_t src;
  std::size_t tgt;
  double sq_distance;
};

std::vector<Pair> correspondences(const std::vector<Vec3>& moved, const KdTree& tree,
                                  const std::vector<std::uint8_t>* usable, double rejection_factor) {
  std::vector<KdTree::Neighbor> nn(moved.size());
  parallel_for(moved.size(), [&](std::size_t i) { nn[i] = tree.nearest(moved[i]); });
  std::vector<double> d;
  d.reserve(nn.size());
  for (const auto& n : nn) d.push_back(n.sq_distance);
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  const double limit = rejection_factor * rejection_factor * *mid;  // squared distances
  std::vector<Pair> pairs;
  pairs.reserve(nn.size());
  for (std::size_t i = 0; i < nn.size(); ++i) {
    if (nn[i].sq_distance > limit) continue;
    if (usable && !(*usable)[nn[i].index]) continue;
    pairs.push_back({i, nn[i].index, nn[i].sq_distance});
  }
  return pairs;
}

// Nearest proper rotation to `r` (SVD projection).
RigidTransform make_rigid(const Mat3& r, const Vec3& t) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  if ((u * svd.matrixV().transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return {u * svd.matrixV().transpose(), t};
}

RigidTransform exp_update(const Vec6& x) {
  const Vec3 w = x.head<3>();
  const double angle = w.norm();
  const Mat3 r = angle > 0.0 ? Mat3(Eigen::AngleAxisd(angle, w / angle).toRotationMatrix())
                             : Mat3(Mat3::Identity());
  return make_rigid(r, x.tail<3>());
}

RigidTransform orthonormalized(const RigidTransform& t) {
  return make_rigid(t.rotation(), t.translation());
}

}  // namespace

IcpResult icp_align(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
                    const IcpParams& params) {
  if (source.size() < 10 || target.size() < 10)
    throw DomainError("ICP needs at least 10 points in both clouds");
  const KdTree tree(target.xyz);
  const auto normals_est =
      estimate_normals(target, std::min(params.normal_neighbors, target.size()), Vec3::Zero());
  const auto& normals = *normals_est.cloud.normals;

  IcpResult result;
  result.transform = init;
  std::vector<Vec3> moved(source.size());
  auto move_source = [&] {
    for (std::size_t i = 0; i < source.size(); ++i) moved[i] = result.transform.apply(source.xyz[i]);
  };

  // Decide once, at the initial pose, whether the plane constraints span
  // all six degrees of freedom.
  {
    move_source();
    const auto pairs = correspondences(moved, tree, &normals_est.valid, params.rejection_factor);
    Mat6 h = Mat6::Zero();
    for (const auto& pr : pairs) {
      const Vec3& n = normals[pr.tgt];
      Vec6 j;
      j << moved[pr.src].cross(n), n;
      h += j * j.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Mat6> eig(h);
    const double lo = eig.eigenvalues()[0], hi = eig.eigenvalues()[5];
    result.point_to_point_fallback = pairs.size() < 6 || !(hi > 0.0) || lo < params.degeneracy_ratio * hi;
  }

  for (int iter = 0; iter < params.max_iterations; ++iter) {
    move_source();
    const auto pairs = correspondences(moved, tree, result.point_to_point_fallback ? nullptr : &normals_est.valid,
                                       params.rejection_factor);
    if (pairs.size() < 3) break;
    Vec6 x;
    if (!result.point_to_point_fallback) {
      Mat6 h = Mat6::Zero();
      Vec6 b = Vec6::Zero();
      for (const auto& pr : pairs) {
        const Vec3& n = normals[pr.tgt];
        const Vec3& p = moved[pr.src];
        const double r = (p - target.xyz[pr.tgt]).dot(n);
        Vec6 j;
        j << p.cross(n), n;
        h += j * j.transpose();
        b -= j * r;
      }
      x = h.ldlt().solve(b);
      result.transform = orthonormalized(exp_update(x) * result.transform);
    } else {
      Eigen::Matrix<double, 3, Eigen::Dynamic> src(3, pairs.size()), dst(3, pairs.size());
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        src.col(static_cast<Eigen::Index>(k)) = moved[pairs[k].src];
        dst.col(static_cast<Eigen::Index>(k)) = target.xyz[pairs[k].tgt];
      }
      const Eigen::Matrix4d m = Eigen::umeyama(src, dst, false);
      const RigidTransform delta = make_rigid(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
      const Eigen::AngleAxisd aa(delta.rotation());
      x << aa.angle() * aa.axis(), delta.translation();
      result.transform = orthonormalized(delta * result.transform);
    }
    result.iterations = iter + 1;
    if (x.norm() < params.tolerance) {
      result.converged = true;
      break;
    }
  }

  move_source();
  const auto pairs = correspondences(moved, tree, nullptr, params.rejection_factor);
  double s = 0.0;
  for (const auto& pr : pairs) {
    if (result.point_to_point_fallback) {
      s += pr.sq_distance;
    } else {
      const double r = (moved[pr.src] - target.xyz[pr.tgt]).dot(normals[pr.tgt]);
      s += r * r;
    }
  }
  result.rms = pairs.empty() ? 0.0 : std::sqrt(s / static_cast<double>(pairs.size()));
  return result;
}

}  // namespace lidarsim
