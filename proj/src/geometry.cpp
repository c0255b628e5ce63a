// SPDX-License-Identifier: Apache-2.0
#include "lidarsim/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

#include "lidarsim/error.hpp"

namespace lidarsim {

double normalize_angle(double a) {
  if (!std::isfinite(a)) throw DomainError("angle is not finite");
  double r = std::fmod(a + kPi, 2.0 * kPi);
  if (r < 0.0) r += 2.0 * kPi;
  r -= kPi;
  // fmod rounding can land exactly on +pi.
  if (r >= kPi) r -= 2.0 * kPi;
  return r;
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite())
    throw DomainError("rigid transform has non-finite entries");
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-9) throw DomainError("rotation is not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > 1e-9)
    throw DomainError("rotation determinant is not +1");
}

RigidTransform RigidTransform::from_yaw(double yaw, const Vec3& translation) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Mat3 r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return {r, translation};
}

RigidTransform RigidTransform::from_euler(double roll, double pitch, double yaw,
                                          const Vec3& translation) {
  const Mat3 r = (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                  Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                  Eigen::AngleAxisd(roll, Vec3::UnitX()))
                     .toRotationMatrix();
  return {r, translation};
}

RigidTransform RigidTransform::from_axis_angle(const Vec3& axis, double angle,
                                               const Vec3& translation) {
  if (axis.norm() == 0.0) return {Mat3::Identity(), translation};
  return {Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(), translation};
}

RigidTransform RigidTransform::from_matrix(const Eigen::Matrix4d& m) {
  if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0)
    throw DomainError("homogeneous matrix has an invalid bottom row");
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation_ = rotation_.transpose();
  inv.translation_ = -(inv.rotation_ * translation_);
  return inv;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  RigidTransform out;
  out.rotation_ = rotation_ * rhs.rotation_;
  out.translation_ = rotation_ * rhs.translation_ + translation_;
  return out;
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

double RigidTransform::yaw() const { return std::atan2(rotation_(1, 0), rotation_(0, 0)); }

std::string_view to_string(ObjectClass c) {
  switch (c) {
    case ObjectClass::vehicle: return "vehicle";
    case ObjectClass::pedestrian: return "pedestrian";
    case ObjectClass::cyclist: return "cyclist";
    case ObjectClass::other: return "other";
  }
  return "other";
}

ObjectClass parse_object_class(std::string_view name) {
  if (name == "vehicle") return ObjectClass::vehicle;
  if (name == "pedestrian") return ObjectClass::pedestrian;
  if (name == "cyclist") return ObjectClass::cyclist;
  if (name == "other") return ObjectClass::other;
  throw DomainError("unknown object class '" + std::string(name) + "'");
}

OrientedBox3 OrientedBox3::make(const Vec3& center, const Vec3& dims, double yaw,
                                std::string track_id, ObjectClass label) {
  OrientedBox3 b{center, dims, normalize_angle(yaw), std::move(track_id), label};
  b.validate();
  return b;
}

void OrientedBox3::validate() const {
  if (!center.allFinite() || !dims.allFinite()) throw DomainError("box has non-finite fields");
  if ((dims.array() <= 0.0).any()) throw DomainError("box dims must be strictly positive");
  if (!(yaw >= -kPi && yaw < kPi)) throw DomainError("box yaw must lie in [-pi, pi)");
}

Vec3 OrientedBox3::to_local(const Vec3& p) const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const Vec3 d = p - center;
  return {c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z()};
}

bool OrientedBox3::contains(const Vec3& p, const Vec3& enlargement) const {
  const Vec3 local = to_local(p);
  for (int k = 0; k < 3; ++k) {
    if (std::abs(local[k]) > 0.5 * (dims[k] + enlargement[k])) return false;
  }
  return true;
}

OrientedBox3 OrientedBox3::transformed(const RigidTransform& t) const {
  OrientedBox3 out = *this;
  out.center = t.apply(center);
  out.yaw = normalize_angle(yaw + t.yaw());
  return out;
}

SphericalDirection cartesian_to_spherical(const Vec3& p) {
  const double d = p.norm();
  if (d == 0.0) throw DomainError("spherical coordinates are undefined at the origin");
  double az = std::atan2(p.y(), p.x());
  if (az >= kPi) az = -kPi;
  const double el = std::asin(std::clamp(p.z() / d, -1.0, 1.0));
  return {az, el, d};
}

Vec3 direction_from_angles(double azimuth, double elevation) {
  const double ce = std::cos(elevation);
  return {ce * std::cos(azimuth), ce * std::sin(azimuth), std::sin(elevation)};
}

Vec3 spherical_to_cartesian(const SphericalDirection& s) {
  return direction_from_angles(s.azimuth, s.elevation) * s.depth.value_or(1.0);
}

PointCloud transform_cloud(const PointCloud& cloud, const RigidTransform& t) {
  PointCloud out = cloud;
  for (auto& p : out.xyz) p = t.apply(p);
  if (out.normals) {
    for (auto& n : *out.normals) n = t.rotate(n);
  }
  return out;
}

CropResult crop_by_box(const PointCloud& cloud, const OrientedBox3& box,
                       const Vec3& enlargement) {
  if ((enlargement.array() < 0.0).any())
    throw DomainError("box enlargement must be non-negative");
  CropResult r{PointCloud::with_channels(cloud.channels()),
               PointCloud::with_channels(cloud.channels())};
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (box.contains(cloud.xyz[i], enlargement))
      r.inside.push_back_from(cloud, i);
    else
      r.outside.push_back_from(cloud, i);
  }
  return r;
}

double ground_pixel_width(double height, double distance, double delta) {
  if (!(height > 0.0)) throw DomainError("sensor height must be positive");
  if (!(distance >= 0.0)) throw DomainError("distance must be non-negative");
  if (!(delta > 0.0)) throw DomainError("pixel elevation extent must be positive");
  return (height * height + distance * distance) * delta / height;
}

}  // namespace lidarsim
