// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "lidarsim/point_cloud.hpp"

namespace lidarsim {

inline constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle into [-pi, pi).
double normalize_angle(double radians);

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

/**
 * Proper rigid motion x' = R x + t. Construction checks that R is
 * orthonormal with det(R) = +1 (tolerance 1e-9).
 */
class RigidTransform {
 public:
  RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform from_yaw(double yaw, const Vec3& translation = Vec3::Zero());
  /// Z-Y-X intrinsic (yaw, then pitch, then roll).
  static RigidTransform from_euler(double roll, double pitch, double yaw,
                                   const Vec3& translation = Vec3::Zero());
  static RigidTransform from_axis_angle(const Vec3& axis, double angle,
                                        const Vec3& translation = Vec3::Zero());
  static RigidTransform from_matrix(const Eigen::Matrix4d& m);

  const Mat3& rotation() const noexcept { return rotation_; }
  const Vec3& translation() const noexcept { return translation_; }

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  Vec3 rotate(const Vec3& v) const { return rotation_ * v; }

  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& rhs) const;

  Eigen::Matrix4d matrix() const;

  /// Heading of the rotated x-axis in the parent xy-plane.
  double yaw() const;

  bool operator==(const RigidTransform& other) const = default;

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

enum class ObjectClass { vehicle, pedestrian, cyclist, other };

std::string_view to_string(ObjectClass c);
/// Throws DomainError on unknown names.
ObjectClass parse_object_class(std::string_view name);

/// Yaw-only 3D box. dims are (length along local x, width, height).
struct OrientedBox3 {
  Vec3 center = Vec3::Zero();
  Vec3 dims = Vec3::Ones();
  double yaw = 0.0;
  std::string track_id;
  ObjectClass label = ObjectClass::other;

  /// Validating constructor; wraps yaw into [-pi, pi).
  static OrientedBox3 make(const Vec3& center, const Vec3& dims, double yaw,
                           std::string track_id = {},
                           ObjectClass label = ObjectClass::other);

  void validate() const;

  /// Box frame -> parent frame.
  RigidTransform pose() const { return RigidTransform::from_yaw(yaw, center); }

  Vec3 to_local(const Vec3& p) const;

  /// |local_k| <= (dims_k + enlargement_k) / 2 on every axis.
  bool contains(const Vec3& p, const Vec3& enlargement = Vec3::Zero()) const;

  /// Re-expresses the box in another frame; only the heading of the
  /// transform's rotation is retained for the box orientation.
  OrientedBox3 transformed(const RigidTransform& t) const;

  bool operator==(const OrientedBox3& other) const = default;
};

/// Azimuth in [-pi, pi) measured from +x toward +y, elevation in
/// [-pi/2, pi/2] measured from the xy-plane.
struct SphericalDirection {
  double azimuth = 0.0;
  double elevation = 0.0;
  std::optional<double> depth;
};

/// Throws DomainError for the zero vector.
SphericalDirection cartesian_to_spherical(const Vec3& p);

/// Unit direction when `depth` is empty.
Vec3 spherical_to_cartesian(const SphericalDirection& s);

Vec3 direction_from_angles(double azimuth, double elevation);

PointCloud transform_cloud(const PointCloud& cloud, const RigidTransform& t);

struct CropResult {
  PointCloud inside;
  PointCloud outside;
};

CropResult crop_by_box(const PointCloud& cloud, const OrientedBox3& box,
                       const Vec3& enlargement = Vec3::Zero());

/**
 * Ground footprint (meters) of one range-image pixel of elevation extent
 * `delta` radians, for a sensor mounted `height` meters above flat ground
 * looking at horizontal distance `distance`: (h^2 + l^2) * delta / h.
 */
double ground_pixel_width(double height, double distance, double delta);

}  // namespace lidarsim
