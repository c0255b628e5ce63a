// SPDX-License-Identifier: Apache-2.0
#include "lidarsim/point_cloud.hpp"

#include <cmath>

#include "lidarsim/error.hpp"

namespace lidarsim {

unsigned PointCloud::channels() const noexcept {
  unsigned c = 0;
  if (intensity) c |= kIntensity;
  if (elongation) c |= kElongation;
  if (normals) c |= kNormals;
  if (beam_id) c |= kBeamId;
  return c;
}

PointCloud PointCloud::with_channels(unsigned channels) {
  PointCloud c;
  if (channels & kIntensity) c.intensity.emplace();
  if (channels & kElongation) c.elongation.emplace();
  if (channels & kNormals) c.normals.emplace();
  if (channels & kBeamId) c.beam_id.emplace();
  return c;
}

void PointCloud::validate() const {
  const std::size_t n = xyz.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!xyz[i].allFinite())
      throw DomainError("point " + std::to_string(i) + " has a non-finite coordinate");
  }
  auto check_len = [n](std::size_t len, const char* name) {
    if (len != n)
      throw DomainError(std::string(name) + " channel has " + std::to_string(len) +
                        " entries, expected " + std::to_string(n));
  };
  if (intensity) check_len(intensity->size(), "intensity");
  if (elongation) check_len(elongation->size(), "elongation");
  if (beam_id) check_len(beam_id->size(), "beam_id");
  if (normals) {
    check_len(normals->size(), "normals");
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs((*normals)[i].norm() - 1.0) > 1e-6)
        throw DomainError("normal " + std::to_string(i) + " is not unit length");
    }
  }
}

PointCloud PointCloud::select(std::span<const std::size_t> indices) const {
  PointCloud out = with_channels(channels());
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back_from(*this, i);
  return out;
}

void PointCloud::append(const PointCloud& other) {
  if (other.channels() != channels())
    throw DomainError("cannot append cloud with channels " +
                      describe_channels(other.channels()) + " to " +
                      describe_channels(channels()));
  xyz.insert(xyz.end(), other.xyz.begin(), other.xyz.end());
  if (intensity) intensity->insert(intensity->end(), other.intensity->begin(), other.intensity->end());
  if (elongation) elongation->insert(elongation->end(), other.elongation->begin(), other.elongation->end());
  if (normals) normals->insert(normals->end(), other.normals->begin(), other.normals->end());
  if (beam_id) beam_id->insert(beam_id->end(), other.beam_id->begin(), other.beam_id->end());
}

void PointCloud::push_back_from(const PointCloud& src, std::size_t i) {
  xyz.push_back(src.xyz[i]);
  if (intensity) intensity->push_back((*src.intensity)[i]);
  if (elongation) elongation->push_back((*src.elongation)[i]);
  if (normals) normals->push_back((*src.normals)[i]);
  if (beam_id) beam_id->push_back((*src.beam_id)[i]);
}

void PointCloud::reserve(std::size_t n) {
  xyz.reserve(n);
  if (intensity) intensity->reserve(n);
  if (elongation) elongation->reserve(n);
  if (normals) normals->reserve(n);
  if (beam_id) beam_id->reserve(n);
}

std::string describe_channels(unsigned channels) {
  std::string s = "{xyz";
  if (channels & kIntensity) s += ",intensity";
  if (channels & kElongation) s += ",elongation";
  if (channels & kNormals) s += ",normals";
  if (channels & kBeamId) s += ",beam_id";
  return s + "}";
}

}  // namespace lidarsim
