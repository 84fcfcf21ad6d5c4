#pragma once

#include <numbers>
#include <optional>
#include <vector>

#include "b2s/scene/geometry.hpp"

namespace b2s {

/// Pinhole camera. Camera frame: x right, y down, z forward.
/// `pose` maps camera-frame points to the ego frame.
struct Camera {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  std::uint32_t width = 0, height = 0;
  Pose pose;

  void validate() const {
    require(fx > 0.0 && fy > 0.0, ErrorKind::invalid_argument, "camera focal lengths must be positive");
    require(width > 0 && height > 0, ErrorKind::invalid_argument, "camera image size must be positive");
    require(orthonormality_error(pose.R) < 1e-9, ErrorKind::invalid_argument,
            "camera rotation is not orthonormal");
  }
  bool operator==(const Camera&) const = default;
};

using CameraRig = std::vector<Camera>;

struct Projection {
  double u = 0.0, v = 0.0, depth = 0.0;
};

inline std::optional<Projection> project_camera_point(const Camera& cam, const Vec3& p_cam) {
  if (!(p_cam[2] > 0.0)) return std::nullopt;
  const double u = cam.fx * p_cam[0] / p_cam[2] + cam.cx;
  const double v = cam.fy * p_cam[1] / p_cam[2] + cam.cy;
  if (!(u >= 0.0 && u < cam.width && v >= 0.0 && v < cam.height)) return std::nullopt;
  return Projection{u, v, p_cam[2]};
}

/// Pixel coordinates (continuous) and depth of an ego-frame point, or nothing
/// when it is behind the camera or outside the image.
inline std::optional<Projection> project_point(const Camera& cam, const Vec3& p_ego) {
  return project_camera_point(cam, cam.pose.apply_inverse(p_ego));
}

/// Ego-frame point at pixel (u, v) and camera-frame depth.
inline Vec3 back_project(const Camera& cam, double u, double v, double depth) {
  const Vec3 p_cam{(u - cam.cx) / cam.fx * depth, (v - cam.cy) / cam.fy * depth, depth};
  return cam.pose.apply(p_cam);
}

/// Ego-frame ray direction through (u, v) scaled so the ray parameter equals
/// camera depth.
inline Vec3 pixel_ray(const Camera& cam, double u, double v) {
  return mat_vec(cam.pose.R, Vec3{(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0});
}

/// Level camera looking along ego yaw `yaw`, mounted at `position`.
inline Pose level_camera_pose(double yaw, const Vec3& position) {
  const Vec3 f{std::cos(yaw), std::sin(yaw), 0.0};
  const Vec3 r{std::sin(yaw), -std::cos(yaw), 0.0};
  const Vec3 d{0.0, 0.0, -1.0};
  Pose p;
  // columns are the camera axes (right, down, forward) in the ego frame
  for (int i = 0; i < 3; ++i) p.R[i] = {r[i], d[i], f[i]};
  p.t = position;
  return p;
}

struct RigParams {
  std::uint32_t cameras = 4;
  std::uint32_t width = 56;
  std::uint32_t height = 32;
  double focal = 28.0;
  double mount_height = 1.5;
};

/// Cameras evenly spaced in yaw, starting forward (+x).
inline CameraRig make_ring_rig(const RigParams& p) {
  CameraRig rig;
  for (std::uint32_t k = 0; k < p.cameras; ++k) {
    Camera c;
    c.fx = c.fy = p.focal;
    c.cx = p.width / 2.0;
    c.cy = p.height / 2.0;
    c.width = p.width;
    c.height = p.height;
    const double yaw = 2.0 * std::numbers::pi * k / p.cameras;
    c.pose = level_camera_pose(yaw, {0.0, 0.0, p.mount_height});
    c.validate();
    rig.push_back(c);
  }
  return rig;
}

}  // namespace b2s
