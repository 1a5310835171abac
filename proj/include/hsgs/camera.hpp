#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

#include "hsgs/common.hpp"

// Pinhole camera model. Right-handed world frame; camera frame is +x right,
// +y down, +z forward (optical axis). Rotation maps world to camera:
// X_cam = R * (X_world - position).

namespace hsgs {

struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const {
    require(std::isfinite(fx) && std::isfinite(fy) && fx > 0 && fy > 0,
            "intrinsics: focal lengths must be positive finite");
    require(std::isfinite(cx) && std::isfinite(cy), "intrinsics: principal point must be finite");
    require(width > 0 && height > 0, "intrinsics: image size must be positive");
  }

  bool operator==(const Intrinsics&) const = default;
};

struct CameraPose {
  Mat3 rotation = Mat3::Identity();  // world-to-camera, row-major semantics
  Vec3 position = Vec3::Zero();      // camera center in world frame
  Intrinsics intrinsics;

  Vec3 right_axis() const { return rotation.row(0); }
  Vec3 down_axis() const { return rotation.row(1); }
  Vec3 forward_axis() const { return rotation.row(2); }

  void validate(double tol = 1e-9) const {
    intrinsics.validate();
    require(position.allFinite() && rotation.allFinite(), "pose: non-finite entries");
    Mat3 dev = rotation.transpose() * rotation - Mat3::Identity();
    require(dev.cwiseAbs().maxCoeff() <= tol, "pose: rotation not orthonormal");
    require(rotation.determinant() > 0, "pose: rotation has negative determinant");
  }
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
};

struct PixelPoint {
  double u = 0, v = 0;
  double depth = 0;  // camera-frame Z, world units
};

inline constexpr double kNearEpsilon = 1e-6;

// Rotation whose +z axis points from `position` toward `target` and whose +x
// axis is orthogonal to `up_hint`. Throws when the direction is degenerate or
// up_hint is parallel to it.
inline Mat3 look_at(const Vec3& position, const Vec3& target, const Vec3& up_hint) {
  Vec3 f = target - position;
  double norm = f.norm();
  require(norm > 0, "look_at: target coincides with position");
  f /= norm;
  Vec3 right = f.cross(up_hint);
  double rn = right.norm();
  // sin(angle) between forward and up_hint; reject below 1e-6 rad.
  require(rn > 1e-6 * up_hint.norm(), "look_at: up_hint parallel to view direction");
  right /= rn;
  Vec3 down = f.cross(right);
  Mat3 r;
  r.row(0) = right;
  r.row(1) = down;
  r.row(2) = f;
  return r;
}

inline CameraPose make_pose(const Vec3& position, const Vec3& target, const Vec3& up_hint,
                            const Intrinsics& intr) {
  CameraPose pose;
  pose.rotation = look_at(position, target, up_hint);
  pose.position = position;
  pose.intrinsics = intr;
  return pose;
}

// Returns nullopt when the point is at or behind the near plane.
inline std::optional<PixelPoint> project(const CameraPose& pose, const Vec3& point,
                                         double near_epsilon = kNearEpsilon) {
  Vec3 c = pose.rotation * (point - pose.position);
  if (c.z() <= near_epsilon) return std::nullopt;
  const Intrinsics& k = pose.intrinsics;
  return PixelPoint{k.fx * c.x() / c.z() + k.cx, k.fy * c.y() / c.z() + k.cy, c.z()};
}

inline Vec3 unproject(const CameraPose& pose, double u, double v, double depth) {
  const Intrinsics& k = pose.intrinsics;
  Vec3 c((u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth);
  return pose.rotation.transpose() * c + pose.position;
}

inline Ray pixel_ray(const CameraPose& pose, double u, double v) {
  const Intrinsics& k = pose.intrinsics;
  Vec3 c((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
  Vec3 d = pose.rotation.transpose() * c;
  return Ray{pose.position, d.normalized()};
}

// Least-squares point minimizing summed squared distance to all optical-axis
// rays. Throws NearParallelError when no pair of axes subtends >= 1e-3 rad;
// callers fall back to a centroid in that case.
inline Vec3 estimate_scene_center(const std::vector<CameraPose>& poses) {
  require(poses.size() >= 2, "estimate_scene_center: need at least 2 poses");
  double max_angle = 0;
  for (size_t i = 0; i < poses.size(); ++i) {
    Vec3 fi = poses[i].forward_axis();
    for (size_t j = i + 1; j < poses.size(); ++j) {
      Vec3 fj = poses[j].forward_axis();
      max_angle = std::max(max_angle, std::atan2(fi.cross(fj).norm(), fi.dot(fj)));
    }
  }
  if (max_angle < 1e-3)
    throw NearParallelError("estimate_scene_center: optical axes near-parallel");
  Mat3 a = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (const CameraPose& pose : poses) {
    Vec3 f = pose.forward_axis();
    Mat3 m = Mat3::Identity() - f * f.transpose();
    a += m;
    b += m * pose.position;
  }
  return a.ldlt().solve(b);
}

inline double camera_distance(const CameraPose& a, const CameraPose& b) {
  return (a.position - b.position).norm();
}

// ---------------------------------------------------------------------------
// Pose file I/O: JSON array of objects with keys rotation (9 numbers,
// row-major world-to-camera), position (3), fx, fy, cx, cy, width, height.
// Rotations further than 1e-6 from orthonormal are rejected; small drift up
// to that tolerance is snapped back via SVD.

inline nlohmann::ordered_json pose_to_json(const CameraPose& pose) {
  nlohmann::ordered_json j;
  j["rotation"] = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) j["rotation"].push_back(pose.rotation(r, c));
  j["position"] = {pose.position.x(), pose.position.y(), pose.position.z()};
  j["fx"] = pose.intrinsics.fx;
  j["fy"] = pose.intrinsics.fy;
  j["cx"] = pose.intrinsics.cx;
  j["cy"] = pose.intrinsics.cy;
  j["width"] = pose.intrinsics.width;
  j["height"] = pose.intrinsics.height;
  return j;
}

inline CameraPose pose_from_json(const nlohmann::json& j) {
  for (const char* key : {"rotation", "position", "fx", "fy", "cx", "cy", "width", "height"})
    require(j.contains(key), std::string("pose JSON: missing key '") + key + "'");
  const auto& rot = j.at("rotation");
  const auto& posv = j.at("position");
  require(rot.is_array() && rot.size() == 9, "pose JSON: rotation must have 9 entries");
  require(posv.is_array() && posv.size() == 3, "pose JSON: position must have 3 entries");

  CameraPose pose;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) pose.rotation(r, c) = rot.at(3 * r + c).get<double>();
  for (int i = 0; i < 3; ++i) pose.position(i) = posv.at(i).get<double>();
  pose.intrinsics.fx = j.at("fx").get<double>();
  pose.intrinsics.fy = j.at("fy").get<double>();
  pose.intrinsics.cx = j.at("cx").get<double>();
  pose.intrinsics.cy = j.at("cy").get<double>();
  pose.intrinsics.width = j.at("width").get<int>();
  pose.intrinsics.height = j.at("height").get<int>();
  pose.intrinsics.validate();
  require(pose.rotation.allFinite() && pose.position.allFinite(), "pose JSON: non-finite values");

  Mat3 dev = pose.rotation.transpose() * pose.rotation - Mat3::Identity();
  double maxdev = dev.cwiseAbs().maxCoeff();
  require(maxdev <= 1e-6,
          "pose JSON: rotation not orthonormal (deviation " + std::to_string(maxdev) + ")");
  require(pose.rotation.determinant() > 0, "pose JSON: rotation is a reflection");
  if (maxdev > 1e-12) {
    Eigen::JacobiSVD<Mat3> svd(pose.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
    pose.rotation = svd.matrixU() * svd.matrixV().transpose();
  }
  return pose;
}

inline std::vector<CameraPose> poses_from_json(const nlohmann::json& j) {
  require(j.is_array(), "pose file: top-level JSON array expected");
  std::vector<CameraPose> poses;
  poses.reserve(j.size());
  for (const auto& item : j) poses.push_back(pose_from_json(item));
  return poses;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse " + path.string() + ": " + e.what());
  }
  return j;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<CameraPose> load_poses(const std::filesystem::path& path) {
  return poses_from_json(read_json_file(path));
}

inline void save_poses(const std::filesystem::path& path, const std::vector<CameraPose>& poses) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const CameraPose& pose : poses) arr.push_back(pose_to_json(pose));
  write_text_file(path, arr.dump(2) + "\n");
}

}  // namespace hsgs
