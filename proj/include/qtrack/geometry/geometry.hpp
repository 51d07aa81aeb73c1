#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

namespace qtrack::geom {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
};

// Row-major 3x3, used for camera intrinsics.
struct Mat3 {
  std::array<double, 9> m{};

  static Mat3 identity();
  static Mat3 intrinsics(double fx, double fy, double cx, double cy);
  double at(int r, int c) const { return m[static_cast<std::size_t>(r) * 3 + c]; }
  double& at(int r, int c) { return m[static_cast<std::size_t>(r) * 3 + c]; }
  Vec3 apply(const Vec3& v) const;
  Mat3 inverse() const;  // general 3x3 inverse via adjugate
};

// Row-major 4x4 rigid transform (rotation + translation).
struct Mat4 {
  std::array<double, 16> m{};

  static Mat4 identity();
  static Mat4 translation(double x, double y, double z);
  static Mat4 rotation_z(double yaw);
  static Mat4 from_rt(const Mat3& rot, const Vec3& t);
  double at(int r, int c) const { return m[static_cast<std::size_t>(r) * 4 + c]; }
  double& at(int r, int c) { return m[static_cast<std::size_t>(r) * 4 + c]; }
  Mat4 operator*(const Mat4& o) const;
  Vec3 apply(const Vec3& p) const;      // rotate + translate
  Vec3 apply_rot(const Vec3& v) const;  // rotate only
  Mat4 rigid_inverse() const;           // valid for rigid transforms
  bool rotation_orthonormal(double tol = 1e-9) const;
};

// Normalizes an angle to (-pi, pi].
double wrap_angle(double a);

struct CameraModel {
  Mat3 intrinsics;        // upper triangular, positive focal entries
  Mat4 cam_to_lidar;      // rigid transform, camera frame -> sensor rig frame
  int width = 0;          // pixels
  int height = 0;
  int camera_id = 0;

  // Throws std::invalid_argument if the invariants fail.
  void validate() const;
};

struct Box3D {
  Vec3 center;                      // meters, world or rig frame
  double length = 1.0;              // extent along heading (yaw) axis
  double width = 1.0;
  double height = 1.0;
  double yaw = 0.0;                 // radians about +z, normalized (-pi, pi]
  double vx = 0.0, vy = 0.0;        // m/s
  int class_id = 0;
  double score = 1.0;
  std::int64_t track_id = -1;       // <0 means unassigned

  void validate() const;
  std::array<std::array<double, 2>, 4> bev_corners() const;
  double bev_distance(const Box3D& o) const;
};

struct Box2D {
  double u = 0.0, v = 0.0;  // center, pixels
  double w = 0.0, h = 0.0;  // size, pixels
  int camera_id = 0;
  int class_id = 0;
  double score = 1.0;
};

// Sparse depth grid at a fixed pixel stride; invalid cells have no depth.
struct DepthMap {
  int camera_id = 0;
  int stride = 16;
  int grid_w = 0, grid_h = 0;
  std::vector<double> depth;        // grid_h * grid_w, row-major
  std::vector<std::uint8_t> valid;  // same layout

  std::size_t cell_index(double u, double v) const;
  bool in_grid(double u, double v) const;
  // Depth at the cell containing pixel (u, v); nullopt when out of grid or
  // the cell is invalid.
  std::optional<double> depth_at(double u, double v) const;
};

struct PixelDepth {
  double u = 0.0, v = 0.0, depth = 0.0;
};

// Projects a point given in the rig (lidar) frame into the camera. Returns
// nullopt when the point is behind the camera or outside the image bounds.
std::optional<PixelDepth> project_point(const CameraModel& cam,
                                        const Vec3& p);

// Inverse of project_point: pixel + depth back to the rig frame.
// Throws std::invalid_argument when depth <= 0.
Vec3 lift_pixel(const CameraModel& cam, double u, double v, double depth);

// Oriented 3D IoU: BEV convex-polygon intersection (Sutherland-Hodgman)
// times vertical overlap, over the union volume. Degenerate boxes give 0.
double iou3d(const Box3D& a, const Box3D& b);

// Axis-aligned variant (yaw ignored); kept for ablating the label rule.
double iou3d_axis_aligned(const Box3D& a, const Box3D& b);

struct MonteCarloIoU {
  double iou = 0.0;
  double stderr_est = 0.0;
};

// Monte-Carlo estimate by uniform sampling of the boxes' shared bounding
// volume: IoU = |A and B| / |A or B|.
MonteCarloIoU iou3d_oracle(const Box3D& a, const Box3D& b,
                           std::int64_t n_samples, std::uint64_t seed);

}  // namespace qtrack::geom
