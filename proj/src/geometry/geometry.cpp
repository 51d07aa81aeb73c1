#include "qtrack/geometry/geometry.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "qtrack/numcore/rng.hpp"

namespace qtrack::geom {

Mat3 Mat3::identity() {
  Mat3 r;
  r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  return r;
}

Mat3 Mat3::intrinsics(double fx, double fy, double cx, double cy) {
  Mat3 r;
  r.m = {fx, 0, cx, 0, fy, cy, 0, 0, 1};
  return r;
}

Vec3 Mat3::apply(const Vec3& v) const {
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
          m[3] * v.x + m[4] * v.y + m[5] * v.z,
          m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

Mat3 Mat3::inverse() const {
  const double a = m[0], b = m[1], c = m[2];
  const double d = m[3], e = m[4], f = m[5];
  const double g = m[6], h = m[7], i = m[8];
  const double det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
  if (std::abs(det) < 1e-300) throw std::invalid_argument("Mat3::inverse: singular matrix");
  const double inv = 1.0 / det;
  Mat3 r;
  r.m = {(e * i - f * h) * inv, (c * h - b * i) * inv, (b * f - c * e) * inv,
         (f * g - d * i) * inv, (a * i - c * g) * inv, (c * d - a * f) * inv,
         (d * h - e * g) * inv, (b * g - a * h) * inv, (a * e - b * d) * inv};
  return r;
}

Mat4 Mat4::identity() {
  Mat4 r;
  r.m = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
  return r;
}

Mat4 Mat4::translation(double x, double y, double z) {
  Mat4 r = identity();
  r.at(0, 3) = x;
  r.at(1, 3) = y;
  r.at(2, 3) = z;
  return r;
}

Mat4 Mat4::rotation_z(double yaw) {
  Mat4 r = identity();
  const double c = std::cos(yaw), s = std::sin(yaw);
  r.at(0, 0) = c;
  r.at(0, 1) = -s;
  r.at(1, 0) = s;
  r.at(1, 1) = c;
  return r;
}

Mat4 Mat4::from_rt(const Mat3& rot, const Vec3& t) {
  Mat4 r = identity();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.at(i, j) = rot.at(i, j);
  r.at(0, 3) = t.x;
  r.at(1, 3) = t.y;
  r.at(2, 3) = t.z;
  return r;
}

Mat4 Mat4::operator*(const Mat4& o) const {
  Mat4 r;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += at(i, k) * o.at(k, j);
      r.at(i, j) = s;
    }
  return r;
}

Vec3 Mat4::apply(const Vec3& p) const {
  return {at(0, 0) * p.x + at(0, 1) * p.y + at(0, 2) * p.z + at(0, 3),
          at(1, 0) * p.x + at(1, 1) * p.y + at(1, 2) * p.z + at(1, 3),
          at(2, 0) * p.x + at(2, 1) * p.y + at(2, 2) * p.z + at(2, 3)};
}

Vec3 Mat4::apply_rot(const Vec3& v) const {
  return {at(0, 0) * v.x + at(0, 1) * v.y + at(0, 2) * v.z,
          at(1, 0) * v.x + at(1, 1) * v.y + at(1, 2) * v.z,
          at(2, 0) * v.x + at(2, 1) * v.y + at(2, 2) * v.z};
}

Mat4 Mat4::rigid_inverse() const {
  // [R t; 0 1]^-1 = [R^T -R^T t; 0 1]
  Mat4 r = identity();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.at(i, j) = at(j, i);
  const Vec3 t{at(0, 3), at(1, 3), at(2, 3)};
  const Vec3 it = r.apply_rot(t);
  r.at(0, 3) = -it.x;
  r.at(1, 3) = -it.y;
  r.at(2, 3) = -it.z;
  return r;
}

bool Mat4::rotation_orthonormal(double tol) const {
  // R R^T must be identity.
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += at(i, k) * at(j, k);
      const double want = (i == j) ? 1.0 : 0.0;
      if (std::abs(s - want) > tol) return false;
    }
  // Bottom row must be [0 0 0 1].
  if (std::abs(at(3, 0)) > tol || std::abs(at(3, 1)) > tol ||
      std::abs(at(3, 2)) > tol || std::abs(at(3, 3) - 1.0) > tol)
    return false;
  return true;
}

double wrap_angle(double a) {
  const double two_pi = 2.0 * M_PI;
  a = std::fmod(a, two_pi);
  if (a <= -M_PI) a += two_pi;
  if (a > M_PI) a -= two_pi;
  return a;
}

void CameraModel::validate() const {
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("CameraModel: image size must be positive");
  if (intrinsics.at(0, 0) <= 0.0 || intrinsics.at(1, 1) <= 0.0)
    throw std::invalid_argument("CameraModel: focal lengths must be positive");
  if (intrinsics.at(1, 0) != 0.0 || intrinsics.at(2, 0) != 0.0 ||
      intrinsics.at(2, 1) != 0.0 || intrinsics.at(2, 2) != 1.0)
    throw std::invalid_argument("CameraModel: intrinsics must be upper triangular with K[2][2]=1");
  if (!cam_to_lidar.rotation_orthonormal())
    throw std::invalid_argument("CameraModel: cam_to_lidar is not a rigid transform");
}

void Box3D::validate() const {
  if (!(length > 0.0) || !(width > 0.0) || !(height > 0.0))
    throw std::invalid_argument("Box3D: extents must be positive");
  if (yaw <= -M_PI - 1e-12 || yaw > M_PI + 1e-12)
    throw std::invalid_argument("Box3D: yaw must lie in (-pi, pi]");
}

std::array<std::array<double, 2>, 4> Box3D::bev_corners() const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double hl = 0.5 * length, hw = 0.5 * width;
  // Counter-clockwise in the box frame.
  const double lx[4] = {hl, -hl, -hl, hl};
  const double ly[4] = {hw, hw, -hw, -hw};
  std::array<std::array<double, 2>, 4> out;
  for (int i = 0; i < 4; ++i) {
    out[i][0] = center.x + c * lx[i] - s * ly[i];
    out[i][1] = center.y + s * lx[i] + c * ly[i];
  }
  return out;
}

double Box3D::bev_distance(const Box3D& o) const {
  const double dx = center.x - o.center.x;
  const double dy = center.y - o.center.y;
  return std::sqrt(dx * dx + dy * dy);
}

std::size_t DepthMap::cell_index(double u, double v) const {
  const int cu = static_cast<int>(std::floor(u / stride));
  const int cv = static_cast<int>(std::floor(v / stride));
  return static_cast<std::size_t>(cv) * static_cast<std::size_t>(grid_w) +
         static_cast<std::size_t>(cu);
}

bool DepthMap::in_grid(double u, double v) const {
  const int cu = static_cast<int>(std::floor(u / stride));
  const int cv = static_cast<int>(std::floor(v / stride));
  return cu >= 0 && cu < grid_w && cv >= 0 && cv < grid_h;
}

std::optional<double> DepthMap::depth_at(double u, double v) const {
  if (!in_grid(u, v)) return std::nullopt;
  const std::size_t i = cell_index(u, v);
  if (!valid[i]) return std::nullopt;
  return depth[i];
}

std::optional<PixelDepth> project_point(const CameraModel& cam, const Vec3& p) {
  const Mat4 lidar_to_cam = cam.cam_to_lidar.rigid_inverse();
  const Vec3 pc = lidar_to_cam.apply(p);
  if (pc.z <= 1e-9) return std::nullopt;  // behind or on the image plane
  const Vec3 uvw = cam.intrinsics.apply(pc);
  const double u = uvw.x / uvw.z;
  const double v = uvw.y / uvw.z;
  if (u < 0.0 || u >= cam.width || v < 0.0 || v >= cam.height) return std::nullopt;
  return PixelDepth{u, v, pc.z};
}

Vec3 lift_pixel(const CameraModel& cam, double u, double v, double depth) {
  if (depth <= 0.0)
    throw std::invalid_argument("lift_pixel: depth must be positive, got " +
                                std::to_string(depth));
  const Vec3 ray = cam.intrinsics.inverse().apply({u, v, 1.0});
  const Vec3 pc = ray * depth;  // camera-frame point: K^-1 [u v 1]^T * depth
  return cam.cam_to_lidar.apply(pc);
}

namespace {

using Poly = std::vector<std::array<double, 2>>;

// Signed area (positive for counter-clockwise winding).
double polygon_area(const Poly& p) {
  double a = 0.0;
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p0 = p[i];
    const auto& p1 = p[(i + 1) % n];
    a += p0[0] * p1[1] - p1[0] * p0[1];
  }
  return 0.5 * a;
}

// Clips subject against one directed edge (a -> b) of a convex CCW clipper:
// keeps points on the left of the edge. Standard Sutherland-Hodgman step.
Poly clip_edge(const Poly& subject, const std::array<double, 2>& a,
               const std::array<double, 2>& b) {
  Poly out;
  const std::size_t n = subject.size();
  if (n == 0) return out;
  auto side = [&](const std::array<double, 2>& p) {
    return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cur = subject[i];
    const auto& nxt = subject[(i + 1) % n];
    const double sc = side(cur);
    const double sn = side(nxt);
    if (sc >= 0.0) out.push_back(cur);
    if ((sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0)) {
      const double t = sc / (sc - sn);
      out.push_back({cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])});
    }
  }
  return out;
}

double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const auto ca = a.bev_corners();
  const auto cb = b.bev_corners();
  Poly subject(ca.begin(), ca.end());
  for (int i = 0; i < 4; ++i) {
    subject = clip_edge(subject, cb[i], cb[(i + 1) % 4]);
    if (subject.empty()) return 0.0;
  }
  return std::abs(polygon_area(subject));
}

bool point_in_box(const Box3D& b, const Vec3& p) {
  const double dx = p.x - b.center.x;
  const double dy = p.y - b.center.y;
  const double dz = p.z - b.center.z;
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double lx = c * dx + s * dy;   // into box frame
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * b.length && std::abs(ly) <= 0.5 * b.width &&
         std::abs(dz) <= 0.5 * b.height;
}

}  // namespace

double iou3d(const Box3D& a, const Box3D& b) {
  const double va = a.length * a.width * a.height;
  const double vb = b.length * b.width * b.height;
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  const double z_lo = std::max(a.center.z - 0.5 * a.height, b.center.z - 0.5 * b.height);
  const double z_hi = std::min(a.center.z + 0.5 * a.height, b.center.z + 0.5 * b.height);
  const double dz = z_hi - z_lo;
  if (dz <= 0.0) return 0.0;
  const double bev = bev_intersection_area(a, b);
  const double inter = bev * dz;
  const double uni = va + vb - inter;
  return inter > 0.0 ? inter / uni : 0.0;
}

double iou3d_axis_aligned(const Box3D& a, const Box3D& b) {
  Box3D aa = a, bb = b;
  aa.yaw = 0.0;
  bb.yaw = 0.0;
  return iou3d(aa, bb);
}

MonteCarloIoU iou3d_oracle(const Box3D& a, const Box3D& b,
                           std::int64_t n_samples, std::uint64_t seed) {
  // Sample the axis-aligned bounding volume of both boxes.
  double lo[3] = {1e300, 1e300, 1e300}, hi[3] = {-1e300, -1e300, -1e300};
  for (const Box3D* box : {&a, &b}) {
    const auto corners = box->bev_corners();
    for (const auto& c : corners) {
      lo[0] = std::min(lo[0], c[0]);
      hi[0] = std::max(hi[0], c[0]);
      lo[1] = std::min(lo[1], c[1]);
      hi[1] = std::max(hi[1], c[1]);
    }
    lo[2] = std::min(lo[2], box->center.z - 0.5 * box->height);
    hi[2] = std::max(hi[2], box->center.z + 0.5 * box->height);
  }
  numcore::Rng rng(seed);
  std::int64_t n_inter = 0, n_union = 0;
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const Vec3 p{rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]),
                 rng.uniform(lo[2], hi[2])};
    const bool ina = point_in_box(a, p);
    const bool inb = point_in_box(b, p);
    if (ina && inb) ++n_inter;
    if (ina || inb) ++n_union;
  }
  MonteCarloIoU out;
  if (n_union == 0) return out;
  const double p = static_cast<double>(n_inter) / static_cast<double>(n_union);
  out.iou = p;
  // Binomial-style spread of the ratio; good enough for test tolerances.
  out.stderr_est = std::sqrt(p * (1.0 - p) / static_cast<double>(n_union));
  return out;
}

}  // namespace qtrack::geom
