#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "qtrack/geometry/geometry.hpp"
#include "qtrack/numcore/rng.hpp"

using namespace qtrack::geom;
using qtrack::numcore::Rng;
using qtrack::numcore::derive_seed;

namespace {

CameraModel test_camera(double yaw = 0.3) {
  CameraModel cam;
  cam.width = 800;
  cam.height = 320;
  cam.intrinsics = Mat3::intrinsics(400.0, 400.0, 400.0, 160.0);
  // Camera looks along its +z; map camera axes into the rig frame with a
  // z-rotation and an offset, so the optical axis points "outward".
  Mat3 rot;
  // columns: camera x -> rig -sin(yaw),cos(yaw),0 ; camera y -> 0,0,-1 ;
  // camera z -> cos(yaw),sin(yaw),0
  rot.m = {-std::sin(yaw), 0.0, std::cos(yaw),
           std::cos(yaw),  0.0, std::sin(yaw),
           0.0,            -1.0, 0.0};
  cam.cam_to_lidar = Mat4::from_rt(rot, {0.4, 0.1, 1.6});
  cam.camera_id = 1;
  return cam;
}

}  // namespace

TEST_CASE("wrap_angle maps into (-pi, pi]") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));  // boundary folds up
  CHECK(wrap_angle(3.0 * M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(2.0 * M_PI + 0.25) == doctest::Approx(0.25));
  CHECK(wrap_angle(-2.0 * M_PI - 0.25) == doctest::Approx(-0.25));
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(-50.0, 50.0);
    const double w = wrap_angle(a);
    CHECK(w > -M_PI - 1e-12);
    CHECK(w <= M_PI + 1e-12);
    // same angle modulo 2 pi
    CHECK(std::abs(std::sin(w) - std::sin(a)) < 1e-9);
    CHECK(std::abs(std::cos(w) - std::cos(a)) < 1e-9);
  }
}

TEST_CASE("rigid transforms: inverse and orthonormality") {
  const Mat4 t = Mat4::translation(1.0, -2.0, 0.5) * Mat4::rotation_z(0.7);
  CHECK(t.rotation_orthonormal());
  const Mat4 inv = t.rigid_inverse();
  const Mat4 id = t * inv;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(id.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));

  Vec3 p{3.0, 1.0, -2.0};
  const Vec3 q = inv.apply(t.apply(p));
  CHECK(q.x == doctest::Approx(p.x).epsilon(1e-12));
  CHECK(q.y == doctest::Approx(p.y).epsilon(1e-12));
  CHECK(q.z == doctest::Approx(p.z).epsilon(1e-12));
}

TEST_CASE("Mat3 inverse and camera validation") {
  const Mat3 k = Mat3::intrinsics(400.0, 380.0, 399.5, 159.5);
  const Mat3 ki = k.inverse();
  const Vec3 v = ki.apply(k.apply({0.3, -0.8, 1.0}));
  CHECK(v.x == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(v.y == doctest::Approx(-0.8).epsilon(1e-12));
  CHECK(v.z == doctest::Approx(1.0).epsilon(1e-12));

  CameraModel cam = test_camera();
  cam.validate();  // valid by construction

  CameraModel bad = cam;
  bad.intrinsics.at(0, 0) = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cam;
  bad.cam_to_lidar.at(0, 0) = 2.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cam;
  bad.width = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("project/lift round-trips within 1e-9") {
  const CameraModel cam = test_camera();
  cam.validate();
  Rng rng(17);
  int tested = 0;
  for (int i = 0; i < 2000 && tested < 500; ++i) {
    // Sample rig-frame points in front of this camera.
    const Vec3 p{rng.uniform(-30.0, 30.0), rng.uniform(-30.0, 30.0),
                 rng.uniform(-1.0, 3.0)};
    const auto pix = project_point(cam, p);
    if (!pix) continue;
    ++tested;
    const Vec3 back = lift_pixel(cam, pix->u, pix->v, pix->depth);
    CHECK(std::abs(back.x - p.x) < 1e-9);
    CHECK(std::abs(back.y - p.y) < 1e-9);
    CHECK(std::abs(back.z - p.z) < 1e-9);
  }
  CHECK(tested >= 100);

  // pixel -> point -> pixel
  for (int i = 0; i < 200; ++i) {
    const double u = rng.uniform(0.0, 799.0);
    const double v = rng.uniform(0.0, 319.0);
    const double d = rng.uniform(0.5, 60.0);
    const Vec3 p = lift_pixel(cam, u, v, d);
    const auto pix = project_point(cam, p);
    REQUIRE(pix.has_value());
    CHECK(std::abs(pix->u - u) < 1e-9);
    CHECK(std::abs(pix->v - v) < 1e-9);
    CHECK(std::abs(pix->depth - d) < 1e-9);
  }
}

TEST_CASE("project_point rejects behind-camera and out-of-view points") {
  const CameraModel cam = test_camera(0.0);  // optical axis along rig +x
  CHECK(project_point(cam, {10.0, 0.1, 1.6}).has_value());
  CHECK_FALSE(project_point(cam, {-10.0, 0.1, 1.6}).has_value());  // behind
  CHECK_FALSE(project_point(cam, {0.5, 40.0, 1.6}).has_value());   // far off-axis
  CHECK_THROWS_AS(lift_pixel(cam, 10.0, 10.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(lift_pixel(cam, 10.0, 10.0, -2.0), std::invalid_argument);
}

TEST_CASE("iou3d: hand-verifiable cases") {
  Box3D a;
  a.center = {0.0, 0.0, 0.0};
  a.length = a.width = a.height = 1.0;

  SUBCASE("identical boxes -> 1") {
    CHECK(iou3d(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("half-overlap unit cubes -> 1/3") {
    Box3D b = a;
    b.center.x = 0.5;  // intersection 0.5, union 1.5
    CHECK(iou3d(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("disjoint -> 0, touching -> 0") {
    Box3D b = a;
    b.center.x = 5.0;
    CHECK(iou3d(a, b) == 0.0);
    b.center.x = 1.0;  // faces touch, zero volume
    CHECK(iou3d(a, b) == 0.0);
    b.center = {0.0, 0.0, 1.0};  // touching in z
    CHECK(iou3d(a, b) == 0.0);
  }
  SUBCASE("45-degree twin square -> exactly 1/sqrt(2)") {
    Box3D b = a;
    b.yaw = M_PI / 4.0;
    // BEV intersection of a unit square with its 45-degree twin is the
    // regular octagon of area 2(sqrt 2 - 1); IoU reduces to 1/sqrt 2.
    CHECK(iou3d(a, b) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  }
  SUBCASE("contained box -> volume ratio") {
    Box3D b = a;
    b.length = b.width = b.height = 0.5;
    b.yaw = 0.9;  // rotation cannot push it out of the unit cube
    CHECK(iou3d(a, b) == doctest::Approx(0.125).epsilon(1e-12));
  }
  SUBCASE("degenerate extents -> 0 via iou, validate throws") {
    Box3D b = a;
    b.length = 0.0;
    CHECK(iou3d(a, b) == 0.0);
    CHECK_THROWS_AS(b.validate(), std::invalid_argument);
  }
}

TEST_CASE("iou3d: symmetry and rigid invariance") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    Box3D a, b;
    a.center = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-1.0, 1.0)};
    b.center = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-1.0, 1.0)};
    for (Box3D* box : {&a, &b}) {
      box->length = rng.uniform(0.5, 4.0);
      box->width = rng.uniform(0.5, 3.0);
      box->height = rng.uniform(0.5, 2.5);
      box->yaw = rng.uniform(-M_PI, M_PI);
    }
    const double iou = iou3d(a, b);
    CHECK(iou3d(b, a) == doctest::Approx(iou).epsilon(1e-12));
    CHECK(iou >= 0.0);
    CHECK(iou <= 1.0 + 1e-12);

    // Same rigid motion applied to both boxes preserves the overlap.
    const double th = rng.uniform(-M_PI, M_PI);
    const Mat4 t = Mat4::translation(rng.uniform(-10.0, 10.0),
                                     rng.uniform(-10.0, 10.0),
                                     rng.uniform(-3.0, 3.0)) *
                   Mat4::rotation_z(th);
    Box3D ta = a, tb = b;
    ta.center = t.apply(a.center);
    tb.center = t.apply(b.center);
    ta.yaw = wrap_angle(a.yaw + th);
    tb.yaw = wrap_angle(b.yaw + th);
    CHECK(iou3d(ta, tb) == doctest::Approx(iou).epsilon(1e-9));
  }
}

TEST_CASE("iou3d matches the Monte-Carlo oracle on 200 random pairs") {
  Rng rng(31);
  int overlapping = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Box3D a, b;
    a.center = {rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-0.5, 0.5)};
    b.center = {rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-0.5, 0.5)};
    for (Box3D* box : {&a, &b}) {
      box->length = rng.uniform(0.5, 3.5);
      box->width = rng.uniform(0.5, 2.5);
      box->height = rng.uniform(0.5, 2.0);
      box->yaw = rng.uniform(-M_PI, M_PI);
    }
    const double analytic = iou3d(a, b);
    const auto mc = iou3d_oracle(a, b, 50000, derive_seed(31, trial));
    CHECK(std::abs(analytic - mc.iou) <= 0.02);
    if (analytic > 0.05) ++overlapping;
  }
  CHECK(overlapping >= 40);  // the sample must actually exercise overlaps
}

TEST_CASE("iou3d_axis_aligned ignores yaw") {
  Box3D a, b;
  a.length = 2.0; a.width = 1.0; a.height = 1.0;
  b = a;
  b.yaw = 1.3;
  CHECK(iou3d_axis_aligned(a, b) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(iou3d(a, b) < 0.99);
}

TEST_CASE("bev corners and distances") {
  Box3D b;
  b.center = {1.0, 2.0, 0.0};
  b.length = 4.0;
  b.width = 2.0;
  b.yaw = M_PI / 2.0;  // heading along +y
  const auto c = b.bev_corners();
  // length now runs along y, width along x
  double min_x = 1e9, max_x = -1e9, min_y = 1e9, max_y = -1e9;
  for (const auto& p : c) {
    min_x = std::min(min_x, p[0]);
    max_x = std::max(max_x, p[0]);
    min_y = std::min(min_y, p[1]);
    max_y = std::max(max_y, p[1]);
  }
  CHECK(max_x - min_x == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(max_y - min_y == doctest::Approx(4.0).epsilon(1e-12));

  Box3D o;
  o.center = {4.0, 6.0, 10.0};
  CHECK(b.bev_distance(o) == doctest::Approx(5.0).epsilon(1e-12));  // 3-4-5, z ignored
}

TEST_CASE("depth map cell lookup") {
  DepthMap dm;
  dm.stride = 16;
  dm.grid_w = 4;
  dm.grid_h = 2;
  dm.depth.assign(8, 0.0);
  dm.valid.assign(8, 0);
  dm.depth[5] = 12.5;  // row 1, col 1
  dm.valid[5] = 1;

  CHECK(dm.depth_at(16.0, 16.0).has_value());
  CHECK(*dm.depth_at(16.0, 16.0) == 12.5);
  CHECK(*dm.depth_at(31.9, 31.9) == 12.5);
  CHECK_FALSE(dm.depth_at(0.0, 0.0).has_value());   // invalid cell
  CHECK_FALSE(dm.depth_at(200.0, 5.0).has_value()); // off grid
  CHECK_FALSE(dm.depth_at(-1.0, 5.0).has_value());
}
