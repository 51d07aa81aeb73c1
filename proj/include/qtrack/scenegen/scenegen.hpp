#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "qtrack/geometry/geometry.hpp"
#include "qtrack/numcore/rng.hpp"

namespace qtrack::scene {

inline constexpr int kNumClasses = 7;

struct ClassSpec {
  const char* name;
  double length, width, height;  // canonical extents, meters
  double speed_lo, speed_hi;     // m/s
};

const std::array<ClassSpec, kNumClasses>& class_specs();

struct ScenarioConfig {
  std::uint64_t seed = 0;
  int n_frames = 40;
  int n_objects = 10;
  double dt = 0.5;                 // seconds between frames
  double tracking_range = 50.0;    // meters, BEV radius around ego
  double spawn_radius_lo = 6.0;
  double spawn_radius_hi = 30.0;
  double speed_scale = 1.0;        // multiplies class speeds
  double ego_speed = 1.0;          // m/s along ego heading
  double ego_yaw_rate = 0.0;       // rad/s
  double yaw_walk_std = 0.04;      // per-frame heading noise, radians
  double yaw_walk_bound = 0.5;     // max drift from spawn heading
  int image_width = 96;
  int image_height = 48;
  int token_stride = 16;
  int n_cameras = 6;               // evenly spaced in yaw
  double hfov_deg = 90.0;
  int max_spawn_attempts = 1000;

  void validate() const;  // throws std::invalid_argument
};

struct EgoPose {
  double x = 0.0, y = 0.0, yaw = 0.0;
  geom::Mat4 ego_to_world() const;
  geom::Mat4 world_to_ego() const;
};

struct Frame {
  int index = 0;
  EgoPose ego;
  std::vector<geom::Box3D> gts_world;          // track_id/class_id/velocity set
  std::vector<double> visibility;              // per gt: best camera, [0, 1]
  std::vector<std::vector<double>> vis_per_cam;  // [gt][camera]
};

struct Scenario {
  ScenarioConfig config;
  std::vector<geom::CameraModel> cameras;  // rig (ego) frame, constant
  std::vector<Frame> frames;
};

std::vector<geom::CameraModel> make_camera_rig(const ScenarioConfig& cfg);

// Fraction of a 16x16 silhouette sample grid (a vertical plane through the
// box center, perpendicular to the viewing direction, extents
// max(length, width) x height with a 2% inset) that lands inside the image
// and is not blocked by any other box. Boxes and camera share one frame;
// `self` is the index of `box` within `all` (excluded from occluders).
double visibility_in_camera(const geom::Box3D& box, std::size_t self,
                            const std::vector<geom::Box3D>& all,
                            const geom::CameraModel& cam);

// Deterministic in cfg (two calls produce identical scenarios). Throws
// std::runtime_error when an object cannot be placed without overlap within
// max_spawn_attempts.
Scenario generate_scenario(const ScenarioConfig& cfg);

// Ground-truth boxes of frame f expressed in the ego frame (velocities are
// world vectors rotated into ego axes).
std::vector<geom::Box3D> gts_in_ego(const Scenario& s, int f);

std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text);

// --- observations -----------------------------------------------------------

struct DetectionNoise {
  double pixel_std = 0.0;      // additive, on the 2D center
  double size_frac_std = 0.0;  // multiplicative, on 2D extents
  double score_std = 0.0;      // additive on visibility-derived score
  double drop_rate = 0.0;      // per-detection drop probability
  double min_visibility = 0.05;
};

struct Detection2D {
  geom::Box2D box;     // camera_id/class_id/score filled in
  int gt_index = -1;   // index into the frame's gt list (tests/provenance)
};

// Per-camera sparse depth maps carrying object-center depths at the cells
// their centers project into (nearest object wins).
std::vector<geom::DepthMap> make_depth_maps(const Scenario& s, int f);

// 2D boxes derived from projected gt corners plus configured noise. Order is
// deterministic: cameras outer, gt index inner.
std::vector<Detection2D> oracle_detections(const Scenario& s, int f,
                                           const DetectionNoise& noise,
                                           numcore::Rng& rng);

// --- image-token features ----------------------------------------------------

inline constexpr double kEvidenceBandwidth = 1.5;  // tokens
inline constexpr double kDepthScale = 50.0;        // meters -> feature units

struct TokenGrid {
  int camera_id = 0;
  int grid_w = 0, grid_h = 0;
  int feat_dim = 0;
  std::vector<double> feats;    // (grid_w*grid_h) x feat_dim, row-major
  std::vector<double> token_u;  // cell-center pixel coordinates
  std::vector<double> token_v;
};

// Feature layout per token: [ray_x, ray_y, ray_z, occupancy, depth_evidence,
// class_evidence * kNumClasses, anchor_x, anchor_y, anchor_z]. Evidence decays
// with a Gaussian kernel of kEvidenceBandwidth tokens around each projected
// object center, scaled by per-camera visibility. The anchor is the mean
// evidence depth re-projected along the cell's ray into the ego frame
// (kDepthScale meters out when the cell is empty), stored in kDepthScale
// units; noise_std perturbs everything but the ray.
int token_feat_dim();
std::vector<TokenGrid> render_frame_features(const Scenario& s, int f,
                                             double noise_std,
                                             numcore::Rng& rng);

// Supervision targets for the auxiliary 2D heads: one per (gt, camera) pair
// whose center projects into the camera with nonzero visibility.
struct AuxTarget {
  int camera_id = 0;
  int cell = 0;        // anchor token index (center's cell)
  int gt_index = 0;
  int class_id = 0;
  double u = 0.0, v = 0.0;  // exact projected center
  double w = 0.0, h = 0.0;  // projected-corner bounding rectangle
  double depth = 0.0;       // center depth
};

std::vector<AuxTarget> aux_targets(const Scenario& s, int f);

// --- evaluation strata --------------------------------------------------------

// Bands (index 0/1/2):
//   visibility: [0, 0.4) / [0.4, 0.6) / [0.6, 1]
//   size, max(length, width): [0, 2) / [2, 3.5) / [3.5, inf)
//   BEV distance to ego: [0, 20] / (20, 30] / (30, inf)
struct Strata {
  int vis_band = 0;
  int size_band = 0;
  int dist_band = 0;
};

Strata strata_of(const geom::Box3D& gt_world, double visibility,
                 const EgoPose& ego);

}  // namespace qtrack::scene
