#include "qtrack/scenegen/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace qtrack::scene {

using geom::Box3D;
using geom::CameraModel;
using geom::Mat3;
using geom::Mat4;
using geom::Vec3;
using numcore::Rng;
using numcore::derive_seed;
using nlohmann::json;

const std::array<ClassSpec, kNumClasses>& class_specs() {
  static const std::array<ClassSpec, kNumClasses> specs = {{
      {"car", 4.6, 1.9, 1.7, 2.0, 10.0},
      {"truck", 7.0, 2.5, 2.8, 1.5, 8.0},
      {"bus", 11.0, 2.9, 3.2, 1.5, 7.0},
      {"trailer", 10.0, 2.8, 3.5, 0.5, 5.0},
      {"pedestrian", 0.7, 0.7, 1.75, 0.3, 1.5},
      {"motorcycle", 2.1, 0.8, 1.4, 1.5, 9.0},
      {"bicycle", 1.7, 0.6, 1.3, 1.0, 5.0},
  }};
  return specs;
}

void ScenarioConfig::validate() const {
  if (n_frames <= 0 || n_objects < 0 || dt <= 0.0)
    throw std::invalid_argument("ScenarioConfig: n_frames/dt must be positive");
  if (spawn_radius_lo <= 0.0 || spawn_radius_hi <= spawn_radius_lo)
    throw std::invalid_argument("ScenarioConfig: bad spawn radii");
  if (image_width <= 0 || image_height <= 0 || token_stride <= 0)
    throw std::invalid_argument("ScenarioConfig: bad image geometry");
  if (image_width % token_stride != 0 || image_height % token_stride != 0)
    throw std::invalid_argument(
        "ScenarioConfig: image size must be a multiple of token_stride");
  if (n_cameras <= 0 || hfov_deg <= 10.0 || hfov_deg >= 170.0)
    throw std::invalid_argument("ScenarioConfig: bad camera rig");
}

Mat4 EgoPose::ego_to_world() const {
  return Mat4::translation(x, y, 0.0) * Mat4::rotation_z(yaw);
}

Mat4 EgoPose::world_to_ego() const { return ego_to_world().rigid_inverse(); }

std::vector<CameraModel> make_camera_rig(const ScenarioConfig& cfg) {
  std::vector<CameraModel> rig;
  const double f =
      (cfg.image_width / 2.0) / std::tan(cfg.hfov_deg * M_PI / 360.0);
  for (int k = 0; k < cfg.n_cameras; ++k) {
    const double yaw = 2.0 * M_PI * k / cfg.n_cameras;
    const double c = std::cos(yaw), s = std::sin(yaw);
    CameraModel cam;
    cam.camera_id = k;
    cam.width = cfg.image_width;
    cam.height = cfg.image_height;
    cam.intrinsics =
        Mat3::intrinsics(f, f, cfg.image_width / 2.0, cfg.image_height / 2.0);
    // Camera axes in the rig frame: x right = (s, -c, 0), y down = (0, 0, -1),
    // z forward = (c, s, 0); mounted 0.5 m outward at 1.6 m height.
    Mat3 rot;
    rot.m = {s, 0.0, c,
             -c, 0.0, s,
             0.0, -1.0, 0.0};
    cam.cam_to_lidar = Mat4::from_rt(rot, {0.5 * c, 0.5 * s, 1.6});
    cam.validate();
    rig.push_back(cam);
  }
  return rig;
}

namespace {

struct ObjectState {
  int class_id = 0;
  double speed = 0.0;
  double spawn_yaw = 0.0;
  Box3D box;  // world frame
};

// Segment (origin -> origin + dir, t in (t_lo, t_hi)) vs oriented box.
bool segment_hits_box(const Vec3& origin, const Vec3& dir, const Box3D& b,
                      double t_lo, double t_hi) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const Vec3 rel = origin - b.center;
  // into box frame
  const double ox = c * rel.x + s * rel.y;
  const double oy = -s * rel.x + c * rel.y;
  const double oz = rel.z;
  const double dx = c * dir.x + s * dir.y;
  const double dy = -s * dir.x + c * dir.y;
  const double dz = dir.z;
  const double o[3] = {ox, oy, oz};
  const double d[3] = {dx, dy, dz};
  const double half[3] = {0.5 * b.length, 0.5 * b.width, 0.5 * b.height};
  double t0 = t_lo, t1 = t_hi;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-12) {
      if (std::abs(o[a]) > half[a]) return false;
      continue;
    }
    double ta = (-half[a] - o[a]) / d[a];
    double tb = (half[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace

double visibility_in_camera(const Box3D& box, std::size_t self,
                            const std::vector<Box3D>& all,
                            const CameraModel& cam) {
  const Vec3 cam_pos{cam.cam_to_lidar.at(0, 3), cam.cam_to_lidar.at(1, 3),
                     cam.cam_to_lidar.at(2, 3)};
  const double dxh = box.center.x - cam_pos.x;
  const double dyh = box.center.y - cam_pos.y;
  const double n = std::hypot(dxh, dyh);
  // width axis: horizontal, perpendicular to the viewing direction
  Vec3 w_axis{0.0, 1.0, 0.0};
  if (n > 1e-9) w_axis = {-dyh / n, dxh / n, 0.0};
  const double sw = 0.5 * std::max(box.length, box.width) * 0.98;
  const double sh = 0.5 * box.height * 0.98;

  constexpr int kGrid = 16;
  int visible = 0;
  for (int i = 0; i < kGrid; ++i) {
    for (int j = 0; j < kGrid; ++j) {
      const double a = 2.0 * i / (kGrid - 1) - 1.0;
      const double b = 2.0 * j / (kGrid - 1) - 1.0;
      const Vec3 p = box.center + w_axis * (sw * a) + Vec3{0.0, 0.0, sh * b};
      if (!geom::project_point(cam, p)) continue;
      const Vec3 dir = p - cam_pos;
      bool blocked = false;
      for (std::size_t o = 0; o < all.size(); ++o) {
        if (o == self) continue;
        if (segment_hits_box(cam_pos, dir, all[o], 1e-6, 1.0 - 1e-6)) {
          blocked = true;
          break;
        }
      }
      if (!blocked) ++visible;
    }
  }
  return static_cast<double>(visible) / (kGrid * kGrid);
}

namespace {

json box_to_json(const Box3D& b) {
  return json{{"center", {b.center.x, b.center.y, b.center.z}},
              {"size", {b.length, b.width, b.height}},
              {"yaw", b.yaw},
              {"velocity", {b.vx, b.vy}},
              {"class_id", b.class_id},
              {"score", b.score},
              {"track_id", b.track_id}};
}

Box3D box_from_json(const json& j) {
  Box3D b;
  b.center = {j.at("center").at(0), j.at("center").at(1), j.at("center").at(2)};
  b.length = j.at("size").at(0);
  b.width = j.at("size").at(1);
  b.height = j.at("size").at(2);
  b.yaw = j.at("yaw");
  b.vx = j.at("velocity").at(0);
  b.vy = j.at("velocity").at(1);
  b.class_id = j.at("class_id");
  b.score = j.at("score");
  b.track_id = j.at("track_id");
  return b;
}

}  // namespace

Scenario generate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  Scenario s;
  s.config = cfg;
  s.cameras = make_camera_rig(cfg);

  Rng spawn_rng(derive_seed(cfg.seed, 1));
  Rng walk_rng(derive_seed(cfg.seed, 2));

  // Ego path: constant speed along its (possibly turning) heading.
  std::vector<EgoPose> ego_path(static_cast<std::size_t>(cfg.n_frames));
  {
    EgoPose e;
    for (int f = 0; f < cfg.n_frames; ++f) {
      ego_path[static_cast<std::size_t>(f)] = e;
      e.x += cfg.ego_speed * std::cos(e.yaw) * cfg.dt;
      e.y += cfg.ego_speed * std::sin(e.yaw) * cfg.dt;
      e.yaw = geom::wrap_angle(e.yaw + cfg.ego_yaw_rate * cfg.dt);
    }
  }

  // Spawn objects around the ego start without BEV overlap.
  std::vector<ObjectState> objects;
  for (int k = 0; k < cfg.n_objects; ++k) {
    const auto& spec =
        class_specs()[spawn_rng.uniform_int(kNumClasses)];
    ObjectState obj;
    obj.class_id = static_cast<int>(&spec - class_specs().data());
    obj.speed = cfg.speed_scale * spawn_rng.uniform(spec.speed_lo, spec.speed_hi);
    obj.box.length = spec.length;
    obj.box.width = spec.width;
    obj.box.height = spec.height;
    obj.box.class_id = obj.class_id;
    obj.box.track_id = k;
    obj.box.center.z = 0.5 * spec.height;

    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_spawn_attempts; ++attempt) {
      const double r = spawn_rng.uniform(cfg.spawn_radius_lo, cfg.spawn_radius_hi);
      const double th = spawn_rng.uniform(-M_PI, M_PI);
      obj.box.center.x = r * std::cos(th);
      obj.box.center.y = r * std::sin(th);
      obj.spawn_yaw = spawn_rng.uniform(-M_PI, M_PI);
      obj.box.yaw = obj.spawn_yaw;
      bool clash = false;
      for (const auto& other : objects) {
        const double min_gap =
            0.5 * std::hypot(obj.box.length, obj.box.width) +
            0.5 * std::hypot(other.box.length, other.box.width) + 0.5;
        if (obj.box.bev_distance(other.box) < min_gap) {
          clash = true;
          break;
        }
      }
      if (!clash) {
        placed = true;
        break;
      }
    }
    if (!placed)
      throw std::runtime_error(
          "generate_scenario: failed to place object " + std::to_string(k) +
          " without overlap after " + std::to_string(cfg.max_spawn_attempts) +
          " attempts; shrink objects or widen the spawn ring");
    objects.push_back(obj);
  }

  // Roll the world forward: constant speed along a heading that follows a
  // bounded random walk.
  s.frames.resize(static_cast<std::size_t>(cfg.n_frames));
  for (int f = 0; f < cfg.n_frames; ++f) {
    Frame& fr = s.frames[static_cast<std::size_t>(f)];
    fr.index = f;
    fr.ego = ego_path[static_cast<std::size_t>(f)];
    for (auto& obj : objects) {
      obj.box.vx = obj.speed * std::cos(obj.box.yaw);
      obj.box.vy = obj.speed * std::sin(obj.box.yaw);
      fr.gts_world.push_back(obj.box);
      // advance for the next frame
      obj.box.center.x += obj.box.vx * cfg.dt;
      obj.box.center.y += obj.box.vy * cfg.dt;
      double next_yaw = obj.box.yaw + walk_rng.normal(0.0, cfg.yaw_walk_std);
      const double drift = geom::wrap_angle(next_yaw - obj.spawn_yaw);
      if (std::abs(drift) > cfg.yaw_walk_bound)
        next_yaw = obj.spawn_yaw +
                   (drift > 0.0 ? cfg.yaw_walk_bound : -cfg.yaw_walk_bound);
      obj.box.yaw = geom::wrap_angle(next_yaw);
    }
  }

  // Visibility per gt per camera from ego-frame geometry.
  for (auto& fr : s.frames) {
    const Mat4 w2e = fr.ego.world_to_ego();
    std::vector<Box3D> ego_boxes = fr.gts_world;
    for (auto& b : ego_boxes) {
      b.center = w2e.apply(b.center);
      b.yaw = geom::wrap_angle(b.yaw - fr.ego.yaw);
    }
    fr.visibility.resize(ego_boxes.size(), 0.0);
    fr.vis_per_cam.assign(ego_boxes.size(),
                          std::vector<double>(s.cameras.size(), 0.0));
    for (std::size_t g = 0; g < ego_boxes.size(); ++g) {
      double best = 0.0;
      for (std::size_t c = 0; c < s.cameras.size(); ++c) {
        const double v =
            visibility_in_camera(ego_boxes[g], g, ego_boxes, s.cameras[c]);
        fr.vis_per_cam[g][c] = v;
        best = std::max(best, v);
      }
      fr.visibility[g] = best;
    }
  }
  return s;
}

std::vector<Box3D> gts_in_ego(const Scenario& s, int f) {
  const Frame& fr = s.frames.at(static_cast<std::size_t>(f));
  const Mat4 w2e = fr.ego.world_to_ego();
  const double cy = std::cos(-fr.ego.yaw), sy = std::sin(-fr.ego.yaw);
  std::vector<Box3D> out = fr.gts_world;
  for (auto& b : out) {
    b.center = w2e.apply(b.center);
    b.yaw = geom::wrap_angle(b.yaw - fr.ego.yaw);
    const double vx = b.vx, vy = b.vy;
    b.vx = cy * vx - sy * vy;
    b.vy = sy * vx + cy * vy;
  }
  return out;
}

std::string scenario_to_json(const Scenario& s) {
  json j;
  const ScenarioConfig& c = s.config;
  j["config"] = {{"seed", c.seed},
                 {"n_frames", c.n_frames},
                 {"n_objects", c.n_objects},
                 {"dt", c.dt},
                 {"tracking_range", c.tracking_range},
                 {"spawn_radius_lo", c.spawn_radius_lo},
                 {"spawn_radius_hi", c.spawn_radius_hi},
                 {"speed_scale", c.speed_scale},
                 {"ego_speed", c.ego_speed},
                 {"ego_yaw_rate", c.ego_yaw_rate},
                 {"yaw_walk_std", c.yaw_walk_std},
                 {"yaw_walk_bound", c.yaw_walk_bound},
                 {"image_width", c.image_width},
                 {"image_height", c.image_height},
                 {"token_stride", c.token_stride},
                 {"n_cameras", c.n_cameras},
                 {"hfov_deg", c.hfov_deg},
                 {"max_spawn_attempts", c.max_spawn_attempts}};
  j["frames"] = json::array();
  for (const auto& fr : s.frames) {
    json jf;
    jf["index"] = fr.index;
    jf["ego"] = {{"x", fr.ego.x}, {"y", fr.ego.y}, {"yaw", fr.ego.yaw}};
    jf["gts"] = json::array();
    for (const auto& b : fr.gts_world) jf["gts"].push_back(box_to_json(b));
    jf["visibility"] = fr.visibility;
    jf["vis_per_cam"] = fr.vis_per_cam;
    j["frames"].push_back(std::move(jf));
  }
  return j.dump(1);
}

Scenario scenario_from_json(const std::string& text) {
  const json j = json::parse(text);
  Scenario s;
  const json& jc = j.at("config");
  ScenarioConfig& c = s.config;
  c.seed = jc.at("seed");
  c.n_frames = jc.at("n_frames");
  c.n_objects = jc.at("n_objects");
  c.dt = jc.at("dt");
  c.tracking_range = jc.at("tracking_range");
  c.spawn_radius_lo = jc.at("spawn_radius_lo");
  c.spawn_radius_hi = jc.at("spawn_radius_hi");
  c.speed_scale = jc.at("speed_scale");
  c.ego_speed = jc.at("ego_speed");
  c.ego_yaw_rate = jc.at("ego_yaw_rate");
  c.yaw_walk_std = jc.at("yaw_walk_std");
  c.yaw_walk_bound = jc.at("yaw_walk_bound");
  c.image_width = jc.at("image_width");
  c.image_height = jc.at("image_height");
  c.token_stride = jc.at("token_stride");
  c.n_cameras = jc.at("n_cameras");
  c.hfov_deg = jc.at("hfov_deg");
  c.max_spawn_attempts = jc.at("max_spawn_attempts");
  s.cameras = make_camera_rig(c);
  for (const auto& jf : j.at("frames")) {
    Frame fr;
    fr.index = jf.at("index");
    fr.ego.x = jf.at("ego").at("x");
    fr.ego.y = jf.at("ego").at("y");
    fr.ego.yaw = jf.at("ego").at("yaw");
    for (const auto& jb : jf.at("gts")) fr.gts_world.push_back(box_from_json(jb));
    fr.visibility = jf.at("visibility").get<std::vector<double>>();
    fr.vis_per_cam =
        jf.at("vis_per_cam").get<std::vector<std::vector<double>>>();
    s.frames.push_back(std::move(fr));
  }
  return s;
}

std::vector<geom::DepthMap> make_depth_maps(const Scenario& s, int f) {
  const ScenarioConfig& cfg = s.config;
  const auto ego_boxes = gts_in_ego(s, f);
  std::vector<geom::DepthMap> maps;
  for (const auto& cam : s.cameras) {
    geom::DepthMap dm;
    dm.camera_id = cam.camera_id;
    dm.stride = cfg.token_stride;
    dm.grid_w = cfg.image_width / cfg.token_stride;
    dm.grid_h = cfg.image_height / cfg.token_stride;
    dm.depth.assign(static_cast<std::size_t>(dm.grid_w) * dm.grid_h, 0.0);
    dm.valid.assign(dm.depth.size(), 0);
    for (const auto& b : ego_boxes) {
      const auto pix = geom::project_point(cam, b.center);
      if (!pix) continue;
      const std::size_t i = dm.cell_index(pix->u, pix->v);
      if (!dm.valid[i] || pix->depth < dm.depth[i]) {
        dm.depth[i] = pix->depth;
        dm.valid[i] = 1;
      }
    }
    maps.push_back(std::move(dm));
  }
  return maps;
}

namespace {

// Bounding rectangle of the projected 3D corners; false when no corner (or
// the center) lands in front of the camera.
bool project_box_rect(const CameraModel& cam, const Box3D& b, double* u,
                      double* v, double* w, double* h, double* depth) {
  const auto cpix = geom::project_point(cam, b.center);
  if (!cpix) return false;
  const auto bev = b.bev_corners();
  double min_u = 1e300, max_u = -1e300, min_v = 1e300, max_v = -1e300;
  int seen = 0;
  for (const auto& c2 : bev) {
    for (const double z :
         {b.center.z - 0.5 * b.height, b.center.z + 0.5 * b.height}) {
      const Mat4 l2c = cam.cam_to_lidar.rigid_inverse();
      const Vec3 pc = l2c.apply({c2[0], c2[1], z});
      if (pc.z <= 1e-9) continue;  // corner behind the camera
      const Vec3 uvw = cam.intrinsics.apply(pc);
      const double cu = uvw.x / uvw.z, cv = uvw.y / uvw.z;
      min_u = std::min(min_u, cu);
      max_u = std::max(max_u, cu);
      min_v = std::min(min_v, cv);
      max_v = std::max(max_v, cv);
      ++seen;
    }
  }
  if (seen == 0) return false;
  *u = cpix->u;
  *v = cpix->v;
  *w = max_u - min_u;
  *h = max_v - min_v;
  *depth = cpix->depth;
  return true;
}

}  // namespace

std::vector<Detection2D> oracle_detections(const Scenario& s, int f,
                                           const DetectionNoise& noise,
                                           Rng& rng) {
  const auto ego_boxes = gts_in_ego(s, f);
  const Frame& fr = s.frames.at(static_cast<std::size_t>(f));
  std::vector<Detection2D> dets;
  for (std::size_t c = 0; c < s.cameras.size(); ++c) {
    for (std::size_t g = 0; g < ego_boxes.size(); ++g) {
      if (fr.vis_per_cam[g][c] < noise.min_visibility) continue;
      double u, v, w, h, depth;
      if (!project_box_rect(s.cameras[c], ego_boxes[g], &u, &v, &w, &h, &depth))
        continue;
      // Draw the noise unconditionally to keep the stream aligned whether or
      // not the detection survives the drop below.
      const double du = rng.normal(0.0, 1.0), dv = rng.normal(0.0, 1.0);
      const double dw = rng.normal(0.0, 1.0), dh = rng.normal(0.0, 1.0);
      const double dscore = rng.normal(0.0, 1.0);
      const double drop = rng.uniform();
      if (drop < noise.drop_rate) continue;
      Detection2D det;
      det.gt_index = static_cast<int>(g);
      det.box.camera_id = static_cast<int>(c);
      det.box.class_id = ego_boxes[g].class_id;
      det.box.u = u + noise.pixel_std * du;
      det.box.v = v + noise.pixel_std * dv;
      det.box.w = std::max(1.0, w * (1.0 + noise.size_frac_std * dw));
      det.box.h = std::max(1.0, h * (1.0 + noise.size_frac_std * dh));
      det.box.score = std::clamp(
          fr.vis_per_cam[g][c] + noise.score_std * dscore, 0.0, 1.0);
      dets.push_back(det);
    }
  }
  return dets;
}

int token_feat_dim() { return 8 + kNumClasses; }

std::vector<TokenGrid> render_frame_features(const Scenario& s, int f,
                                             double noise_std, Rng& rng) {
  const ScenarioConfig& cfg = s.config;
  const auto ego_boxes = gts_in_ego(s, f);
  const Frame& fr = s.frames.at(static_cast<std::size_t>(f));
  const int fd = token_feat_dim();
  std::vector<TokenGrid> grids;
  for (std::size_t c = 0; c < s.cameras.size(); ++c) {
    const CameraModel& cam = s.cameras[c];
    TokenGrid tg;
    tg.camera_id = cam.camera_id;
    tg.grid_w = cfg.image_width / cfg.token_stride;
    tg.grid_h = cfg.image_height / cfg.token_stride;
    tg.feat_dim = fd;
    const std::size_t n_cells =
        static_cast<std::size_t>(tg.grid_w) * tg.grid_h;
    tg.feats.assign(n_cells * static_cast<std::size_t>(fd), 0.0);
    tg.token_u.resize(n_cells);
    tg.token_v.resize(n_cells);

    // Projected centers visible in this camera.
    struct Hit {
      double tu, tv, depth;
      int class_id;
      double vis;
    };
    std::vector<Hit> hits;
    for (std::size_t g = 0; g < ego_boxes.size(); ++g) {
      if (fr.vis_per_cam[g][c] <= 0.0) continue;
      const auto pix = geom::project_point(cam, ego_boxes[g].center);
      if (!pix) continue;
      hits.push_back({pix->u / cfg.token_stride, pix->v / cfg.token_stride,
                      pix->depth, ego_boxes[g].class_id,
                      fr.vis_per_cam[g][c]});
    }

    for (int gy = 0; gy < tg.grid_h; ++gy) {
      for (int gx = 0; gx < tg.grid_w; ++gx) {
        const std::size_t cell =
            static_cast<std::size_t>(gy) * tg.grid_w + gx;
        const double u = (gx + 0.5) * cfg.token_stride;
        const double v = (gy + 0.5) * cfg.token_stride;
        tg.token_u[cell] = u;
        tg.token_v[cell] = v;
        double* feat = &tg.feats[cell * static_cast<std::size_t>(fd)];
        // ray direction in the rig frame
        const Vec3 ray_cam = cam.intrinsics.inverse().apply({u, v, 1.0});
        const Vec3 ray = cam.cam_to_lidar.apply_rot(ray_cam);
        const double rn = ray.norm();
        feat[0] = ray.x / rn;
        feat[1] = ray.y / rn;
        feat[2] = ray.z / rn;
        const double ctu = u / cfg.token_stride, ctv = v / cfg.token_stride;
        for (const Hit& hit : hits) {
          const double d2 = (ctu - hit.tu) * (ctu - hit.tu) +
                            (ctv - hit.tv) * (ctv - hit.tv);
          const double kern =
              std::exp(-d2 / (2.0 * kEvidenceBandwidth * kEvidenceBandwidth)) *
              hit.vis;
          feat[3] += kern;                                // occupancy
          feat[4] += kern * (hit.depth / kDepthScale);    // depth evidence
          feat[5 + hit.class_id] += kern;                 // class evidence
        }
        // Evidence anchor: re-project the mean evidence depth along this
        // cell's ray into an explicit ego-frame point, so keys can share the
        // query-side location encoding. Empty cells anchor far along the ray
        // and stay a pure function of cell geometry. Stored in kDepthScale
        // units to keep all feature channels O(1).
        const double depth_hat =
            feat[3] > 1e-9 ? (feat[4] / feat[3]) * kDepthScale : kDepthScale;
        const Vec3 anchor = cam.cam_to_lidar.apply(ray_cam * depth_hat);
        feat[5 + kNumClasses + 0] = anchor.x / kDepthScale;
        feat[5 + kNumClasses + 1] = anchor.y / kDepthScale;
        feat[5 + kNumClasses + 2] = anchor.z / kDepthScale;
        if (noise_std > 0.0)
          for (int k = 3; k < fd; ++k) feat[k] += rng.normal(0.0, noise_std);
      }
    }
    grids.push_back(std::move(tg));
  }
  return grids;
}

std::vector<AuxTarget> aux_targets(const Scenario& s, int f) {
  const ScenarioConfig& cfg = s.config;
  const auto ego_boxes = gts_in_ego(s, f);
  const Frame& fr = s.frames.at(static_cast<std::size_t>(f));
  const int grid_w = cfg.image_width / cfg.token_stride;
  std::vector<AuxTarget> out;
  for (std::size_t c = 0; c < s.cameras.size(); ++c) {
    for (std::size_t g = 0; g < ego_boxes.size(); ++g) {
      if (fr.vis_per_cam[g][c] <= 0.0) continue;
      double u, v, w, h, depth;
      if (!project_box_rect(s.cameras[c], ego_boxes[g], &u, &v, &w, &h, &depth))
        continue;
      AuxTarget t;
      t.camera_id = static_cast<int>(c);
      const int cu = static_cast<int>(std::floor(u / cfg.token_stride));
      const int cv = static_cast<int>(std::floor(v / cfg.token_stride));
      t.cell = cv * grid_w + cu;
      t.gt_index = static_cast<int>(g);
      t.class_id = ego_boxes[g].class_id;
      t.u = u;
      t.v = v;
      t.w = w;
      t.h = h;
      t.depth = depth;
      out.push_back(t);
    }
  }
  return out;
}

Strata strata_of(const geom::Box3D& gt_world, double visibility,
                 const EgoPose& ego) {
  Strata st;
  if (visibility < 0.4)
    st.vis_band = 0;
  else if (visibility < 0.6)
    st.vis_band = 1;
  else
    st.vis_band = 2;

  const double sz = std::max(gt_world.length, gt_world.width);
  if (sz < 2.0)
    st.size_band = 0;
  else if (sz < 3.5)
    st.size_band = 1;
  else
    st.size_band = 2;

  const double dist =
      std::hypot(gt_world.center.x - ego.x, gt_world.center.y - ego.y);
  if (dist <= 20.0)
    st.dist_band = 0;
  else if (dist <= 30.0)
    st.dist_band = 1;
  else
    st.dist_band = 2;
  return st;
}

}  // namespace qtrack::scene
