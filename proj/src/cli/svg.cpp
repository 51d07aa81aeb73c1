#include "qtrack/cli/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <vector>

namespace qtrack::cli {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct Mapper {
  double min_x = 0, max_y = 0, scale = 1, pad = 20;
  double sx(double wx) const { return pad + (wx - min_x) * scale; }
  double sy(double wy) const { return pad + (max_y - wy) * scale; }  // y up in world
};

std::string polyline(const std::vector<std::pair<double, double>>& pts, const Mapper& m,
                     const std::string& style) {
  if (pts.size() < 2) return "";
  std::ostringstream os;
  os << "  <polyline points=\"";
  for (size_t i = 0; i < pts.size(); ++i) {
    if (i) os << ' ';
    os << num(m.sx(pts[i].first)) << ',' << num(m.sy(pts[i].second));
  }
  os << "\" fill=\"none\" " << style << "/>\n";
  return os.str();
}

std::string dot(double wx, double wy, double r, const Mapper& m, const std::string& fill) {
  std::ostringstream os;
  os << "  <circle cx=\"" << num(m.sx(wx)) << "\" cy=\"" << num(m.sy(wy)) << "\" r=\""
     << num(r) << "\" fill=\"" << fill << "\"/>\n";
  return os.str();
}

std::string id_color(int id) {
  int hue = static_cast<int>((static_cast<long long>(id) * 137) % 360);
  if (hue < 0) hue += 360;
  std::ostringstream os;
  os << "hsl(" << hue << ",70%,45%)";
  return os.str();
}

}  // namespace

std::string render_bev_svg(const scene::Scenario& sc,
                           const std::vector<metrics::FrameData>& frames) {
  // World-frame trajectories keyed by track id.
  std::map<int, std::vector<std::pair<double, double>>> gt_paths, pred_paths;
  std::vector<std::pair<double, double>> ego_path;
  size_t n = std::min(frames.size(), sc.frames.size());
  for (size_t f = 0; f < n; ++f) {
    const scene::Frame& sf = sc.frames[f];
    ego_path.emplace_back(sf.ego.x, sf.ego.y);
    for (const geom::Box3D& b : frames[f].gts)
      gt_paths[b.track_id].emplace_back(b.center.x, b.center.y);
    for (const geom::Box3D& b : frames[f].preds)
      pred_paths[b.track_id].emplace_back(b.center.x, b.center.y);
  }

  double lo_x = -1, hi_x = 1, lo_y = -1, hi_y = 1;
  bool first = true;
  auto grow = [&](double x, double y) {
    if (first) {
      lo_x = hi_x = x;
      lo_y = hi_y = y;
      first = false;
      return;
    }
    lo_x = std::min(lo_x, x);
    hi_x = std::max(hi_x, x);
    lo_y = std::min(lo_y, y);
    hi_y = std::max(hi_y, y);
  };
  for (const auto& [id, pts] : gt_paths)
    for (const auto& p : pts) grow(p.first, p.second);
  for (const auto& [id, pts] : pred_paths)
    for (const auto& p : pts) grow(p.first, p.second);
  for (const auto& p : ego_path) grow(p.first, p.second);
  lo_x -= 5;
  hi_x += 5;
  lo_y -= 5;
  hi_y += 5;

  const double view = 600.0;
  Mapper m;
  m.min_x = lo_x;
  m.max_y = hi_y;
  m.scale = view / std::max(hi_x - lo_x, hi_y - lo_y);
  double w = (hi_x - lo_x) * m.scale + 2 * m.pad;
  double h = (hi_y - lo_y) * m.scale + 2 * m.pad;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\""
     << num(h) << "\" viewBox=\"0 0 " << num(w) << ' ' << num(h) << "\">\n";
  os << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  os << polyline(ego_path, m, "stroke=\"black\" stroke-width=\"1\" stroke-dasharray=\"6 3\"");
  for (const auto& [id, pts] : gt_paths) {
    os << polyline(pts, m, "stroke=\"#999999\" stroke-width=\"2.5\" stroke-opacity=\"0.8\"");
    if (!pts.empty()) os << dot(pts.front().first, pts.front().second, 3.0, m, "#999999");
  }
  for (const auto& [id, pts] : pred_paths) {
    std::string c = id_color(id);
    os << polyline(pts, m, "stroke=\"" + c + "\" stroke-width=\"1.2\"");
    for (const auto& p : pts) os << dot(p.first, p.second, 1.6, m, c);
  }

  os << "  <text x=\"" << num(m.pad) << "\" y=\"" << num(h - 6)
     << "\" font-family=\"monospace\" font-size=\"11\" fill=\"#555555\">gt: gray, tracks: "
        "colored by id, ego: dashed</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace qtrack::cli
