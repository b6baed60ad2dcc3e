#include "lmslam/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lmslam/errors.hpp"

namespace lmslam {

std::vector<RelativeError> relative_errors(const Trajectory& gt,
                                           const Trajectory& est,
                                           const std::vector<double>& lengths) {
  // Associate by frame_id; both lists are id-sorted.
  std::vector<std::pair<Pose, Pose>> aligned;  // (gt, est)
  size_t a = 0, b = 0;
  while (a < gt.entries.size() && b < est.entries.size()) {
    const int64_t ia = gt.entries[a].frame_id, ib = est.entries[b].frame_id;
    if (ia == ib) {
      aligned.emplace_back(gt.entries[a].pose, est.entries[b].pose);
      ++a, ++b;
    } else if (ia < ib) {
      ++a;
    } else {
      ++b;
    }
  }
  if (aligned.size() < 2) {
    throw Error(ErrorCode::NoPairs, "relative_errors: fewer than two shared frames");
  }

  std::vector<double> cum(aligned.size(), 0);
  for (size_t i = 1; i < aligned.size(); ++i) {
    cum[i] = cum[i - 1] + (aligned[i].first.translation -
                           aligned[i - 1].first.translation)
                              .norm();
  }

  std::vector<RelativeError> out;
  for (double len : lengths) {
    RelativeError re;
    re.length = len;
    double sum_t = 0, sum_r = 0;
    for (size_t i = 0; i < aligned.size(); ++i) {
      size_t j = i + 1;
      while (j < aligned.size() && cum[j] - cum[i] < len) ++j;
      if (j >= aligned.size()) break;
      const Pose gt_rel =
          compose(aligned[i].first.inverse(), aligned[j].first);
      const Pose est_rel =
          compose(aligned[i].second.inverse(), aligned[j].second);
      const Pose err = compose(gt_rel.inverse(), est_rel);
      sum_t += err.translation.norm() / len;
      sum_r += rotation_angle(err.rotation) / len;
      ++re.pairs;
    }
    if (re.pairs == 0) {
      throw Error(ErrorCode::NoPairs,
                  "relative_errors: no pairs at length " + std::to_string(len));
    }
    re.e_trans = sum_t / re.pairs;
    re.e_rot = sum_r / re.pairs;
    out.push_back(re);
  }
  return out;
}

std::map<int, std::set<int>> loop_truth(
    const std::map<int, Point3>& keyframe_positions,
    const LoopTruthConfig& cfg) {
  std::map<int, std::set<int>> out;
  for (auto i = keyframe_positions.begin(); i != keyframe_positions.end(); ++i) {
    for (auto j = std::next(i); j != keyframe_positions.end(); ++j) {
      if (j->first - i->first <= cfg.gap) continue;
      if ((i->second - j->second).norm() < cfg.r_pos) {
        out[i->first].insert(j->first);
        out[j->first].insert(i->first);
      }
    }
  }
  return out;
}

LoopPr loop_pr(const std::vector<std::pair<int, int>>& declared,
               const std::map<int, std::set<int>>& truth,
               const std::map<int, Point3>& keyframe_positions, double r_pos) {
  LoopPr out;
  std::vector<std::pair<int, int>> truth_pairs;
  for (const auto& [a, partners] : truth) {
    for (int b : partners) {
      if (a < b) truth_pairs.emplace_back(a, b);
    }
  }
  const auto near = [&](int x, int y) {
    return keyframe_positions.count(x) && keyframe_positions.count(y) &&
           (keyframe_positions.at(x) - keyframe_positions.at(y)).norm() < r_pos;
  };
  const auto covers = [&](const std::pair<int, int>& d,
                          const std::pair<int, int>& t) {
    return (near(d.first, t.first) && near(d.second, t.second)) ||
           (near(d.first, t.second) && near(d.second, t.first));
  };
  std::vector<bool> covered(truth_pairs.size(), false);
  for (const auto& d : declared) {
    bool ok = false;
    for (size_t i = 0; i < truth_pairs.size(); ++i) {
      if (covers(d, truth_pairs[i])) {
        covered[i] = true;
        ok = true;
      }
    }
    ok ? ++out.tp : ++out.fp;
  }
  for (bool c : covered) {
    if (!c) ++out.fn;
  }
  const size_t n_covered =
      static_cast<size_t>(std::count(covered.begin(), covered.end(), true));
  out.recall = truth_pairs.empty()
                   ? 1.0
                   : static_cast<double>(n_covered) / truth_pairs.size();
  out.precision_defined = !declared.empty();
  if (out.precision_defined) {
    out.precision = static_cast<double>(out.tp) / declared.size();
  }
  return out;
}

std::string tum_format(const Trajectory& traj) {
  std::ostringstream os;
  os.precision(9);
  os << std::fixed;
  for (const auto& e : traj.entries) {
    const Eigen::Quaterniond q(e.pose.rotation);
    os << e.stamp << " " << e.pose.translation.x() << " "
       << e.pose.translation.y() << " " << e.pose.translation.z() << " "
       << q.x() << " " << q.y() << " " << q.z() << " " << q.w() << "\n";
  }
  return os.str();
}

Trajectory parse_tum(const std::string& text) {
  Trajectory traj;
  std::istringstream is(text);
  std::string line;
  int64_t id = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    TrajectoryEntry e;
    double tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> e.stamp >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw Error(ErrorCode::MalformedFile, "bad trajectory line: " + line);
    }
    e.frame_id = id++;
    e.pose.translation = {tx, ty, tz};
    e.pose.rotation =
        Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix();
    traj.entries.push_back(e);
  }
  return traj;
}

std::string trajectory_svg(const Trajectory& traj) {
  double min_x = 0, max_x = 1, min_y = 0, max_y = 1;
  if (!traj.entries.empty()) {
    min_x = max_x = traj.entries[0].pose.translation.x();
    min_y = max_y = traj.entries[0].pose.translation.y();
    for (const auto& e : traj.entries) {
      min_x = std::min(min_x, e.pose.translation.x());
      max_x = std::max(max_x, e.pose.translation.x());
      min_y = std::min(min_y, e.pose.translation.y());
      max_y = std::max(max_y, e.pose.translation.y());
    }
  }
  const double span = std::max({max_x - min_x, max_y - min_y, 1e-6});
  const double margin = 20, size = 600;
  auto sx = [&](double x) { return margin + (x - min_x) / span * size; };
  auto sy = [&](double y) { return margin + (max_y - y) / span * size; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\""
     << size + 2 * margin << "\" height=\"" << size + 2 * margin << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!traj.entries.empty()) {
    os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" "
          "points=\"";
    for (const auto& e : traj.entries) {
      os << sx(e.pose.translation.x()) << "," << sy(e.pose.translation.y())
         << " ";
    }
    os << "\"/>\n";
    os << "<circle cx=\"" << sx(traj.entries.front().pose.translation.x())
       << "\" cy=\"" << sy(traj.entries.front().pose.translation.y())
       << "\" r=\"4\" fill=\"green\"/>\n";
    os << "<circle cx=\"" << sx(traj.entries.back().pose.translation.x())
       << "\" cy=\"" << sy(traj.entries.back().pose.translation.y())
       << "\" r=\"4\" fill=\"red\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace lmslam
