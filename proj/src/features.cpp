#include "lmslam/features.hpp"

#include "lmslam/registration.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

namespace lmslam {

namespace {

struct Image8 {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;

  uint8_t at(int u, int v) const {
    return pixels[static_cast<size_t>(v) * width + u];
  }
};

Image8 downsample(const Image8& src, double factor) {
  Image8 out;
  out.width = std::max(1, static_cast<int>(std::lround(src.width / factor)));
  out.height = std::max(1, static_cast<int>(std::lround(src.height / factor)));
  out.pixels.resize(static_cast<size_t>(out.width) * out.height);
  for (int v = 0; v < out.height; ++v) {
    const double sy = std::min(v * factor, src.height - 1.0);
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double fy = sy - y0;
    for (int u = 0; u < out.width; ++u) {
      const double sx = std::min(u * factor, src.width - 1.0);
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double fx = sx - x0;
      const double val = (1 - fy) * ((1 - fx) * src.at(x0, y0) + fx * src.at(x1, y0)) +
                         fy * ((1 - fx) * src.at(x0, y1) + fx * src.at(x1, y1));
      out.pixels[static_cast<size_t>(v) * out.width + u] =
          static_cast<uint8_t>(std::lround(val));
    }
  }
  return out;
}

Image8 gaussian_blur(const Image8& src) {
  // separable 7-tap kernel, sigma ~= 2
  static const double k[7] = {0.071, 0.131, 0.189, 0.218, 0.189, 0.131, 0.071};
  Image8 tmp = src, out = src;
  for (int v = 0; v < src.height; ++v) {
    for (int u = 0; u < src.width; ++u) {
      double acc = 0;
      for (int i = -3; i <= 3; ++i) {
        const int x = std::clamp(u + i, 0, src.width - 1);
        acc += k[i + 3] * src.at(x, v);
      }
      tmp.pixels[static_cast<size_t>(v) * src.width + u] =
          static_cast<uint8_t>(std::lround(acc));
    }
  }
  for (int v = 0; v < src.height; ++v) {
    for (int u = 0; u < src.width; ++u) {
      double acc = 0;
      for (int i = -3; i <= 3; ++i) {
        const int y = std::clamp(v + i, 0, src.height - 1);
        acc += k[i + 3] * tmp.at(u, y);
      }
      out.pixels[static_cast<size_t>(v) * src.width + u] =
          static_cast<uint8_t>(std::lround(acc));
    }
  }
  return out;
}

struct CircleOffsets {
  int off[16];
};

CircleOffsets circle_offsets(int stride) {
  static const int d[16][2] = {{0, -3},  {1, -3},  {2, -2},  {3, -1},
                               {3, 0},   {3, 1},   {2, 2},   {1, 3},
                               {0, 3},   {-1, 3},  {-2, 2},  {-3, 1},
                               {-3, 0},  {-3, -1}, {-2, -2}, {-1, -3}};
  CircleOffsets c;
  for (int i = 0; i < 16; ++i) c.off[i] = d[i][0] + d[i][1] * stride;
  return c;
}

// Segment test: a contiguous arc of arc_len circle pixels all brighter or
// all darker than the center by more than t. Returns a response usable for
// non-max suppression (0 when not a corner).
float fast_score(const uint8_t* center, const CircleOffsets& c, int t,
                 int arc_len) {
  const int ic = *center;
  int state[16];  // +1 brighter, -1 darker, 0 neither
  for (int i = 0; i < 16; ++i) {
    const int diff = static_cast<int>(center[c.off[i]]) - ic;
    state[i] = diff > t ? 1 : (diff < -t ? -1 : 0);
  }
  for (int s : {1, -1}) {
    int run = 0;
    for (int i = 0; i < 32; ++i) {
      if (state[i & 15] == s) {
        if (++run >= arc_len) {
          float acc = 0;
          for (int j = 0; j < 16; ++j) {
            if (state[j] == s) {
              acc += std::abs(static_cast<int>(center[c.off[j]]) - ic) - t;
            }
          }
          return acc;
        }
      } else {
        run = 0;
      }
    }
  }
  return 0.f;
}

float intensity_centroid_angle(const Image8& img, int u, int v, int radius) {
  double m10 = 0, m01 = 0;
  for (int dy = -radius; dy <= radius; ++dy) {
    const int dx_max = static_cast<int>(
        std::floor(std::sqrt(double(radius) * radius - double(dy) * dy)));
    for (int dx = -dx_max; dx <= dx_max; ++dx) {
      const double val = img.at(u + dx, v + dy);
      m10 += dx * val;
      m01 += dy * val;
    }
  }
  if (m10 == 0 && m01 == 0) return 0.f;
  return static_cast<float>(std::atan2(m01, m10));
}

struct PatternPoint {
  int8_t x1, y1, x2, y2;
};

// Fixed 256-pair sampling pattern, Gaussian-distributed within the 31x31
// patch (radius kept <= 11 so any rotation stays inside the patch).
const std::array<PatternPoint, 256>& sampling_pattern() {
  static const std::array<PatternPoint, 256> pattern = [] {
    std::array<PatternPoint, 256> p{};
    std::mt19937 rng(0x51ab);
    std::normal_distribution<double> gauss(0.0, 4.5);
    auto draw = [&]() -> int8_t {
      const double v = std::clamp(gauss(rng), -11.0, 11.0);
      return static_cast<int8_t>(std::lround(v));
    };
    for (auto& q : p) {
      q.x1 = draw();
      q.y1 = draw();
      do {
        q.x2 = draw();
        q.y2 = draw();
      } while (q.x1 == q.x2 && q.y1 == q.y2);
    }
    return p;
  }();
  return pattern;
}

BinaryDescriptor describe(const Image8& smooth, int u, int v, float angle) {
  const auto& pattern = sampling_pattern();
  const double ca = std::cos(angle), sa = std::sin(angle);
  BinaryDescriptor d;
  auto sample = [&](int8_t x, int8_t y) {
    const int ru = u + static_cast<int>(std::lround(ca * x - sa * y));
    const int rv = v + static_cast<int>(std::lround(sa * x + ca * y));
    return smooth.at(ru, rv);
  };
  for (int i = 0; i < 256; ++i) {
    if (sample(pattern[i].x1, pattern[i].y1) <
        sample(pattern[i].x2, pattern[i].y2)) {
      d.set_bit(i);
    }
  }
  return d;
}

constexpr int kBorder = 17;  // segment test + orientation + rotated pattern

struct LevelCorner {
  int u, v, level;
  float score;
};

std::vector<LevelCorner> detect_level(const Image8& img, int level, int t,
                                      int arc_len) {
  std::vector<LevelCorner> out;
  if (img.width < 2 * kBorder + 2 || img.height < 2 * kBorder + 2) return out;
  const CircleOffsets offs = circle_offsets(img.width);
  std::vector<float> score(static_cast<size_t>(img.width) * img.height, 0.f);
  for (int v = kBorder; v < img.height - kBorder; ++v) {
    for (int u = kBorder; u < img.width - kBorder; ++u) {
      const size_t off = static_cast<size_t>(v) * img.width + u;
      score[off] = fast_score(img.pixels.data() + off, offs, t, arc_len);
    }
  }
  // 3x3 non-max suppression
  for (int v = kBorder; v < img.height - kBorder; ++v) {
    for (int u = kBorder; u < img.width - kBorder; ++u) {
      const size_t off = static_cast<size_t>(v) * img.width + u;
      const float s = score[off];
      if (s <= 0) continue;
      bool maximal = true;
      for (int dy = -1; dy <= 1 && maximal; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const float n = score[off + dy * img.width + dx];
          if (n > s || (n == s && (dy < 0 || (dy == 0 && dx < 0)))) {
            maximal = false;
            break;
          }
        }
      }
      if (maximal) out.push_back({u, v, level, s});
    }
  }
  return out;
}

}  // namespace

FeatureSet detect(const RasterImage& img, const DetectorConfig& cfg) {
  if (img.width < 32 || img.height < 32) {
    throw Error(ErrorCode::TooFewFeatures, "detect: image smaller than 32x32");
  }

  std::vector<Image8> pyramid(static_cast<size_t>(cfg.n_levels));
  pyramid[0] = Image8{img.width, img.height, img.pixels};
  for (int l = 1; l < cfg.n_levels; ++l) {
    pyramid[l] = downsample(pyramid[l - 1], cfg.scale_factor);
  }

  std::vector<LevelCorner> retained;
  for (int pass = 0; pass < 2; ++pass) {
    const int t = pass == 0 ? cfg.threshold : std::max(1, cfg.threshold / 2);
    std::vector<LevelCorner> all;
    for (int l = 0; l < cfg.n_levels; ++l) {
      auto lc = detect_level(pyramid[l], l, t, cfg.arc_len);
      all.insert(all.end(), lc.begin(), lc.end());
    }

    // Per-cell retention on level-0 coordinates for even distribution,
    // then backfill the remaining quota by global score order.
    const int cells = cfg.grid * cfg.grid;
    const int cap = std::max(1, (cfg.target + cells - 1) / cells);
    std::vector<std::vector<size_t>> bucket(static_cast<size_t>(cells));
    std::vector<float> u0(all.size()), v0(all.size());
    for (size_t i = 0; i < all.size(); ++i) {
      const double s = std::pow(cfg.scale_factor, all[i].level);
      u0[i] = static_cast<float>(all[i].u * s);
      v0[i] = static_cast<float>(all[i].v * s);
      const int cu = std::min(cfg.grid - 1,
                              static_cast<int>(u0[i] * cfg.grid / img.width));
      const int cv = std::min(cfg.grid - 1,
                              static_cast<int>(v0[i] * cfg.grid / img.height));
      bucket[static_cast<size_t>(cv) * cfg.grid + cu].push_back(i);
    }
    std::vector<char> taken(all.size(), 0);
    retained.clear();
    for (auto& b : bucket) {
      std::sort(b.begin(), b.end(), [&](size_t x, size_t y) {
        return all[x].score > all[y].score;
      });
      for (size_t i = 0; i < b.size() && i < static_cast<size_t>(cap); ++i) {
        taken[b[i]] = 1;
        retained.push_back(all[b[i]]);
      }
    }
    if (retained.size() < static_cast<size_t>(cfg.target)) {
      std::vector<size_t> rest;
      for (size_t i = 0; i < all.size(); ++i)
        if (!taken[i]) rest.push_back(i);
      std::sort(rest.begin(), rest.end(), [&](size_t x, size_t y) {
        return all[x].score > all[y].score;
      });
      for (size_t i = 0;
           i < rest.size() &&
           retained.size() < static_cast<size_t>(cfg.target);
           ++i) {
        retained.push_back(all[rest[i]]);
      }
    }
    if (retained.size() >= static_cast<size_t>(cfg.target)) break;
  }

  if (retained.size() < static_cast<size_t>(cfg.min_accept)) {
    throw Error(ErrorCode::TooFewFeatures,
                "detect: " + std::to_string(retained.size()) +
                    " corners after relaxed pass");
  }

  std::vector<Image8> smooth(pyramid.size());
  for (size_t l = 0; l < pyramid.size(); ++l) {
    smooth[l] = gaussian_blur(pyramid[l]);
  }

  FeatureSet fs;
  fs.corners.reserve(retained.size());
  fs.descriptors.reserve(retained.size());
  fs.points3d.reserve(retained.size());
  for (const auto& c : retained) {
    const double s = std::pow(cfg.scale_factor, c.level);
    Corner corner;
    corner.u = static_cast<float>(c.u * s);
    corner.v = static_cast<float>(c.v * s);
    corner.score = c.score;
    corner.level = c.level;
    corner.angle = intensity_centroid_angle(pyramid[c.level], c.u, c.v, 15);
    fs.corners.push_back(corner);
    fs.descriptors.push_back(describe(smooth[c.level], c.u, c.v, corner.angle));

    // 3D back-reference: nearest lit raster pixel in a 3x3 neighborhood.
    std::optional<Point3> p3;
    const int pu = static_cast<int>(std::lround(corner.u));
    const int pv = static_cast<int>(std::lround(corner.v));
    for (int r = 0; r <= 1 && !p3; ++r) {
      for (int dy = -r; dy <= r && !p3; ++dy) {
        for (int dx = -r; dx <= r && !p3; ++dx) {
          if (std::max(std::abs(dx), std::abs(dy)) != r) continue;
          if (img.lit(pu + dx, pv + dy)) {
            p3 = backproject(img, Pixel{pu + dx, pv + dy, 0});
          }
        }
      }
    }
    fs.points3d.push_back(p3);
  }
  return fs;
}

MatchSet match(const FeatureSet& a, const FeatureSet& b,
               const MatchConfig& cfg) {
  MatchSet out;
  if (a.size() == 0 || b.size() == 0) return out;
  const int na = static_cast<int>(a.size());
  const int nb = static_cast<int>(b.size());

  std::vector<int> best_b(static_cast<size_t>(na), -1);
  std::vector<int> best_a(static_cast<size_t>(nb), -1);
  std::vector<int> best_a_dist(static_cast<size_t>(nb), 1 << 30);

  for (int i = 0; i < na; ++i) {
    int d1 = 1 << 30, d2 = 1 << 30, j1 = -1;
    for (int j = 0; j < nb; ++j) {
      const int d = hamming(a.descriptors[i], b.descriptors[j]);
      if (d < d1) {
        d2 = d1;
        d1 = d;
        j1 = j;
      } else if (d < d2) {
        d2 = d;
      }
      if (d < best_a_dist[j]) {
        best_a_dist[j] = d;
        best_a[j] = i;
      }
    }
    if (j1 < 0 || d1 > cfg.max_dist) continue;
    if (d2 < (1 << 30) && static_cast<double>(d1) > cfg.ratio * d2) continue;
    best_b[i] = j1;
  }

  for (int i = 0; i < na; ++i) {
    const int j = best_b[i];
    if (j >= 0 && best_a[j] == i) {
      out.pairs.push_back({i, j, hamming(a.descriptors[i], b.descriptors[j])});
    }
  }
  return out;
}

MatchSet ransac_filter(const MatchSet& matches, const FeatureSet& a,
                       const FeatureSet& b, const MatchRansacConfig& cfg) {
  std::vector<size_t> usable;
  for (size_t i = 0; i < matches.pairs.size(); ++i) {
    const auto& m = matches.pairs[i];
    if (a.points3d[m.index_a] && b.points3d[m.index_b]) usable.push_back(i);
  }
  if (usable.size() < 3) {
    throw Error(ErrorCode::NoConsensus, "ransac_filter: fewer than 3 matches");
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<size_t> pick(0, usable.size() - 1);

  std::vector<size_t> best_inliers;
  for (int it = 0; it < cfg.iterations; ++it) {
    const size_t i = pick(rng), j = pick(rng), k = pick(rng);
    if (i == j || j == k || i == k) continue;
    std::vector<Point3> p(3), q(3);
    size_t idx[3] = {usable[i], usable[j], usable[k]};
    for (int s = 0; s < 3; ++s) {
      p[s] = *a.points3d[matches.pairs[idx[s]].index_a];
      q[s] = *b.points3d[matches.pairs[idx[s]].index_b];
    }
    Pose model;
    try {
      model = estimate_rigid_transform(p, q);
    } catch (const Error&) {
      continue;
    }
    std::vector<size_t> inliers;
    for (size_t u : usable) {
      const auto& m = matches.pairs[u];
      const Point3 res =
          *b.points3d[m.index_b] - model.apply(*a.points3d[m.index_a]);
      if (res.norm() < cfg.inlier_3d) inliers.push_back(u);
    }
    if (inliers.size() > best_inliers.size()) best_inliers = std::move(inliers);
  }

  if (best_inliers.size() < static_cast<size_t>(cfg.min_inliers)) {
    throw Error(ErrorCode::NoConsensus,
                "ransac_filter: best consensus " +
                    std::to_string(best_inliers.size()) + " < " +
                    std::to_string(cfg.min_inliers));
  }
  MatchSet out;
  for (size_t u : best_inliers) out.pairs.push_back(matches.pairs[u]);
  return out;
}

namespace {

template <typename T>
void append_raw(std::string& s, const T& v) {
  s.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(const std::string& s, size_t& off) {
  if (off + sizeof(T) > s.size()) {
    throw Error(ErrorCode::MalformedFile, "feature blob truncated");
  }
  T v;
  std::memcpy(&v, s.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

std::string serialize_feature_set(const FeatureSet& fs) {
  std::string out;
  append_raw(out, static_cast<uint32_t>(fs.size()));
  for (size_t i = 0; i < fs.size(); ++i) {
    const Corner& c = fs.corners[i];
    append_raw(out, c.u);
    append_raw(out, c.v);
    append_raw(out, c.score);
    append_raw(out, static_cast<int32_t>(c.level));
    append_raw(out, c.angle);
    for (uint64_t w : fs.descriptors[i].words) append_raw(out, w);
    const uint8_t has3d = fs.points3d[i] ? 1 : 0;
    append_raw(out, has3d);
    const Point3 p = fs.points3d[i].value_or(Point3::Zero());
    for (int k = 0; k < 3; ++k) append_raw(out, p[k]);
  }
  return out;
}

FeatureSet deserialize_feature_set(const std::string& bytes) {
  size_t off = 0;
  const uint32_t n = read_raw<uint32_t>(bytes, off);
  FeatureSet fs;
  for (uint32_t i = 0; i < n; ++i) {
    Corner c;
    c.u = read_raw<float>(bytes, off);
    c.v = read_raw<float>(bytes, off);
    c.score = read_raw<float>(bytes, off);
    c.level = read_raw<int32_t>(bytes, off);
    c.angle = read_raw<float>(bytes, off);
    fs.corners.push_back(c);
    BinaryDescriptor d;
    for (auto& w : d.words) w = read_raw<uint64_t>(bytes, off);
    fs.descriptors.push_back(d);
    const uint8_t has3d = read_raw<uint8_t>(bytes, off);
    Point3 p;
    for (int k = 0; k < 3; ++k) p[k] = read_raw<double>(bytes, off);
    fs.points3d.push_back(has3d ? std::optional<Point3>(p) : std::nullopt);
  }
  return fs;
}

}  // namespace lmslam
