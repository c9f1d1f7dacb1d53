#include "detaug/preprocess.hpp"

#include "detaug/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace detaug {

void SegmentationParams::validate() const {
  if (!(scale > 0.0)) fail(ErrorCode::InvalidConfig, "segmentation scale must be positive");
  if (min_region_size < 1) fail(ErrorCode::InvalidConfig, "min_region_size must be >= 1");
}

std::string SegmentationParams::canonical() const {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "segment scale=%.17g min_size=%d", scale, min_region_size);
  return buf;
}

namespace {

struct Edge {
  int a;
  int b;
  double weight;
};

class DisjointSets {
 public:
  explicit DisjointSets(int n) : parent_(static_cast<std::size_t>(n)), size_(static_cast<std::size_t>(n), 1),
                                 internal_(static_cast<std::size_t>(n), 0.0) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  int find(int x) {
    while (parent_[static_cast<std::size_t>(x)] != x) {
      auto& p = parent_[static_cast<std::size_t>(x)];
      p = parent_[static_cast<std::size_t>(p)];
      x = p;
    }
    return x;
  }

  // Joins two roots; the edge weight becomes the new internal difference,
  // which is the maximum MST edge because edges arrive in ascending order.
  void join(int a, int b, double weight) {
    if (size_[static_cast<std::size_t>(a)] < size_[static_cast<std::size_t>(b)]) std::swap(a, b);
    parent_[static_cast<std::size_t>(b)] = a;
    size_[static_cast<std::size_t>(a)] += size_[static_cast<std::size_t>(b)];
    internal_[static_cast<std::size_t>(a)] = std::max({internal_[static_cast<std::size_t>(a)],
                                                       internal_[static_cast<std::size_t>(b)], weight});
  }

  int size(int root) const { return size_[static_cast<std::size_t>(root)]; }
  double internal(int root) const { return internal_[static_cast<std::size_t>(root)]; }

 private:
  std::vector<int> parent_;
  std::vector<int> size_;
  std::vector<double> internal_;
};

double color_distance(Rgb p, Rgb q) {
  const double dr = double(p.r) - q.r;
  const double dg = double(p.g) - q.g;
  const double db = double(p.b) - q.b;
  return std::sqrt(dr * dr + dg * dg + db * db);
}

}  // namespace

Segmentation segment_regions(const RasterImage& image, const SegmentationParams& params) {
  params.validate();
  const int w = image.width();
  const int h = image.height();
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(w) * h * 4);
  auto add = [&](int x0, int y0, int x1, int y1) {
    edges.push_back({y0 * w + x0, y1 * w + x1, color_distance(image.pixel(x0, y0), image.pixel(x1, y1))});
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) add(x, y, x + 1, y);
      if (y + 1 < h) add(x, y, x, y + 1);
      if (x + 1 < w && y + 1 < h) add(x, y, x + 1, y + 1);
      if (x + 1 < w && y > 0) add(x, y, x + 1, y - 1);
    }
  }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& l, const Edge& r) { return l.weight < r.weight; });

  DisjointSets sets(w * h);
  for (const Edge& e : edges) {
    const int a = sets.find(e.a);
    const int b = sets.find(e.b);
    if (a == b) continue;
    const double ta = sets.internal(a) + params.scale / sets.size(a);
    const double tb = sets.internal(b) + params.scale / sets.size(b);
    if (e.weight <= std::min(ta, tb)) sets.join(a, b, e.weight);
  }
  for (const Edge& e : edges) {
    const int a = sets.find(e.a);
    const int b = sets.find(e.b);
    if (a != b && (sets.size(a) < params.min_region_size || sets.size(b) < params.min_region_size)) {
      sets.join(a, b, e.weight);
    }
  }

  Segmentation seg;
  seg.labels = Grid<int>(w, h, -1);
  std::vector<int> root_to_region(static_cast<std::size_t>(w) * h, -1);
  std::vector<std::array<long, 4>> sums;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int root = sets.find(y * w + x);
      int& region = root_to_region[static_cast<std::size_t>(root)];
      if (region < 0) {
        region = seg.region_count++;
        sums.push_back({0, 0, 0, 0});
      }
      seg.labels.at(x, y) = region;
      const Rgb c = image.pixel(x, y);
      auto& s = sums[static_cast<std::size_t>(region)];
      s[0] += c.r;
      s[1] += c.g;
      s[2] += c.b;
      s[3] += 1;
    }
  }
  seg.means.reserve(sums.size());
  for (const auto& s : sums) {
    auto mean = [&](long total) { return static_cast<std::uint8_t>((total * 2 + s[3]) / (2 * s[3])); };
    seg.means.push_back({mean(s[0]), mean(s[1]), mean(s[2])});
  }
  return seg;
}

RasterImage make_sfi(const RasterImage& real, const SegmentationParams& params) {
  const Segmentation seg = segment_regions(real, params);
  RasterImage out(real.width(), real.height());
  for (int y = 0; y < real.height(); ++y) {
    for (int x = 0; x < real.width(); ++x) {
      out.set_pixel(x, y, seg.means[static_cast<std::size_t>(seg.labels.at(x, y))]);
    }
  }
  return out;
}

}  // namespace detaug
