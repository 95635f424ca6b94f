// Small networks and brute-force oracles shared by the tests.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "stnet/network.hpp"
#include "stnet/sim.hpp"

namespace fixture {

using stnet::LinearNetwork;
using stnet::NetPoint;
using stnet::SegmentRecord;
using stnet::Vec2;

inline LinearNetwork from_coords(const std::vector<std::array<double, 4>>& rows) {
  std::vector<SegmentRecord> recs;
  std::int64_t id = 1;
  for (const auto& r : rows) recs.push_back({id++, {r[0], r[1]}, {r[2], r[3]}, 0});
  return LinearNetwork::from_segments(recs);
}

inline LinearNetwork line(double length) { return from_coords({{0, 0, length, 0}}); }

inline LinearNetwork grid(std::size_t blocks, double spacing) {
  return LinearNetwork::from_segments(stnet::grid_network(blocks, spacing));
}

/// Plus-shaped network: four arms of `arm` meters meeting at the origin.
inline LinearNetwork cross(double arm) {
  return from_coords({{0, 0, arm, 0}, {0, 0, -arm, 0}, {0, 0, 0, arm}, {0, 0, 0, -arm}});
}

/// Network point nearest to xy (exact for points already on the network).
inline NetPoint at(const LinearNetwork& net, Vec2 xy) { return stnet::project_event(net, xy, 1e9)->point; }

/// All-pairs shortest paths by Floyd-Warshall over the vertices plus the two
/// query points inserted as extra nodes on their host segments.
inline double floyd_distance(const LinearNetwork& net, const NetPoint& a, const NetPoint& b) {
  const std::size_t nv = net.vertex_count();
  const std::size_t n = nv + 2;
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> d(n * n, inf);
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 0.0;
  auto link = [&](std::size_t u, std::size_t v, double w) {
    d[u * n + v] = std::min(d[u * n + v], w);
    d[v * n + u] = std::min(d[v * n + u], w);
  };
  const NetPoint pts[2] = {a, b};
  for (std::size_t s = 0; s < net.segment_count(); ++s) {
    const auto& seg = net.segments()[s];
    // Split points on this segment, ordered by offset.
    std::vector<std::pair<double, std::size_t>> stops{{0.0, seg.a}, {1.0, seg.b}};
    for (std::size_t k = 0; k < 2; ++k) {
      if (pts[k].segment == s) stops.push_back({pts[k].offset, nv + k});
    }
    std::sort(stops.begin(), stops.end());
    for (std::size_t k = 0; k + 1 < stops.size(); ++k) {
      link(stops[k].second, stops[k + 1].second, (stops[k + 1].first - stops[k].first) * seg.length);
    }
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] = std::min(d[i * n + j], d[i * n + k] + d[k * n + j]);
  return d[nv * n + nv + 1];
}

}  // namespace fixture
