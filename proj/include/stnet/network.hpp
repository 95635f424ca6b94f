/**
 * @file network.hpp
 * @brief Linear network geometry: construction, shortest-path distances,
 * projection of planar events, uniform sampling and pixelation.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "stnet/common.hpp"

namespace stnet {

/// One input row of the network file.
struct SegmentRecord {
  std::int64_t id = 0;
  Vec2 from;
  Vec2 to;
  std::size_t source_line = 0;  // 1-based line in the originating file, 0 if none
};

struct Segment {
  std::int64_t id = 0;
  std::size_t a = 0;  // vertex index at offset 0
  std::size_t b = 0;  // vertex index at offset 1
  double length = 0.0;
};

/// Axis-aligned rectangle, meters.
struct Window {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
};

/// A location on the network: host segment plus fractional offset from its
/// first endpoint. `xy` is cached and always equals the interpolated point.
struct NetPoint {
  std::size_t segment = 0;
  double offset = 0.0;
  Vec2 xy;
};

/// An event on the network with normalized time in [0, 1].
struct Event {
  NetPoint location;
  double t = 0.0;
  double raw_time = 0.0;
};

/**
 * @brief Immutable planar graph of straight segments.
 *
 * Vertices closer than `kVertexTolerance` are merged during construction.
 * Segments are kept in input order; `Segment::id` carries the external id.
 */
class LinearNetwork {
 public:
  static constexpr double kVertexTolerance = 1e-6;

  static LinearNetwork from_segments(std::span<const SegmentRecord> rows);

  const std::vector<Vec2>& vertices() const { return vertices_; }
  const std::vector<Segment>& segments() const { return segments_; }
  std::span<const std::size_t> incident(std::size_t vertex) const;

  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t segment_count() const { return segments_.size(); }
  double total_length() const { return total_length_; }
  const Window& window() const { return window_; }

  NetPoint point_at(std::size_t segment, double offset) const;
  std::optional<std::size_t> segment_index(std::int64_t id) const;

 private:
  std::vector<Vec2> vertices_;
  std::vector<Segment> segments_;
  std::vector<std::size_t> incidence_offsets_;
  std::vector<std::size_t> incidence_;
  std::unordered_map<std::int64_t, std::size_t> id_index_;
  double total_length_ = 0.0;
  Window window_;
};

/// Reads a `seg_id,x1,y1,x2,y2` CSV. Throws InputError with the line number
/// on malformed or zero-length rows.
LinearNetwork read_network_csv(const std::filesystem::path& path);

/**
 * @brief Single-source shortest-path distances from a network point.
 *
 * The source's host segment is split virtually, so the network itself is
 * never modified. Unreachable targets report +infinity.
 */
class DistanceField {
 public:
  DistanceField(const LinearNetwork& net, const NetPoint& source);

  double to(const NetPoint& target) const;
  double to_vertex(std::size_t v) const { return vertex_dist_[v]; }
  const NetPoint& source() const { return source_; }
  const std::vector<double>& vertex_distances() const { return vertex_dist_; }

 private:
  const LinearNetwork* net_;
  NetPoint source_;
  std::vector<double> vertex_dist_;
};

double shortest_path_dist(const LinearNetwork& net, const NetPoint& a, const NetPoint& b);

struct Projection {
  NetPoint point;
  double distance = 0.0;
};

/// Nearest network point to `xy`; nullopt when farther than `cutoff_m`.
/// Equidistant candidates resolve to the lowest segment id.
std::optional<Projection> project_event(const LinearNetwork& net, Vec2 xy, double cutoff_m);

/// Draws points uniformly with respect to arc length.
class UniformSampler {
 public:
  explicit UniformSampler(const LinearNetwork& net);
  NetPoint operator()(Rng& rng) const;

 private:
  const LinearNetwork* net_;
  std::vector<double> cumulative_;
};

std::vector<NetPoint> sample_uniform(const LinearNetwork& net, std::size_t n, Rng& rng);

/// Row/column geometry of a regular grid over a window. Cells are half-open
/// [lo, hi) except the last row/column, which is closed.
struct GridGeometry {
  Window window;
  std::size_t rows = 1;
  std::size_t cols = 1;

  GridGeometry() = default;
  GridGeometry(const Window& w, std::size_t rows, std::size_t cols);

  double cell_width() const { return window.width() / static_cast<double>(cols); }
  double cell_height() const { return window.height() / static_cast<double>(rows); }
  std::size_t col_of(double x) const;
  std::size_t row_of(double y) const;
  std::size_t cell_of(Vec2 p) const { return row_of(p.y) * cols + col_of(p.x); }
};

/// Portion of one segment lying inside one grid cell.
struct CellPiece {
  std::size_t cell = 0;  // row * cols + col
  std::size_t segment = 0;
  double offset_lo = 0.0;
  double offset_hi = 0.0;
  double length = 0.0;
};

/// Exact clipping of every segment against the grid lines.
std::vector<CellPiece> clip_to_grid(const LinearNetwork& net, const GridGeometry& grid);

struct PixelCell {
  std::size_t row = 0;
  std::size_t col = 0;
  double network_length = 0.0;
  NetPoint representative;  // midpoint of the longest in-cell piece
};

class PixelGrid {
 public:
  PixelGrid(GridGeometry geometry, std::vector<PixelCell> active);

  const GridGeometry& geometry() const { return geometry_; }
  std::size_t rows() const { return geometry_.rows; }
  std::size_t cols() const { return geometry_.cols; }
  const std::vector<PixelCell>& active() const { return active_; }
  std::size_t active_count() const { return active_.size(); }
  bool is_active(std::size_t row, std::size_t col) const;

 private:
  GridGeometry geometry_;
  std::vector<PixelCell> active_;
  std::vector<std::int64_t> lookup_;  // cell -> active index or -1
};

/// Pixelates the network window; default layout is 50 x 50.
PixelGrid pixelate(const LinearNetwork& net, std::size_t rows = 50, std::size_t cols = 50);

/// Window used for grids: the network bounding box with degenerate
/// dimensions padded to 1 m.
Window grid_window(const LinearNetwork& net);

}  // namespace stnet
