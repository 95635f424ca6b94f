#include "stnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <unordered_map>

#include <fmt/format.h>

#include "stnet/io.hpp"

namespace stnet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct CellKey {
  std::int64_t ix;
  std::int64_t iy;
  bool operator==(const CellKey&) const = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const {
    return std::hash<std::int64_t>()(k.ix) * 0x9e3779b97f4a7c15ULL ^ std::hash<std::int64_t>()(k.iy);
  }
};

// Merges coordinates within the tolerance onto the first vertex seen.
class VertexIndex {
 public:
  explicit VertexIndex(double tol) : tol_(tol) {}

  std::size_t insert(Vec2 p, std::vector<Vec2>& vertices) {
    const CellKey key{static_cast<std::int64_t>(std::floor(p.x / tol_)),
                      static_cast<std::int64_t>(std::floor(p.y / tol_))};
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        auto it = buckets_.find({key.ix + dx, key.iy + dy});
        if (it == buckets_.end()) continue;
        for (std::size_t v : it->second) {
          if (squared_distance(vertices[v], p) <= tol_ * tol_) return v;
        }
      }
    }
    vertices.push_back(p);
    buckets_[key].push_back(vertices.size() - 1);
    return vertices.size() - 1;
  }

 private:
  double tol_;
  std::unordered_map<CellKey, std::vector<std::size_t>, CellKeyHash> buckets_;
};

std::string row_label(const SegmentRecord& r, std::size_t index) {
  return r.source_line > 0 ? fmt::format("line {}", r.source_line) : fmt::format("row {}", index + 1);
}

}  // namespace

LinearNetwork LinearNetwork::from_segments(std::span<const SegmentRecord> rows) {
  if (rows.empty()) throw InputError("network has no segments");

  LinearNetwork net;
  VertexIndex index(kVertexTolerance);
  auto& seen_ids = net.id_index_;
  net.segments_.reserve(rows.size());

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (!std::isfinite(r.from.x) || !std::isfinite(r.from.y) || !std::isfinite(r.to.x) ||
        !std::isfinite(r.to.y)) {
      throw InputError(fmt::format("network {}: non-finite coordinate", row_label(r, i)));
    }
    if (!seen_ids.emplace(r.id, i).second) {
      throw InputError(fmt::format("network {}: duplicate seg_id {}", row_label(r, i), r.id));
    }
    const std::size_t a = index.insert(r.from, net.vertices_);
    const std::size_t b = index.insert(r.to, net.vertices_);
    const double len = euclidean(net.vertices_[a], net.vertices_[b]);
    if (a == b || !(len > 0.0)) {
      throw InputError(fmt::format("network {}: zero-length segment (seg_id {})", row_label(r, i), r.id));
    }
    net.segments_.push_back({r.id, a, b, len});
    net.total_length_ += len;
  }

  // CSR incidence lists.
  std::vector<std::size_t> degree(net.vertices_.size() + 1, 0);
  for (const auto& s : net.segments_) {
    ++degree[s.a + 1];
    ++degree[s.b + 1];
  }
  for (std::size_t v = 1; v < degree.size(); ++v) degree[v] += degree[v - 1];
  net.incidence_offsets_ = degree;
  net.incidence_.assign(degree.back(), 0);
  std::vector<std::size_t> fill(degree.begin(), degree.end() - 1);
  for (std::size_t s = 0; s < net.segments_.size(); ++s) {
    net.incidence_[fill[net.segments_[s].a]++] = s;
    net.incidence_[fill[net.segments_[s].b]++] = s;
  }

  Window w{kInf, kInf, -kInf, -kInf};
  for (const auto& v : net.vertices_) {
    w.xmin = std::min(w.xmin, v.x);
    w.ymin = std::min(w.ymin, v.y);
    w.xmax = std::max(w.xmax, v.x);
    w.ymax = std::max(w.ymax, v.y);
  }
  net.window_ = w;
  return net;
}

std::span<const std::size_t> LinearNetwork::incident(std::size_t vertex) const {
  const std::size_t lo = incidence_offsets_[vertex];
  const std::size_t hi = incidence_offsets_[vertex + 1];
  return {incidence_.data() + lo, hi - lo};
}

NetPoint LinearNetwork::point_at(std::size_t segment, double offset) const {
  const auto& s = segments_.at(segment);
  const Vec2 u = vertices_[s.a];
  const Vec2 v = vertices_[s.b];
  offset = std::clamp(offset, 0.0, 1.0);
  return {segment, offset, {(1.0 - offset) * u.x + offset * v.x, (1.0 - offset) * u.y + offset * v.y}};
}

std::optional<std::size_t> LinearNetwork::segment_index(std::int64_t id) const {
  const auto it = id_index_.find(id);
  if (it == id_index_.end()) return std::nullopt;
  return it->second;
}

LinearNetwork read_network_csv(const std::filesystem::path& path) {
  const auto table = io::read_csv(path);
  const std::string ctx = path.string();
  const std::size_t c_id = table.column("seg_id", ctx);
  const std::size_t c_x1 = table.column("x1", ctx);
  const std::size_t c_y1 = table.column("y1", ctx);
  const std::size_t c_x2 = table.column("x2", ctx);
  const std::size_t c_y2 = table.column("y2", ctx);
  if (table.rows.empty()) throw InputError(fmt::format("{}: no segments", ctx));

  std::vector<SegmentRecord> rows;
  rows.reserve(table.rows.size());
  for (const auto& r : table.rows) {
    if (r.fields.size() != table.header.size()) {
      throw InputError(fmt::format("{}: line {} has {} fields, expected {}", ctx, r.line,
                                   r.fields.size(), table.header.size()));
    }
    SegmentRecord rec;
    rec.id = io::parse_int(r.fields[c_id], ctx, r.line);
    rec.from = {io::parse_double(r.fields[c_x1], ctx, r.line), io::parse_double(r.fields[c_y1], ctx, r.line)};
    rec.to = {io::parse_double(r.fields[c_x2], ctx, r.line), io::parse_double(r.fields[c_y2], ctx, r.line)};
    rec.source_line = r.line;
    rows.push_back(rec);
  }
  return LinearNetwork::from_segments(rows);
}

DistanceField::DistanceField(const LinearNetwork& net, const NetPoint& source)
    : net_(&net), source_(source), vertex_dist_(net.vertex_count(), kInf) {
  const auto& host = net.segments()[source.segment];
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;

  auto relax = [&](std::size_t v, double d) {
    if (d < vertex_dist_[v]) {
      vertex_dist_[v] = d;
      queue.emplace(d, v);
    }
  };
  relax(host.a, source.offset * host.length);
  relax(host.b, (1.0 - source.offset) * host.length);

  while (!queue.empty()) {
    const auto [d, v] = queue.top();
    queue.pop();
    if (d > vertex_dist_[v]) continue;
    for (std::size_t s : net.incident(v)) {
      const auto& seg = net.segments()[s];
      relax(seg.a == v ? seg.b : seg.a, d + seg.length);
    }
  }
}

double DistanceField::to(const NetPoint& target) const {
  const auto& seg = net_->segments()[target.segment];
  double best = std::min(vertex_dist_[seg.a] + target.offset * seg.length,
                         vertex_dist_[seg.b] + (1.0 - target.offset) * seg.length);
  if (target.segment == source_.segment) {
    best = std::min(best, std::abs(target.offset - source_.offset) * seg.length);
  }
  return best;
}

double shortest_path_dist(const LinearNetwork& net, const NetPoint& a, const NetPoint& b) {
  return DistanceField(net, a).to(b);
}

std::optional<Projection> project_event(const LinearNetwork& net, Vec2 xy, double cutoff_m) {
  if (!(cutoff_m > 0.0)) throw InputError("projection cutoff must be positive");
  const auto& verts = net.vertices();
  std::optional<Projection> best;
  std::int64_t best_id = 0;
  for (std::size_t s = 0; s < net.segment_count(); ++s) {
    const auto& seg = net.segments()[s];
    const Vec2 u = verts[seg.a];
    const Vec2 v = verts[seg.b];
    const double dx = v.x - u.x;
    const double dy = v.y - u.y;
    const double k = std::clamp(((xy.x - u.x) * dx + (xy.y - u.y) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
    const NetPoint p = net.point_at(s, k);
    const double d = euclidean(p.xy, xy);
    if (!best || d < best->distance || (d == best->distance && seg.id < best_id)) {
      best = Projection{p, d};
      best_id = seg.id;
    }
  }
  if (!best || best->distance > cutoff_m) return std::nullopt;
  return best;
}

UniformSampler::UniformSampler(const LinearNetwork& net) : net_(&net) {
  cumulative_.reserve(net.segment_count());
  double acc = 0.0;
  for (const auto& s : net.segments()) {
    acc += s.length;
    cumulative_.push_back(acc);
  }
}

NetPoint UniformSampler::operator()(Rng& rng) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double target = unit(rng) * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
  if (it == cumulative_.end()) --it;
  const std::size_t s = static_cast<std::size_t>(it - cumulative_.begin());
  return net_->point_at(s, unit(rng));
}

std::vector<NetPoint> sample_uniform(const LinearNetwork& net, std::size_t n, Rng& rng) {
  if (n == 0) throw InputError("sample_uniform requires n >= 1");
  UniformSampler draw(net);
  std::vector<NetPoint> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(draw(rng));
  return out;
}

GridGeometry::GridGeometry(const Window& w, std::size_t r, std::size_t c) : window(w), rows(r), cols(c) {
  if (rows == 0 || cols == 0) throw InputError("grid dimensions must be >= 1");
  if (!(w.width() > 0.0) || !(w.height() > 0.0)) throw InputError("grid window is degenerate");
}

std::size_t GridGeometry::col_of(double x) const {
  const double k = std::floor((x - window.xmin) / cell_width());
  if (k <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(k), cols - 1);
}

std::size_t GridGeometry::row_of(double y) const {
  const double k = std::floor((y - window.ymin) / cell_height());
  if (k <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(k), rows - 1);
}

std::vector<CellPiece> clip_to_grid(const LinearNetwork& net, const GridGeometry& grid) {
  std::vector<CellPiece> pieces;
  std::vector<double> cuts;
  const auto& verts = net.vertices();

  // Offsets where the segment crosses grid lines perpendicular to one axis.
  auto add_crossings = [&cuts](double p0, double p1, double origin, double step, std::size_t n) {
    if (p0 == p1) return;
    const double lo = std::min(p0, p1);
    const double hi = std::max(p0, p1);
    const auto first = static_cast<std::int64_t>(std::ceil((lo - origin) / step));
    const auto last = static_cast<std::int64_t>(std::floor((hi - origin) / step));
    for (std::int64_t k = std::max<std::int64_t>(first, 1); k <= std::min<std::int64_t>(last, static_cast<std::int64_t>(n) - 1); ++k) {
      const double u = (origin + static_cast<double>(k) * step - p0) / (p1 - p0);
      if (u > 0.0 && u < 1.0) cuts.push_back(u);
    }
  };

  for (std::size_t s = 0; s < net.segment_count(); ++s) {
    const auto& seg = net.segments()[s];
    const Vec2 u = verts[seg.a];
    const Vec2 v = verts[seg.b];
    cuts.assign({0.0, 1.0});
    add_crossings(u.x, v.x, grid.window.xmin, grid.cell_width(), grid.cols);
    add_crossings(u.y, v.y, grid.window.ymin, grid.cell_height(), grid.rows);
    std::sort(cuts.begin(), cuts.end());

    const std::size_t first_piece = pieces.size();
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      const double lo = cuts[k];
      const double hi = cuts[k + 1];
      if (!(hi > lo)) continue;
      const double mid = 0.5 * (lo + hi);
      const std::size_t cell = grid.cell_of({(1 - mid) * u.x + mid * v.x, (1 - mid) * u.y + mid * v.y});
      if (pieces.size() > first_piece && pieces.back().cell == cell) {
        pieces.back().offset_hi = hi;
      } else {
        pieces.push_back({cell, s, lo, hi, 0.0});
      }
    }
    for (std::size_t k = first_piece; k < pieces.size(); ++k) {
      pieces[k].length = (pieces[k].offset_hi - pieces[k].offset_lo) * seg.length;
    }
  }
  return pieces;
}

PixelGrid::PixelGrid(GridGeometry geometry, std::vector<PixelCell> active)
    : geometry_(geometry), active_(std::move(active)), lookup_(geometry.rows * geometry.cols, -1) {
  for (std::size_t i = 0; i < active_.size(); ++i) {
    lookup_[active_[i].row * geometry_.cols + active_[i].col] = static_cast<std::int64_t>(i);
  }
}

bool PixelGrid::is_active(std::size_t row, std::size_t col) const {
  return lookup_.at(row * geometry_.cols + col) >= 0;
}

Window grid_window(const LinearNetwork& net) {
  Window w = net.window();
  if (w.width() < 1e-9) {
    w.xmin -= 0.5;
    w.xmax += 0.5;
  }
  if (w.height() < 1e-9) {
    w.ymin -= 0.5;
    w.ymax += 0.5;
  }
  return w;
}

PixelGrid pixelate(const LinearNetwork& net, std::size_t rows, std::size_t cols) {
  const GridGeometry grid(grid_window(net), rows, cols);
  const auto pieces = clip_to_grid(net, grid);

  std::vector<double> length(rows * cols, 0.0);
  std::vector<std::int64_t> longest(rows * cols, -1);
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    const auto& p = pieces[k];
    length[p.cell] += p.length;
    if (longest[p.cell] < 0 || p.length > pieces[static_cast<std::size_t>(longest[p.cell])].length) {
      longest[p.cell] = static_cast<std::int64_t>(k);
    }
  }

  std::vector<PixelCell> active;
  for (std::size_t cell = 0; cell < rows * cols; ++cell) {
    if (longest[cell] < 0) continue;
    const auto& p = pieces[static_cast<std::size_t>(longest[cell])];
    active.push_back({cell / cols, cell % cols, length[cell],
                      net.point_at(p.segment, 0.5 * (p.offset_lo + p.offset_hi))});
  }
  return PixelGrid(grid, std::move(active));
}

}  // namespace stnet
