#include "stnet/sumstats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include <fmt/format.h>

#include "stnet/io.hpp"
#include "stnet/sim.hpp"

namespace stnet {

namespace {

double coordinate_sd(std::span<const std::vector<double>> points, std::size_t dim) {
  const double n = static_cast<double>(points.size());
  double mean = 0.0;
  for (const auto& p : points) mean += p[dim];
  mean /= n;
  double ss = 0.0;
  for (const auto& p : points) ss += (p[dim] - mean) * (p[dim] - mean);
  return std::sqrt(ss / (n - 1.0));
}

}  // namespace

double scott_bandwidth(std::span<const std::vector<double>> points) {
  if (points.size() < 2) throw InputError("Scott bandwidth needs at least two points");
  const std::size_t d = points.front().size();
  if (d == 0) throw InputError("Scott bandwidth needs at least one coordinate");
  for (const auto& p : points) {
    if (p.size() != d) throw InputError("points differ in dimension");
  }
  const double factor = std::pow(static_cast<double>(points.size()), -1.0 / (static_cast<double>(d) + 4.0));
  double acc = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < d; ++k) {
    const double sd = coordinate_sd(points, k);
    if (sd > 0.0) {
      acc += sd;
      ++used;
    }
  }
  if (used == 0) throw InputError("degenerate point set: zero variance in every coordinate");
  return factor * acc / static_cast<double>(used);
}

double scott_bandwidth(std::span<const Vec2> points) {
  std::vector<std::vector<double>> rows;
  rows.reserve(points.size());
  for (const auto& p : points) rows.push_back({p.x, p.y});
  return scott_bandwidth(rows);
}

double scott_bandwidth(std::span<const double> values) {
  std::vector<std::vector<double>> rows;
  rows.reserve(values.size());
  for (double v : values) rows.push_back({v});
  return scott_bandwidth(rows);
}

SphereCounter::SphereCounter(const LinearNetwork& net, const DistanceField& field) {
  const auto& src = field.source();
  auto add_piece = [this](double d0, double d1, double len) {
    if (!std::isfinite(d0) || !std::isfinite(d1) || !(len > 0.0)) return;
    const double peak = 0.5 * (d0 + d1 + len);
    if (peak > d0) {
      opens_.push_back(d0);
      closes_.push_back(peak);
    }
    if (peak > d1) {
      opens_.push_back(d1);
      closes_.push_back(peak);
    }
  };
  for (std::size_t s = 0; s < net.segment_count(); ++s) {
    const auto& seg = net.segments()[s];
    const double da = field.to_vertex(seg.a);
    const double db = field.to_vertex(seg.b);
    if (s == src.segment) {
      add_piece(da, 0.0, src.offset * seg.length);
      add_piece(0.0, db, (1.0 - src.offset) * seg.length);
    } else {
      add_piece(da, db, seg.length);
    }
  }
  std::sort(opens_.begin(), opens_.end());
  std::sort(closes_.begin(), closes_.end());
}

double SphereCounter::count(double r) const {
  // Open intervals (open, close): count opens < r minus closes <= r.
  const auto opened = std::lower_bound(opens_.begin(), opens_.end(), r) - opens_.begin();
  const auto closed = std::upper_bound(closes_.begin(), closes_.end(), r) - closes_.begin();
  return static_cast<double>(opened - closed);
}

double temporal_sphere_count(double t, double tau) {
  if (tau == 0.0) return 1.0;
  return static_cast<double>((t - tau >= 0.0) + (t + tau <= 1.0));
}

KSurface kfunction(const LinearNetwork& net, std::span<const Event> events, std::span<const double> intensity,
                   const std::vector<double>& r_grid, const std::vector<double>& t_grid, std::size_t threads) {
  if (intensity.size() != events.size()) throw InputError("one intensity value per event is required");
  for (double v : intensity) {
    if (!(v > 0.0)) throw InputError("intensities must be strictly positive");
  }
  if (r_grid.empty() || t_grid.empty()) throw InputError("K-function grids must be non-empty");
  if (!std::is_sorted(r_grid.begin(), r_grid.end()) || !std::is_sorted(t_grid.begin(), t_grid.end())) {
    throw InputError("K-function grids must be increasing");
  }

  const std::size_t n = events.size();
  const std::size_t nr = r_grid.size();
  const std::size_t nt = t_grid.size();
  KSurface out{r_grid, t_grid, std::vector<double>(nr * nt, 0.0)};
  if (n < 2) return out;

  // Per-source increment histograms; a pair contributes to every node with
  // r > d and t > |dt|, i.e. from the first such index onwards.
  std::vector<std::vector<double>> hist(n, std::vector<double>((nr + 1) * (nt + 1), 0.0));
  parallel_for(n, threads, [&](std::size_t u) {
    const DistanceField field(net, events[u].location);
    const SphereCounter sphere(net, field);
    auto& h = hist[u];
    for (std::size_t x = 0; x < n; ++x) {
      if (x == u) continue;
      const double d = field.to(events[x].location);
      if (!std::isfinite(d) || !(d > 0.0)) continue;
      const double dt = std::abs(events[u].t - events[x].t);
      const std::size_t ir = static_cast<std::size_t>(std::upper_bound(r_grid.begin(), r_grid.end(), d) - r_grid.begin());
      const std::size_t it = static_cast<std::size_t>(std::upper_bound(t_grid.begin(), t_grid.end(), dt) - t_grid.begin());
      if (ir == nr || it == nt) continue;
      const double m = std::max(1.0, sphere.count(d)) * std::max(1.0, temporal_sphere_count(events[u].t, dt));
      h[ir * (nt + 1) + it] += 1.0 / (intensity[x] * m);
    }
  });

  std::vector<double> total((nr + 1) * (nt + 1), 0.0);
  for (const auto& h : hist) {
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += h[k];
  }
  for (std::size_t ir = 0; ir < nr; ++ir) {
    for (std::size_t it = 0; it < nt; ++it) {
      double v = total[ir * (nt + 1) + it];
      if (ir > 0) v += out.values[(ir - 1) * nt + it];
      if (it > 0) v += out.values[ir * nt + it - 1];
      if (ir > 0 && it > 0) v -= out.values[(ir - 1) * nt + it - 1];
      out.values[ir * nt + it] = v;
    }
  }
  // Cumulative sums of non-negative increments; clamp rounding so the
  // surface stays monotone.
  for (std::size_t ir = 0; ir < nr; ++ir) {
    for (std::size_t it = 0; it < nt; ++it) {
      double& v = out.values[ir * nt + it];
      if (ir > 0) v = std::max(v, out.values[(ir - 1) * nt + it]);
      if (it > 0) v = std::max(v, out.values[ir * nt + it - 1]);
    }
  }
  for (double& v : out.values) v /= static_cast<double>(n);
  return out;
}

std::vector<double> homogeneous_intensity(const LinearNetwork& net, std::span<const Event> events) {
  return std::vector<double>(events.size(), static_cast<double>(events.size()) / net.total_length());
}

std::vector<double> kernel_intensity(std::span<const Event> events, const SpatialKernel& kernel) {
  std::vector<Vec2> xy;
  std::vector<double> ts;
  xy.reserve(events.size());
  ts.reserve(events.size());
  for (const auto& e : events) {
    xy.push_back(e.location.xy);
    ts.push_back(e.t);
  }
  const double hs = scott_bandwidth(xy);
  const double ht = scott_bandwidth(ts);
  std::vector<double> corr(events.size());
  for (std::size_t j = 0; j < events.size(); ++j) corr[j] = kernel.log_correction(xy[j], hs);
  std::vector<double> out(events.size(), 0.0);
  for (std::size_t i = 0; i < events.size(); ++i) {
    for (std::size_t j = 0; j < events.size(); ++j) {
      out[i] += std::exp(log_planar_gaussian(xy[i], xy[j], hs) - corr[j] + log_temporal_kernel(ts[i], ts[j], ht));
    }
  }
  return out;
}

std::vector<double> kernel_spatial_intensity(std::span<const NetPoint> points, const SpatialKernel& kernel, double h) {
  std::vector<double> corr(points.size());
  for (std::size_t j = 0; j < points.size(); ++j) corr[j] = kernel.log_correction(points[j].xy, h);
  std::vector<double> out(points.size(), 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < points.size(); ++j) {
      out[i] += std::exp(log_planar_gaussian(points[i].xy, points[j].xy, h) - corr[j]);
    }
  }
  return out;
}

double envelope_p_value(double t_observed, std::span<const double> t_simulated) {
  const auto exceed = std::count_if(t_simulated.begin(), t_simulated.end(), [&](double t) { return t > t_observed; });
  return (1.0 + static_cast<double>(exceed)) / (static_cast<double>(t_simulated.size()) + 1.0);
}

namespace {

std::vector<double> intensity_for(const LinearNetwork& net, std::span<const Event> events, const EnvelopeConfig& cfg) {
  if (cfg.intensity == IntensityMode::homogeneous) return homogeneous_intensity(net, events);
  if (cfg.kernel == nullptr) throw InputError("kernel intensity mode requires a spatial kernel");
  return kernel_intensity(events, *cfg.kernel);
}

// Left-endpoint widths of a grid starting from zero.
std::vector<double> widths(const std::vector<double>& grid) {
  std::vector<double> w(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) w[i] = grid[i] - (i == 0 ? 0.0 : grid[i - 1]);
  return w;
}

}  // namespace

EnvelopeResult envelope_pvalue(const LinearNetwork& net, std::span<const Event> events, const EnvelopeConfig& cfg,
                               Rng& rng) {
  if (cfg.simulations < 1) throw InputError("envelope test needs at least one simulation");
  if (events.empty()) throw InputError("envelope test needs a non-empty pattern");

  EnvelopeResult res;
  res.observed = kfunction(net, events, intensity_for(net, events, cfg), cfg.r_grid, cfg.t_grid, cfg.threads);
  const std::size_t nodes = res.observed.values.size();

  std::vector<KSurface> sims;
  sims.reserve(cfg.simulations);
  for (std::size_t m = 0; m < cfg.simulations; ++m) {
    const auto pattern = sim_poisson(net, events.size(), rng);
    sims.push_back(kfunction(net, pattern, intensity_for(net, pattern, cfg), cfg.r_grid, cfg.t_grid, cfg.threads));
  }

  res.lower.assign(nodes, std::numeric_limits<double>::infinity());
  res.upper.assign(nodes, -std::numeric_limits<double>::infinity());
  res.mean.assign(nodes, 0.0);
  res.variance.assign(nodes, 0.0);
  for (const auto& s : sims) {
    for (std::size_t k = 0; k < nodes; ++k) {
      res.lower[k] = std::min(res.lower[k], s.values[k]);
      res.upper[k] = std::max(res.upper[k], s.values[k]);
      res.mean[k] += s.values[k];
    }
  }
  const double m = static_cast<double>(sims.size());
  for (double& v : res.mean) v /= m;
  for (const auto& s : sims) {
    for (std::size_t k = 0; k < nodes; ++k) res.variance[k] += (s.values[k] - res.mean[k]) * (s.values[k] - res.mean[k]);
  }
  for (double& v : res.variance) v = sims.size() > 1 ? v / (m - 1.0) : 0.0;

  const auto wr = widths(cfg.r_grid);
  const auto wt = widths(cfg.t_grid);
  const std::size_t nt = cfg.t_grid.size();
  auto statistic = [&](const KSurface& k) {
    double total = 0.0;
    for (std::size_t i = 0; i < nodes; ++i) {
      if (!(res.variance[i] > 0.0)) continue;
      total += (k.values[i] - res.mean[i]) / std::sqrt(res.variance[i]) * wr[i / nt] * wt[i % nt];
    }
    return total;
  };
  for (std::size_t i = 0; i < nodes; ++i) res.excluded_nodes += !(res.variance[i] > 0.0);
  res.t_observed = statistic(res.observed);
  res.t_simulated.reserve(sims.size());
  for (const auto& s : sims) res.t_simulated.push_back(statistic(s));
  res.p_value = envelope_p_value(res.t_observed, res.t_simulated);
  return res;
}

std::vector<double> multitype_pcf(const LinearNetwork& net, std::span<const NetPoint> first,
                                  std::span<const double> lambda_first, std::span<const NetPoint> second,
                                  std::span<const double> lambda_second, const std::vector<double>& r_grid,
                                  double bandwidth) {
  if (lambda_first.size() != first.size() || lambda_second.size() != second.size()) {
    throw InputError("one intensity value per point is required");
  }
  if (!(bandwidth > 0.0)) throw InputError("pcf bandwidth must be positive");
  for (double v : lambda_first) {
    if (!(v > 0.0)) throw InputError("intensities must be strictly positive");
  }
  for (double v : lambda_second) {
    if (!(v > 0.0)) throw InputError("intensities must be strictly positive");
  }
  const std::size_t n1 = first.size();
  const std::size_t n2 = second.size();

  // Symmetrized distances: minimum over both search directions.
  std::vector<double> dist(n1 * n2);
  for (std::size_t i = 0; i < n1; ++i) {
    const DistanceField f(net, first[i]);
    for (std::size_t j = 0; j < n2; ++j) dist[i * n2 + j] = f.to(second[j]);
  }
  std::vector<double> inv_m(n1 * n2, 0.0);
  for (std::size_t j = 0; j < n2; ++j) {
    const DistanceField f(net, second[j]);
    const SphereCounter sphere(net, f);
    for (std::size_t i = 0; i < n1; ++i) {
      double& d = dist[i * n2 + j];
      d = std::min(d, f.to(first[i]));
      if (std::isfinite(d) && d > 0.0) inv_m[i * n2 + j] = 0.5 / std::max(1.0, sphere.count(d));
    }
  }
  for (std::size_t i = 0; i < n1; ++i) {
    const DistanceField f(net, first[i]);
    const SphereCounter sphere(net, f);
    for (std::size_t j = 0; j < n2; ++j) {
      const double d = dist[i * n2 + j];
      if (std::isfinite(d) && d > 0.0) inv_m[i * n2 + j] += 0.5 / std::max(1.0, sphere.count(d));
    }
  }

  // Canonical summation order (sorted by distance, then weight) makes the
  // result independent of which pattern comes first.
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(n1 * n2);
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < n2; ++j) {
      const double d = dist[i * n2 + j];
      if (!std::isfinite(d) || !(d > 0.0)) continue;
      pairs.emplace_back(d, inv_m[i * n2 + j] / (lambda_first[i] * lambda_second[j]));
    }
  }
  std::sort(pairs.begin(), pairs.end());

  const double norm = 1.0 / (std::sqrt(2.0 * kPi) * bandwidth);
  std::vector<double> out(r_grid.size(), 0.0);
  for (std::size_t k = 0; k < r_grid.size(); ++k) {
    double acc = 0.0;
    for (const auto& [d, w] : pairs) {
      const double z = (r_grid[k] - d) / bandwidth;
      acc += norm * std::exp(-0.5 * z * z) * w;
    }
    out[k] = acc / net.total_length();
  }
  return out;
}

double pcf_bandwidth(const LinearNetwork& net, std::span<const NetPoint> first, std::span<const NetPoint> second,
                     double r_max) {
  std::vector<double> d;
  for (const auto& a : first) {
    const DistanceField f(net, a);
    for (const auto& b : second) {
      const double v = f.to(b);
      if (std::isfinite(v) && v <= r_max) d.push_back(v);
    }
  }
  return scott_bandwidth(d);
}

std::string to_string(AmenityCategory c) {
  switch (c) {
    case AmenityCategory::entertainment: return "entertainment";
    case AmenityCategory::financial: return "financial";
    case AmenityCategory::eatery: return "eatery";
  }
  return "unknown";
}

std::optional<AmenityCategory> parse_amenity_category(const std::string& raw) {
  std::string s = raw;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "entertainment" || s == "bar" || s == "nightclub" || s == "pub") return AmenityCategory::entertainment;
  if (s == "financial" || s == "atm" || s == "bank") return AmenityCategory::financial;
  if (s == "eatery" || s == "cafe" || s == "restaurant") return AmenityCategory::eatery;
  return std::nullopt;
}

std::vector<AmenityMix> amenity_mix(std::span<const Vec2> centers, std::span<const Amenity> amenities,
                                    double radius) {
  if (!(radius > 0.0)) throw InputError("amenity radius must be positive");
  std::array<double, kAmenityCategories> totals{};
  for (const auto& a : amenities) totals[static_cast<std::size_t>(a.category)] += 1.0;
  const double all = static_cast<double>(amenities.size());

  std::vector<AmenityMix> out;
  out.reserve(centers.size());
  const double r2 = radius * radius;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    AmenityMix mix;
    mix.cluster = c;
    for (const auto& a : amenities) {
      if (squared_distance(a.xy, centers[c]) <= r2) ++mix.counts[static_cast<std::size_t>(a.category)];
    }
    std::array<double, kAmenityCategories> score{};
    double sum = 0.0;
    for (std::size_t k = 0; k < kAmenityCategories; ++k) {
      if (mix.counts[k] == 0) continue;
      score[k] = all / totals[k] * static_cast<double>(mix.counts[k]);
      sum += score[k];
    }
    if (sum > 0.0) {
      for (double& v : score) v /= sum;
      mix.proportions = score;
    }
    out.push_back(mix);
  }
  return out;
}

std::vector<Amenity> read_amenities_csv(const std::string& path) {
  const auto table = io::read_csv(path);
  const std::size_t cx = table.column("x", path);
  const std::size_t cy = table.column("y", path);
  const std::size_t cc = table.column("category", path);
  std::vector<Amenity> out;
  out.reserve(table.rows.size());
  for (const auto& r : table.rows) {
    if (r.fields.size() != table.header.size()) {
      throw InputError(fmt::format("{}: line {} has {} fields, expected {}", path, r.line, r.fields.size(),
                                   table.header.size()));
    }
    const auto cat = parse_amenity_category(r.fields[cc]);
    if (!cat) throw InputError(fmt::format("{}: line {}: unknown amenity category '{}'", path, r.line, r.fields[cc]));
    out.push_back({{io::parse_double(r.fields[cx], path, r.line), io::parse_double(r.fields[cy], path, r.line)}, *cat});
  }
  return out;
}

}  // namespace stnet
