#include "stnet/kernels.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace stnet {

namespace {

const double kLogEpsilon = std::log(std::numeric_limits<double>::epsilon());

}  // namespace

double log_planar_gaussian(Vec2 x, Vec2 c, double w) {
  return -kLogTwoPi - 2.0 * std::log(w) - squared_distance(x, c) / (2.0 * w * w);
}

double planar_gaussian(Vec2 x, Vec2 c, double w) { return std::exp(log_planar_gaussian(x, c, w)); }

double log_temporal_kernel(double t, double center, double w) {
  const double z = (t - center) / w;
  return -0.5 * kLogTwoPi - std::log(w) - 0.5 * z * z;
}

double temporal_kernel(double t, double center, double w) { return std::exp(log_temporal_kernel(t, center, w)); }

double temporal_mass(double lo, double hi, double center, double w) {
  const double s = w * std::sqrt(2.0);
  // Difference of complementary error functions keeps precision in both tails.
  if (lo >= center) return 0.5 * (std::erfc((lo - center) / s) - std::erfc((hi - center) / s));
  if (hi <= center) return 0.5 * (std::erfc((center - hi) / s) - std::erfc((center - lo) / s));
  return 1.0 - 0.5 * std::erfc((hi - center) / s) - 0.5 * std::erfc((center - lo) / s);
}

SpatialKernel::SpatialKernel(double total_length, std::vector<Vec2> points)
    : total_length_(total_length), points_(std::move(points)) {
  if (!(total_length_ > 0.0)) throw InputError("kernel network length must be positive");
  if (points_.empty()) throw InputError("kernel needs at least one integration point");
}

SpatialKernel SpatialKernel::monte_carlo(const LinearNetwork& net, const KernelConfig& cfg) {
  Rng rng(cfg.mc_seed);
  const auto draws = sample_uniform(net, cfg.mc_points, rng);
  std::vector<Vec2> pts;
  pts.reserve(draws.size());
  for (const auto& p : draws) pts.push_back(p.xy);
  return SpatialKernel(net.total_length(), std::move(pts));
}

std::optional<double> SpatialKernel::try_log_correction(Vec2 c, double w) const {
  // log-sum-exp over the integration points, anchored at the nearest one.
  const double inv = 1.0 / (2.0 * w * w);
  double min_d2 = std::numeric_limits<double>::infinity();
  for (const auto& v : points_) min_d2 = std::min(min_d2, squared_distance(v, c));
  double acc = 0.0;
  for (const auto& v : points_) acc += std::exp(-(squared_distance(v, c) - min_d2) * inv);
  const double log_mean_kappa = -kLogTwoPi - 2.0 * std::log(w) - min_d2 * inv + std::log(acc) -
                                std::log(static_cast<double>(points_.size()));
  const double out = std::log(total_length_) + log_mean_kappa;
  if (!(out > kLogEpsilon)) return std::nullopt;
  return out;
}

double SpatialKernel::log_correction(Vec2 c, double w) const {
  auto v = try_log_correction(c, w);
  if (!v) {
    throw IsolatedCenter(fmt::format(
        "network correction vanishes at ({}, {}) with bandwidth {} m; bandwidth too small for the "
        "integration point layout",
        c.x, c.y, w));
  }
  return *v;
}

Correction SpatialKernel::correction(Vec2 c, double w) const {
  const double value = std::exp(log_correction(c, w));
  // Standard error of |L| * mean(kappa) from the sample variance.
  const double n = static_cast<double>(points_.size());
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t k = 0;
  for (const auto& v : points_) {
    const double x = total_length_ * planar_gaussian(v, c, w);
    ++k;
    const double delta = x - mean;
    mean += delta / static_cast<double>(k);
    m2 += delta * (x - mean);
  }
  const double var = points_.size() > 1 ? m2 / (n - 1.0) : 0.0;
  return {value, std::sqrt(var / n)};
}

double SpatialKernel::log_density(Vec2 x, Vec2 c, double w) const {
  return log_planar_gaussian(x, c, w) - log_correction(c, w);
}

double SpatialKernel::density(Vec2 x, Vec2 c, double w) const { return std::exp(log_density(x, c, w)); }

}  // namespace stnet
