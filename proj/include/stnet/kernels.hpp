/**
 * @file kernels.hpp
 * @brief Spatial and temporal smoothing kernels, including the
 * network-corrected convolution kernel.
 *
 * The spatial kernel is a planar Gaussian divided by its line integral over
 * the network. The line integral is estimated once per (center, bandwidth)
 * from a fixed set of uniformly drawn network points, so for a given run the
 * kernel is a deterministic function of its arguments.
 */

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "stnet/common.hpp"
#include "stnet/network.hpp"

namespace stnet {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLogTwoPi = 1.83787706640934548356;

/// Isotropic bivariate normal density with standard deviation w.
double planar_gaussian(Vec2 x, Vec2 c, double w);
double log_planar_gaussian(Vec2 x, Vec2 c, double w);

/// Univariate normal density; deliberately not truncated to [0, 1].
double temporal_kernel(double t, double center, double w);
double log_temporal_kernel(double t, double center, double w);

/// Probability mass of N(center, w^2) on [lo, hi].
double temporal_mass(double lo, double hi, double center, double w);

/// Raised when the network correction vanishes numerically.
class IsolatedCenter : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

struct KernelConfig {
  std::size_t mc_points = 1000;
  std::uint64_t mc_seed = 1;
};

struct Correction {
  double value = 0.0;      // per meter
  double std_error = 0.0;  // Monte Carlo standard error of `value`
};

class SpatialKernel {
 public:
  /// `points` are planar coordinates of network locations that stand in for
  /// a uniform draw over a network of length `total_length`.
  SpatialKernel(double total_length, std::vector<Vec2> points);

  /// Draws `cfg.mc_points` uniform network points with `cfg.mc_seed`.
  static SpatialKernel monte_carlo(const LinearNetwork& net, const KernelConfig& cfg);

  double total_length() const { return total_length_; }
  const std::vector<Vec2>& points() const { return points_; }

  /// Estimate of the network line integral of the planar Gaussian centred
  /// at c. Throws IsolatedCenter when the estimate is below machine epsilon.
  Correction correction(Vec2 c, double w) const;
  double log_correction(Vec2 c, double w) const;
  /// As log_correction but returns nullopt instead of throwing.
  std::optional<double> try_log_correction(Vec2 c, double w) const;

  /// K_S(x; c, w) per meter of network.
  double density(Vec2 x, Vec2 c, double w) const;
  double log_density(Vec2 x, Vec2 c, double w) const;

 private:
  double total_length_;
  std::vector<Vec2> points_;
};

}  // namespace stnet
