/**
 * @file sumstats.hpp
 * @brief Second-order summaries on linear networks: geometrically corrected
 * space-time K-function with Poisson envelopes, multitype pair correlation,
 * Scott bandwidths, and amenity mixes around cluster centers.
 */

#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stnet/kernels.hpp"
#include "stnet/network.hpp"

namespace stnet {

/// Isotropic Scott bandwidth: mean over coordinates of sd * n^(-1/(d+4)).
/// Coordinates with zero spread are left out of the mean; if all are
/// degenerate an InputError is thrown.
double scott_bandwidth(std::span<const std::vector<double>> points);
double scott_bandwidth(std::span<const Vec2> points);
double scott_bandwidth(std::span<const double> values);

/**
 * @brief Number of network locations at exact shortest-path distance r from
 * a source point, as a step function of r.
 *
 * Along a segment whose endpoints are at distances d0 and d1, the distance
 * profile rises from each end with unit slope and peaks at
 * (d0 + d1 + length) / 2, so every segment contributes one crossing for r in
 * (d0, peak) and one for r in (d1, peak). The source's host segment is
 * split at the source.
 */
class SphereCounter {
 public:
  SphereCounter(const LinearNetwork& net, const DistanceField& field);
  double count(double r) const;

 private:
  std::vector<double> opens_;
  std::vector<double> closes_;
};

/// Number of instants in [0, 1] at time distance tau from t.
double temporal_sphere_count(double t, double tau);

struct KSurface {
  std::vector<double> r;
  std::vector<double> t;
  std::vector<double> values;  // values[ir * t.size() + it]

  double at(std::size_t ir, std::size_t it) const { return values[ir * t.size() + it]; }
};

/// Space-time K-function estimate, averaged over the points of the pattern.
/// `intensity[i]` is the first-order intensity at event i (per meter per
/// unit normalized time). Pairs in different components are skipped.
KSurface kfunction(const LinearNetwork& net, std::span<const Event> events, std::span<const double> intensity,
                   const std::vector<double>& r_grid, const std::vector<double>& t_grid, std::size_t threads = 1);

enum class IntensityMode { homogeneous, kernel };

/// n / |L| at every event (time normalized to unit length).
std::vector<double> homogeneous_intensity(const LinearNetwork& net, std::span<const Event> events);

/// Convolution estimate sum_j K_S(x_i; x_j, h_s) K_T(t_i; t_j, h_t) with
/// Scott bandwidths for space (d = 2) and time (d = 1).
std::vector<double> kernel_intensity(std::span<const Event> events, const SpatialKernel& kernel);

/// Spatial-only convolution estimate at each point, bandwidth h.
std::vector<double> kernel_spatial_intensity(std::span<const NetPoint> points, const SpatialKernel& kernel, double h);

struct EnvelopeConfig {
  std::size_t simulations = 99;
  std::vector<double> r_grid;
  std::vector<double> t_grid;
  IntensityMode intensity = IntensityMode::homogeneous;
  const SpatialKernel* kernel = nullptr;  // required for IntensityMode::kernel
  std::size_t threads = 1;
};

struct EnvelopeResult {
  KSurface observed;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<double> mean;
  std::vector<double> variance;
  double t_observed = 0.0;
  std::vector<double> t_simulated;
  double p_value = 1.0;
  std::size_t excluded_nodes = 0;  // grid nodes with zero simulated variance
};

/// (1 + #{T_i > T*}) / (m + 1).
double envelope_p_value(double t_observed, std::span<const double> t_simulated);

/// Monte Carlo test of Poissonness: m homogeneous Poisson patterns with the
/// observed count, standardized-deviation statistic integrated over the
/// (r, t) grid. Larger K than the null gives a larger T.
EnvelopeResult envelope_pvalue(const LinearNetwork& net, std::span<const Event> events, const EnvelopeConfig& cfg,
                               Rng& rng);

/**
 * @brief Inhomogeneous multitype pair correlation between two patterns.
 *
 * The geometric correction uses the mean of the inverse sphere counts seen
 * from either point of a pair and the symmetrized network distance, so
 * swapping the two patterns gives an identical curve.
 */
std::vector<double> multitype_pcf(const LinearNetwork& net, std::span<const NetPoint> first,
                                  std::span<const double> lambda_first, std::span<const NetPoint> second,
                                  std::span<const double> lambda_second, const std::vector<double>& r_grid,
                                  double bandwidth);

/// Scott bandwidth (d = 1) of the finite cross-pattern network distances up
/// to r_max; the natural scale for smoothing in r.
double pcf_bandwidth(const LinearNetwork& net, std::span<const NetPoint> first, std::span<const NetPoint> second,
                     double r_max);

enum class AmenityCategory { entertainment = 0, financial = 1, eatery = 2 };
inline constexpr std::size_t kAmenityCategories = 3;

std::string to_string(AmenityCategory c);
/// Accepts the group names and the raw amenity tags they cover
/// (bar/nightclub/pub, atm/bank, cafe/restaurant).
std::optional<AmenityCategory> parse_amenity_category(const std::string& s);

struct Amenity {
  Vec2 xy;
  AmenityCategory category = AmenityCategory::eatery;
};

struct AmenityMix {
  std::size_t cluster = 0;
  std::array<std::size_t, kAmenityCategories> counts{};
  std::optional<std::array<double, kAmenityCategories>> proportions;  // absent if nothing in range
};

/// Inverse-frequency weighted category proportions of amenities within
/// Euclidean `radius` of each center.
std::vector<AmenityMix> amenity_mix(std::span<const Vec2> centers, std::span<const Amenity> amenities,
                                    double radius);

std::vector<Amenity> read_amenities_csv(const std::string& path);

}  // namespace stnet
