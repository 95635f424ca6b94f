/**
 * @file sim.hpp
 * @brief Null and synthetic pattern generators on a linear network.
 */

#pragma once

#include <vector>

#include "stnet/network.hpp"

namespace stnet {

/// Square lattice of `blocks` x `blocks` blocks with streets `spacing` m
/// long, lower-left corner at the origin; segment ids count from 1.
std::vector<SegmentRecord> grid_network(std::size_t blocks, double spacing);

/// n events: uniform locations on the network, uniform times on [0, 1].
std::vector<Event> sim_poisson(const LinearNetwork& net, std::size_t n, Rng& rng);

/// Homogeneous Poisson process with `rate` events per meter per unit time.
std::vector<Event> sim_poisson_rate(const LinearNetwork& net, double rate, Rng& rng);

struct MixtureParams {
  std::vector<NetPoint> centers;
  std::vector<double> center_times;
  std::vector<double> weights;  // normalized internally
  double w_s = 150.0;
  double w_t = 0.1;
  /// Resample times outside [0, 1]. When false the untruncated Gaussian is
  /// used, matching the likelihood exactly.
  bool truncate_time = true;
};

struct SyntheticTruth {
  MixtureParams params;
  std::vector<std::size_t> membership;
  std::vector<Event> events;
  std::vector<double> outside_mass;  // per center: Gaussian mass outside [0, 1]
};

/// Forward draws from the mixture: cluster from the weights, location by
/// rejection from uniform network proposals accepted with probability
/// exp(-|x - c|^2 / (2 w_s^2)), time from the center's Gaussian.
SyntheticTruth sim_mixture(const LinearNetwork& net, const MixtureParams& params, std::size_t n, Rng& rng);

}  // namespace stnet
