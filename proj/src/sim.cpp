#include "stnet/sim.hpp"

#include <cmath>

#include <fmt/format.h>

#include "stnet/kernels.hpp"

namespace stnet {

std::vector<SegmentRecord> grid_network(std::size_t blocks, double spacing) {
  if (blocks == 0 || !(spacing > 0.0)) throw InputError("grid network needs at least one block and positive spacing");
  std::vector<SegmentRecord> rows;
  std::int64_t id = 1;
  for (std::size_t i = 0; i <= blocks; ++i) {
    const double fixed = static_cast<double>(i) * spacing;
    for (std::size_t k = 0; k < blocks; ++k) {
      const double lo = static_cast<double>(k) * spacing;
      const double hi = static_cast<double>(k + 1) * spacing;
      rows.push_back({id++, {lo, fixed}, {hi, fixed}, 0});
      rows.push_back({id++, {fixed, lo}, {fixed, hi}, 0});
    }
  }
  return rows;
}

std::vector<Event> sim_poisson(const LinearNetwork& net, std::size_t n, Rng& rng) {
  if (n == 0) throw InputError("sim_poisson requires n >= 1");
  UniformSampler draw(net);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Event> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const NetPoint p = draw(rng);
    const double t = unit(rng);
    out.push_back({p, t, t});
  }
  return out;
}

std::vector<Event> sim_poisson_rate(const LinearNetwork& net, double rate, Rng& rng) {
  if (!(rate > 0.0)) throw InputError("sim_poisson_rate requires rate > 0");
  std::poisson_distribution<std::size_t> count(rate * net.total_length());
  const std::size_t n = count(rng);
  if (n == 0) return {};
  return sim_poisson(net, n, rng);
}

SyntheticTruth sim_mixture(const LinearNetwork& net, const MixtureParams& params, std::size_t n, Rng& rng) {
  const std::size_t k = params.centers.size();
  if (k == 0 || params.center_times.size() != k || params.weights.size() != k) {
    throw InputError("mixture needs matching centers, center times and weights");
  }
  if (!(params.w_s > 0.0) || !(params.w_t > 0.0)) throw InputError("mixture bandwidths must be positive");
  for (double w : params.weights) {
    if (!(w >= 0.0)) throw InputError("mixture weights must be non-negative");
  }

  SyntheticTruth truth;
  truth.params = params;
  truth.outside_mass.reserve(k);
  for (double c : params.center_times) truth.outside_mass.push_back(1.0 - temporal_mass(0.0, 1.0, c, params.w_t));

  UniformSampler propose(net);
  std::discrete_distribution<std::size_t> pick(params.weights.begin(), params.weights.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double inv = 1.0 / (2.0 * params.w_s * params.w_s);

  std::size_t attempts = 0;
  std::size_t accepted = 0;
  truth.events.reserve(n);
  truth.membership.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = pick(rng);
    const Vec2 c = params.centers[j].xy;
    NetPoint loc;
    while (true) {
      loc = propose(rng);
      ++attempts;
      if (unit(rng) < std::exp(-squared_distance(loc.xy, c) * inv)) break;
      if (attempts >= 10000 && static_cast<double>(accepted + 1) / static_cast<double>(attempts) < 1e-4) {
        throw NumericalError(fmt::format(
            "spatial bandwidth {} m too small for network extent (acceptance below 1e-4)", params.w_s));
      }
    }
    ++accepted;
    double t = params.center_times[j] + params.w_t * gauss(rng);
    if (params.truncate_time) {
      while (t < 0.0 || t > 1.0) t = params.center_times[j] + params.w_t * gauss(rng);
    }
    truth.events.push_back({loc, t, t});
    truth.membership.push_back(j);
  }
  return truth;
}

}  // namespace stnet
