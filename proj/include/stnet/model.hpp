/**
 * @file model.hpp
 * @brief Truncated Dirichlet-process mixture of network space-time kernels:
 * state, likelihood, blocked Gibbs / Metropolis-Hastings updates, and the
 * posterior partition summary.
 *
 * Cluster indices are 0-based throughout the library; files written by the
 * CLI use the same convention.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stnet/kernels.hpp"
#include "stnet/network.hpp"

namespace stnet {

struct ClusterCenter {
  std::size_t pixel = 0;  // index into PixelGrid::active()
  NetPoint location;
  double t = 0.0;
};

struct ChainState {
  double w_s = 300.0;
  double w_t = 0.2;
  double b_u = 1.0;
  std::vector<double> sticks;   // U_j; the last stick is fixed at 1
  // log(1 - U_j), exact even where U_j rounds to 1. Written by the stick
  // updates; when empty it is taken from the sticks. Clear it after editing
  // the sticks by hand.
  std::vector<double> stick_log_rest;
  std::vector<double> weights;  // q_j
  std::vector<std::size_t> membership;
  std::vector<ClusterCenter> centers;

  std::size_t cluster_count() const { return centers.size(); }
  std::vector<std::size_t> cluster_sizes() const;
  std::size_t nonempty_count() const;
};

/// How mixture weights enter the observed-data likelihood.
enum class WeightMode {
  renormalized,  // restrict to clusters with members, renormalize weights
  raw,           // all clusters with their stick-breaking weights
};

std::string to_string(WeightMode mode);
WeightMode weight_mode_from_string(const std::string& s);

struct FitConfig {
  std::size_t max_clusters = 80;
  std::size_t iterations = 20000;
  double burnin_fraction = 0.5;
  std::size_t thin = 10;
  double step_log_ws = 0.08;
  double step_log_wt = 0.08;
  double concentration_shape = 1.0;  // hyperprior Gamma(a, c) on b_u
  double concentration_rate = 1.0;
  double ws_min = 100.0;
  double ws_max = 1000.0;
  double wt_max = 1.0;
  double init_ws = 300.0;
  double init_wt = 0.2;
  std::uint64_t seed = 1;
  std::size_t pixel_rows = 50;
  std::size_t pixel_cols = 50;
  std::size_t mc_points = 1000;
  WeightMode weight_mode = WeightMode::renormalized;
  std::size_t threads = 1;

  /// Throws InputError describing the first inconsistency.
  void validate() const;
  std::size_t burnin() const;
  std::size_t retained() const { return (iterations - burnin()) / thin; }
};

/// q_1 = U_1, q_j = U_j prod_{m<j}(1 - U_m); the final stick is treated as 1
/// so the weights sum to one.
std::vector<double> stick_breaking(std::span<const double> sticks);

/**
 * @brief Everything the updates need besides the chain state.
 *
 * Holds a small cache of network corrections per pixel for the two most
 * recent bandwidths (current and proposed). The cache is not thread-safe;
 * one context serves one chain.
 */
class ModelContext {
 public:
  ModelContext(const LinearNetwork& net, const PixelGrid& pixels, const SpatialKernel& kernel,
               std::vector<Event> events, FitConfig config);

  const LinearNetwork& network() const { return *net_; }
  const PixelGrid& pixels() const { return *pixels_; }
  const SpatialKernel& kernel() const { return *kernel_; }
  const std::vector<Event>& events() const { return events_; }
  const FitConfig& config() const { return config_; }
  std::size_t event_count() const { return events_.size(); }

  void replace_events(std::vector<Event> events) { events_ = std::move(events); }

  /// log c_L at a pixel center; -inf when the correction vanishes.
  double log_correction(std::size_t pixel, double w_s) const;

  ClusterCenter make_center(std::size_t pixel, double t) const;

 private:
  struct CacheSlot {
    double w_s = -1.0;
    std::vector<double> values;
    std::uint64_t stamp = 0;
  };

  const LinearNetwork* net_;
  const PixelGrid* pixels_;
  const SpatialKernel* kernel_;
  std::vector<Event> events_;
  FitConfig config_;
  mutable CacheSlot slots_[2];
  mutable std::uint64_t clock_ = 0;
};

/// log K_S(x_i; c_j, w_s) + log K_T(t_i; c_j^t, w_t).
double log_kernel_term(const Event& e, const ClusterCenter& c, double log_corr, double w_s, double w_t);

/// Observed-data log likelihood at the state's bandwidths.
double log_likelihood(const ChainState& state, const ModelContext& ctx);
/// Same, with bandwidths (w_s, w_t) substituted.
double log_likelihood(const ChainState& state, const ModelContext& ctx, double w_s, double w_t);

/// Per-event log-likelihood contributions; index of the first non-finite
/// one, if any, is useful for diagnostics.
std::vector<double> event_log_likelihoods(const ChainState& state, const ModelContext& ctx);

/// Normalized assignment probabilities of one event over all clusters.
/// `degenerate` is set when every term vanished and the uniform fallback
/// over positive-weight clusters was used.
std::vector<double> membership_probs(std::size_t event, const ChainState& state, const ModelContext& ctx,
                                     bool* degenerate = nullptr);

struct AcceptanceCounters {
  std::size_t theta_proposed = 0;
  std::size_t theta_accepted = 0;
  std::size_t centers_proposed = 0;
  std::size_t centers_accepted = 0;
  std::size_t degenerate_memberships = 0;

  double theta_rate() const {
    return theta_proposed ? static_cast<double>(theta_accepted) / static_cast<double>(theta_proposed) : 0.0;
  }
  double centers_rate() const {
    return centers_proposed ? static_cast<double>(centers_accepted) / static_cast<double>(centers_proposed) : 0.0;
  }
};

/// Reflects x into [lo, hi].
double reflect(double x, double lo, double hi);

/// log Metropolis-Hastings ratio for moving the bandwidths to (w_s', w_t')
/// under a symmetric random walk on their logarithms.
double theta_log_accept_ratio(const ChainState& state, const ModelContext& ctx, double ws_new, double wt_new);

void update_theta(ChainState& state, const ModelContext& ctx, Rng& rng, AcceptanceCounters& acc);
void update_memberships(ChainState& state, const ModelContext& ctx, Rng& rng, AcceptanceCounters& acc);
void update_sticks(ChainState& state, Rng& rng);
void update_concentration(ChainState& state, double shape, double rate, Rng& rng);

/// log acceptance ratio for replacing center j by `proposal`; +inf for
/// clusters without members.
double center_log_accept_ratio(const ChainState& state, const ModelContext& ctx, std::size_t j,
                               const ClusterCenter& proposal);
void update_centers(ChainState& state, const ModelContext& ctx, Rng& rng, AcceptanceCounters& acc);

/// One full sweep in the fixed order theta -> memberships -> sticks ->
/// concentration -> centers.
void mcmc_step(ChainState& state, const ModelContext& ctx, Rng& rng, AcceptanceCounters& acc);

/// Starting point: uniform memberships, prior centers, prior sticks under
/// b_u = 1, bandwidths from the config.
ChainState initial_state(const ModelContext& ctx, Rng& rng);

struct Draw {
  std::size_t iteration = 0;  // 1-based sweep number
  ChainState state;
};

struct PosteriorRun {
  FitConfig config;
  std::vector<Draw> draws;
  AcceptanceCounters acceptance;
  std::uint64_t mc_seed = 0;
};

/// Runs the sampler on a prepared context (pixels and kernel already built).
PosteriorRun run_mcmc(const ModelContext& ctx);

/// Convenience: pixelates the network, draws the integration points from
/// the config seed, and runs the sampler.
PosteriorRun run_mcmc(const std::vector<Event>& events, const LinearNetwork& net, const FitConfig& config);

/// Seed streams derived from FitConfig::seed.
std::uint64_t chain_seed(const FitConfig& config);
std::uint64_t integration_seed(const FitConfig& config);

/// Mixture density of the model at a fixed state; the basis for plug-in
/// summaries.
struct MixtureComponent {
  Vec2 center;
  double t = 0.0;
  double weight = 0.0;
};

struct MixtureDensity {
  double w_s = 0.0;
  double w_t = 0.0;
  std::vector<MixtureComponent> components;

  static MixtureDensity from_state(const ChainState& state, WeightMode mode);
  /// Spatio-temporal density per meter per unit time.
  double density(Vec2 x, double t, const SpatialKernel& kernel) const;
};

// Posterior partition summary by least-squares distance to the pairwise
// co-clustering matrix.

struct DahlResult {
  std::size_t index = 0;  // position among the supplied draws
  std::vector<std::size_t> partition;
  double loss = 0.0;
};

/// Row-major N x N matrix of co-clustering frequencies.
std::vector<double> coclustering(std::span<const std::vector<std::size_t>> memberships);
double dahl_loss(const std::vector<std::size_t>& membership, const std::vector<double>& cocluster);
DahlResult dahl_select(std::span<const std::vector<std::size_t>> memberships);
DahlResult dahl_select(const PosteriorRun& run);

}  // namespace stnet
