#include "stnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace stnet {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

// log q_j computed from the sticks directly, avoiding underflow of the
// running product.
std::vector<double> log_weights(std::span<const double> sticks) {
  std::vector<double> out(sticks.size());
  double remaining = 0.0;
  for (std::size_t j = 0; j < sticks.size(); ++j) {
    const bool last = j + 1 == sticks.size();
    const double u = last ? 1.0 : sticks[j];
    out[j] = std::log(u) + remaining;
    if (!last) remaining += std::log1p(-u);
  }
  return out;
}

// Mixture log-weights entering the observed-data likelihood.
std::vector<double> likelihood_log_weights(const ChainState& state, WeightMode mode) {
  auto lw = log_weights(state.sticks);
  if (mode == WeightMode::raw) return lw;
  const auto sizes = state.cluster_sizes();
  std::vector<double> kept;
  for (std::size_t j = 0; j < lw.size(); ++j) {
    if (sizes[j] > 0) kept.push_back(lw[j]);
  }
  const double norm = log_sum_exp(kept);
  for (std::size_t j = 0; j < lw.size(); ++j) lw[j] = sizes[j] > 0 ? lw[j] - norm : kNegInf;
  return lw;
}

// log of a Gamma(a, 1) draw. Small shapes go through Gamma(a + 1) * u^(1/a),
// which stays finite where the draw itself underflows.
double log_gamma_draw(double a, Rng& rng) {
  if (a >= 1.0) return std::log(std::gamma_distribution<double>(a, 1.0)(rng));
  const double g = std::gamma_distribution<double>(a + 1.0, 1.0)(rng);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return std::log(g) + std::log1p(-u) / a;
}

struct BetaDraw {
  double u;
  double log_rest;  // log(1 - u)
};

BetaDraw draw_beta(double a, double b, Rng& rng) {
  const double lx = log_gamma_draw(a, rng);
  const double ly = log_gamma_draw(b, rng);
  const double hi = std::max(lx, ly);
  const double lsum = hi + std::log(std::exp(lx - hi) + std::exp(ly - hi));
  // The stored U only feeds the weights, so clamping it to (0, 1) costs
  // nothing; log(1 - U) is kept exact for the concentration update.
  const double u = std::clamp(std::exp(lx - lsum), std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
  return {u, std::clamp(ly - lsum, std::numeric_limits<double>::lowest(), -std::numeric_limits<double>::min())};
}

}  // namespace

std::vector<std::size_t> ChainState::cluster_sizes() const {
  std::vector<std::size_t> sizes(centers.size(), 0);
  for (std::size_t g : membership) ++sizes[g];
  return sizes;
}

std::size_t ChainState::nonempty_count() const {
  const auto sizes = cluster_sizes();
  return static_cast<std::size_t>(std::count_if(sizes.begin(), sizes.end(), [](std::size_t n) { return n > 0; }));
}

std::string to_string(WeightMode mode) { return mode == WeightMode::raw ? "raw" : "renormalized"; }

WeightMode weight_mode_from_string(const std::string& s) {
  if (s == "raw") return WeightMode::raw;
  if (s == "renormalized") return WeightMode::renormalized;
  throw InputError(fmt::format("unknown weight mode '{}' (expected renormalized or raw)", s));
}

void FitConfig::validate() const {
  if (max_clusters < 2) throw InputError("max_clusters must be >= 2");
  if (iterations == 0) throw InputError("iterations must be positive");
  if (!(burnin_fraction >= 0.0 && burnin_fraction < 1.0)) throw InputError("burn-in fraction must lie in [0, 1)");
  if (thin == 0) throw InputError("thin must be positive");
  if (iterations <= burnin()) throw InputError("iterations must exceed the burn-in count");
  if (retained() == 0) throw InputError("no draws retained after burn-in and thinning");
  if (!(step_log_ws > 0.0) || !(step_log_wt > 0.0)) throw InputError("proposal steps must be positive");
  if (!(concentration_shape > 0.0) || !(concentration_rate > 0.0)) {
    throw InputError("concentration hyperprior parameters must be positive");
  }
  if (!(ws_min > 0.0 && ws_max > ws_min)) throw InputError("spatial bandwidth bounds must satisfy 0 < min < max");
  if (!(wt_max > 0.0)) throw InputError("temporal bandwidth bound must be positive");
  if (!(init_ws >= ws_min && init_ws <= ws_max)) throw InputError("initial w_s outside its prior bounds");
  if (!(init_wt > 0.0 && init_wt <= wt_max)) throw InputError("initial w_t outside its prior bounds");
  if (pixel_rows == 0 || pixel_cols == 0) throw InputError("pixel grid dimensions must be positive");
  if (mc_points == 0) throw InputError("mc_points must be positive");
}

std::size_t FitConfig::burnin() const {
  return static_cast<std::size_t>(std::floor(burnin_fraction * static_cast<double>(iterations)));
}

std::vector<double> stick_breaking(std::span<const double> sticks) {
  std::vector<double> q(sticks.size());
  double remaining = 1.0;
  for (std::size_t j = 0; j < sticks.size(); ++j) {
    const double u = j + 1 == sticks.size() ? 1.0 : sticks[j];
    q[j] = u * remaining;
    remaining *= 1.0 - u;
  }
  return q;
}

ModelContext::ModelContext(const LinearNetwork& net, const PixelGrid& pixels, const SpatialKernel& kernel,
                           std::vector<Event> events, FitConfig config)
    : net_(&net), pixels_(&pixels), kernel_(&kernel), events_(std::move(events)), config_(config) {
  if (pixels.active_count() == 0) throw InputError("pixel grid has no active cells");
}

double ModelContext::log_correction(std::size_t pixel, double w_s) const {
  CacheSlot* slot = nullptr;
  for (auto& s : slots_) {
    if (std::abs(s.w_s - w_s) <= 1e-9) slot = &s;
  }
  if (slot == nullptr) {
    slot = slots_[0].stamp <= slots_[1].stamp ? &slots_[0] : &slots_[1];
    slot->w_s = w_s;
    slot->values.assign(pixels_->active_count(), std::numeric_limits<double>::quiet_NaN());
  }
  slot->stamp = ++clock_;
  double& v = slot->values[pixel];
  if (std::isnan(v)) {
    const auto c = kernel_->try_log_correction(pixels_->active()[pixel].representative.xy, slot->w_s);
    v = c ? *c : kNegInf;
  }
  return v;
}

ClusterCenter ModelContext::make_center(std::size_t pixel, double t) const {
  return {pixel, pixels_->active().at(pixel).representative, t};
}

double log_kernel_term(const Event& e, const ClusterCenter& c, double log_corr, double w_s, double w_t) {
  return log_planar_gaussian(e.location.xy, c.location.xy, w_s) - log_corr + log_temporal_kernel(e.t, c.t, w_t);
}

namespace {

// log_kernel_term with the bandwidth constants hoisted out of the event loop.
struct KernelTerm {
  double log_norm;
  double inv_s;
  double inv_t;

  KernelTerm(double w_s, double w_t)
      : log_norm(-1.5 * kLogTwoPi - 2.0 * std::log(w_s) - std::log(w_t)),
        inv_s(1.0 / (2.0 * w_s * w_s)),
        inv_t(1.0 / (2.0 * w_t * w_t)) {}

  double operator()(const Event& e, const ClusterCenter& c, double log_corr) const {
    const double dt = e.t - c.t;
    return log_norm - log_corr - squared_distance(e.location.xy, c.location.xy) * inv_s - dt * dt * inv_t;
  }
};

std::vector<double> event_terms(const ChainState& state, const ModelContext& ctx, double w_s, double w_t) {
  const auto lw = likelihood_log_weights(state, ctx.config().weight_mode);
  const std::size_t m = state.cluster_count();
  std::vector<double> corr(m, kNegInf);
  for (std::size_t j = 0; j < m; ++j) {
    if (lw[j] > kNegInf) corr[j] = ctx.log_correction(state.centers[j].pixel, w_s);
  }
  const KernelTerm term(w_s, w_t);
  std::vector<double> out(ctx.event_count());
  parallel_for(out.size(), ctx.config().threads, [&](std::size_t i) {
    const auto& e = ctx.events()[i];
    // Streaming log-sum-exp: acc is the sum scaled by exp(-mx).
    double mx = kNegInf;
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (lw[j] == kNegInf || corr[j] == kNegInf) continue;
      const double v = lw[j] + term(e, state.centers[j], corr[j]);
      if (v > mx) {
        acc = acc * std::exp(mx - v) + 1.0;
        mx = v;
      } else {
        acc += std::exp(v - mx);
      }
    }
    out[i] = mx == kNegInf ? kNegInf : mx + std::log(acc);
  });
  return out;
}

}  // namespace

std::vector<double> event_log_likelihoods(const ChainState& state, const ModelContext& ctx) {
  return event_terms(state, ctx, state.w_s, state.w_t);
}

double log_likelihood(const ChainState& state, const ModelContext& ctx, double w_s, double w_t) {
  const auto terms = event_terms(state, ctx, w_s, w_t);
  double total = 0.0;
  for (double v : terms) total += v;
  return total;
}

double log_likelihood(const ChainState& state, const ModelContext& ctx) {
  return log_likelihood(state, ctx, state.w_s, state.w_t);
}

namespace {

void normalize_log_probs(std::vector<double>& p, std::span<const double> weights, bool* degenerate) {
  const double norm = log_sum_exp(p);
  if (norm == kNegInf || !std::isfinite(norm)) {
    std::size_t positive = 0;
    for (double q : weights) positive += q > 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] = weights[j] > 0.0 ? 1.0 / static_cast<double>(positive) : 0.0;
    }
    if (degenerate) *degenerate = true;
    return;
  }
  for (double& v : p) v = std::exp(v - norm);
  if (degenerate) *degenerate = false;
}

}  // namespace

std::vector<double> membership_probs(std::size_t event, const ChainState& state, const ModelContext& ctx,
                                     bool* degenerate) {
  const auto lw = log_weights(state.sticks);
  const auto& e = ctx.events().at(event);
  const KernelTerm term(state.w_s, state.w_t);
  std::vector<double> p(state.cluster_count());
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double corr = ctx.log_correction(state.centers[j].pixel, state.w_s);
    p[j] = corr == kNegInf ? kNegInf : lw[j] + term(e, state.centers[j], corr);
  }
  normalize_log_probs(p, state.weights, degenerate);
  return p;
}

double reflect(double x, double lo, double hi) {
  if (std::isinf(lo)) return x > hi ? hi - (x - hi) : x;
  if (std::isinf(hi)) return x < lo ? lo + (lo - x) : x;
  const double width = hi - lo;
  // Fold onto a period of 2 * width.
  double y = std::fmod(x - lo, 2.0 * width);
  if (y < 0.0) y += 2.0 * width;
  return y <= width ? lo + y : hi - (y - width);
}

double theta_log_accept_ratio(const ChainState& state, const ModelContext& ctx, double ws_new, double wt_new) {
  const auto& cfg = ctx.config();
  if (!(ws_new >= cfg.ws_min && ws_new <= cfg.ws_max && wt_new > 0.0 && wt_new <= cfg.wt_max)) return kNegInf;
  const double ll_new = log_likelihood(state, ctx, ws_new, wt_new);
  if (ll_new == kNegInf) return kNegInf;
  const double ll_cur = log_likelihood(state, ctx);
  if (ll_cur == kNegInf) return std::numeric_limits<double>::infinity();
  // Uniform priors on the natural scale; the walk is on the log scale.
  return ll_new - ll_cur + std::log(ws_new / state.w_s) + std::log(wt_new / state.w_t);
}

void update_theta(ChainState& state, const ModelContext& ctx, Rng& rng, AcceptanceCounters& acc) {
  const auto& cfg = ctx.config();
  std::normal_distribution<double> step(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double log_ws = reflect(std::log(state.w_s) + cfg.step_log_ws * step(rng), std::log(cfg.ws_min),
                                std::log(cfg.ws_max));
  const double log_wt = reflect(std::log(state.w_t) + cfg.step_log_wt * step(rng),
                                -std::numeric_limits<double>::infinity(), std::log(cfg.wt_max));
  const double ws_new = std::clamp(std::exp(log_ws), cfg.ws_min, cfg.ws_max);
  const double wt_new = std::min(std::exp(log_wt), cfg.wt_max);
  const double log_ratio = theta_log_accept_ratio(state, ctx, ws_new, wt_new);
  ++acc.theta_proposed;
  if (std::log(unit(rng)) < log_ratio) {
    state.w_s = ws_new;
    state.w_t = wt_new;
    ++acc.theta_accepted;
  }
}

void update_memberships(ChainState& state, const ModelContext& ctx, Rng& rng, AcceptanceCounters& acc) {
  const std::size_t m = state.cluster_count();
  const auto lw = log_weights(state.sticks);
  std::vector<double> corr(m);
  for (std::size_t j = 0; j < m; ++j) corr[j] = ctx.log_correction(state.centers[j].pixel, state.w_s);

  const KernelTerm term(state.w_s, state.w_t);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> p(m);
  for (std::size_t i = 0; i < ctx.event_count(); ++i) {
    const auto& e = ctx.events()[i];
    for (std::size_t j = 0; j < m; ++j) {
      p[j] = corr[j] == kNegInf ? kNegInf : lw[j] + term(e, state.centers[j], corr[j]);
    }
    bool degenerate = false;
    normalize_log_probs(p, state.weights, &degenerate);
    acc.degenerate_memberships += degenerate;
    const double u = unit(rng);
    double cum = 0.0;
    std::size_t pick = m - 1;
    for (std::size_t j = 0; j < m; ++j) {
      cum += p[j];
      if (u < cum) {
        pick = j;
        break;
      }
    }
    // Guard against rounding leaving u above the final cumulative sum.
    while (p[pick] == 0.0 && pick > 0) --pick;
    state.membership[i] = pick;
  }
}

void update_sticks(ChainState& state, Rng& rng) {
  const std::size_t m = state.cluster_count();
  const auto sizes = state.cluster_sizes();
  std::size_t above = 0;
  for (std::size_t n : sizes) above += n;
  state.stick_log_rest.assign(m, kNegInf);
  for (std::size_t j = 0; j + 1 < m; ++j) {
    above -= sizes[j];
    const auto d = draw_beta(1.0 + static_cast<double>(sizes[j]), state.b_u + static_cast<double>(above), rng);
    state.sticks[j] = d.u;
    state.stick_log_rest[j] = d.log_rest;
  }
  state.sticks[m - 1] = 1.0;
  state.weights = stick_breaking(state.sticks);
}

void update_concentration(ChainState& state, double shape, double rate, Rng& rng) {
  const std::size_t m = state.sticks.size();
  double post_rate = rate;
  const bool exact = state.stick_log_rest.size() == m;
  for (std::size_t j = 0; j + 1 < m; ++j) {
    post_rate -= exact ? state.stick_log_rest[j] : std::log1p(-state.sticks[j]);
  }
  std::gamma_distribution<double> g(static_cast<double>(m - 1) + shape, 1.0 / post_rate);
  state.b_u = std::max(g(rng), std::numeric_limits<double>::min());
}

namespace {

double members_log_kernel(const std::vector<std::size_t>& members, const ModelContext& ctx, const ClusterCenter& c,
                          double w_s, double w_t) {
  const double corr = ctx.log_correction(c.pixel, w_s);
  if (corr == kNegInf) return kNegInf;
  const KernelTerm term(w_s, w_t);
  double total = 0.0;
  for (std::size_t i : members) total += term(ctx.events()[i], c, corr);
  return total;
}

std::vector<std::vector<std::size_t>> member_lists(const ChainState& state) {
  std::vector<std::vector<std::size_t>> out(state.cluster_count());
  for (std::size_t i = 0; i < state.membership.size(); ++i) out[state.membership[i]].push_back(i);
  return out;
}

}  // namespace

double center_log_accept_ratio(const ChainState& state, const ModelContext& ctx, std::size_t j,
                               const ClusterCenter& proposal) {
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < state.membership.size(); ++i) {
    if (state.membership[i] == j) members.push_back(i);
  }
  if (members.empty()) return std::numeric_limits<double>::infinity();
  const double proposed = members_log_kernel(members, ctx, proposal, state.w_s, state.w_t);
  if (proposed == kNegInf) return kNegInf;
  const double current = members_log_kernel(members, ctx, state.centers[j], state.w_s, state.w_t);
  if (current == kNegInf) return std::numeric_limits<double>::infinity();
  return proposed - current;
}

void update_centers(ChainState& state, const ModelContext& ctx, Rng& rng, AcceptanceCounters& acc) {
  const auto members = member_lists(state);
  std::uniform_int_distribution<std::size_t> pick_pixel(0, ctx.pixels().active_count() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t j = 0; j < state.cluster_count(); ++j) {
    const std::size_t pixel = pick_pixel(rng);
    const double t = unit(rng);
    const double u = unit(rng);
    const ClusterCenter proposal = ctx.make_center(pixel, t);
    ++acc.centers_proposed;
    if (members[j].empty()) {
      state.centers[j] = proposal;
      ++acc.centers_accepted;
      continue;
    }
    const double proposed = members_log_kernel(members[j], ctx, proposal, state.w_s, state.w_t);
    const double current = members_log_kernel(members[j], ctx, state.centers[j], state.w_s, state.w_t);
    double log_ratio = proposed - current;
    if (proposed == kNegInf) log_ratio = kNegInf;
    else if (current == kNegInf) log_ratio = std::numeric_limits<double>::infinity();
    if (std::log(u) < log_ratio) {
      state.centers[j] = proposal;
      ++acc.centers_accepted;
    }
  }
}

void mcmc_step(ChainState& state, const ModelContext& ctx, Rng& rng, AcceptanceCounters& acc) {
  const auto& cfg = ctx.config();
  update_theta(state, ctx, rng, acc);
  update_memberships(state, ctx, rng, acc);
  update_sticks(state, rng);
  update_concentration(state, cfg.concentration_shape, cfg.concentration_rate, rng);
  update_centers(state, ctx, rng, acc);
}

ChainState initial_state(const ModelContext& ctx, Rng& rng) {
  const auto& cfg = ctx.config();
  const std::size_t m = cfg.max_clusters;
  ChainState s;
  s.w_s = cfg.init_ws;
  s.w_t = cfg.init_wt;
  s.b_u = 1.0;
  std::uniform_int_distribution<std::size_t> pick_cluster(0, m - 1);
  s.membership.resize(ctx.event_count());
  for (auto& g : s.membership) g = pick_cluster(rng);
  std::uniform_int_distribution<std::size_t> pick_pixel(0, ctx.pixels().active_count() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  s.centers.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t pixel = pick_pixel(rng);
    s.centers.push_back(ctx.make_center(pixel, unit(rng)));
  }
  s.sticks.resize(m);
  s.stick_log_rest.assign(m, kNegInf);
  for (std::size_t j = 0; j + 1 < m; ++j) {
    const auto d = draw_beta(1.0, s.b_u, rng);
    s.sticks[j] = d.u;
    s.stick_log_rest[j] = d.log_rest;
  }
  s.sticks[m - 1] = 1.0;
  s.weights = stick_breaking(s.sticks);
  return s;
}

std::uint64_t chain_seed(const FitConfig& config) { return derive_seed(config.seed, 0); }
std::uint64_t integration_seed(const FitConfig& config) { return derive_seed(config.seed, 1); }

PosteriorRun run_mcmc(const ModelContext& ctx) {
  const auto& cfg = ctx.config();
  cfg.validate();
  if (ctx.event_count() == 0) throw InputError("run_mcmc requires at least one event");

  Rng rng(chain_seed(cfg));
  ChainState state = initial_state(ctx, rng);
  const auto terms = event_log_likelihoods(state, ctx);
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (!std::isfinite(terms[i])) {
      throw NumericalError(fmt::format("non-finite likelihood at initialization for event {}", i));
    }
  }

  PosteriorRun run;
  run.config = cfg;
  run.mc_seed = integration_seed(cfg);
  run.draws.reserve(cfg.retained());
  const std::size_t burnin = cfg.burnin();
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    mcmc_step(state, ctx, rng, run.acceptance);
    if (it > burnin && (it - burnin) % cfg.thin == 0) run.draws.push_back({it, state});
  }
  return run;
}

PosteriorRun run_mcmc(const std::vector<Event>& events, const LinearNetwork& net, const FitConfig& config) {
  config.validate();
  const PixelGrid pixels = pixelate(net, config.pixel_rows, config.pixel_cols);
  const SpatialKernel kernel = SpatialKernel::monte_carlo(net, {config.mc_points, integration_seed(config)});
  const ModelContext ctx(net, pixels, kernel, events, config);
  return run_mcmc(ctx);
}

MixtureDensity MixtureDensity::from_state(const ChainState& state, WeightMode mode) {
  MixtureDensity d;
  d.w_s = state.w_s;
  d.w_t = state.w_t;
  const auto lw = likelihood_log_weights(state, mode);
  for (std::size_t j = 0; j < state.cluster_count(); ++j) {
    if (lw[j] == kNegInf) continue;
    d.components.push_back({state.centers[j].location.xy, state.centers[j].t, std::exp(lw[j])});
  }
  return d;
}

double MixtureDensity::density(Vec2 x, double t, const SpatialKernel& kernel) const {
  double total = 0.0;
  for (const auto& c : components) {
    const auto corr = kernel.try_log_correction(c.center, w_s);
    if (!corr) continue;
    total += c.weight * std::exp(log_planar_gaussian(x, c.center, w_s) - *corr + log_temporal_kernel(t, c.t, w_t));
  }
  return total;
}

}  // namespace stnet
