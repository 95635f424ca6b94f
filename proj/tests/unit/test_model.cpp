#include <doctest.h>

#include <numeric>

#include "fixtures.hpp"
#include "stats.hpp"
#include "stnet/model.hpp"

using namespace stnet;

namespace {

struct Toy {
  LinearNetwork net;
  PixelGrid pixels;
  SpatialKernel kernel;
  ModelContext ctx;

  Toy(std::vector<Event> events, FitConfig cfg)
      : net(fixture::grid(3, 100.0)),
        pixels(pixelate(net, 6, 6)),
        kernel(SpatialKernel::monte_carlo(net, {2000, 5})),
        ctx(net, pixels, kernel, std::move(events), cfg) {}
};

std::vector<Event> toy_events() {
  const auto net = fixture::grid(3, 100.0);
  return {{fixture::at(net, {50, 0}), 0.2, 0.2},
          {fixture::at(net, {100, 130}), 0.5, 0.5},
          {fixture::at(net, {260, 300}), 0.9, 0.9},
          {fixture::at(net, {0, 20}), 0.3, 0.3}};
}

ChainState two_cluster_state(const Toy& toy) {
  ChainState s;
  s.w_s = 150.0;
  s.w_t = 0.2;
  s.sticks = {0.3, 1.0};
  s.weights = stick_breaking(s.sticks);
  s.centers = {toy.ctx.make_center(0, 0.25), toy.ctx.make_center(toy.pixels.active_count() - 1, 0.8)};
  s.membership = {0, 0, 1, 0};
  return s;
}

// Direct evaluation of sum_i log sum_j q_j K_S K_T with the kernel's own
// correction estimate.
double oracle_loglik(const Toy& toy, const ChainState& s, const std::vector<double>& q) {
  double total = 0.0;
  for (const auto& e : toy.ctx.events()) {
    double f = 0.0;
    for (std::size_t j = 0; j < s.centers.size(); ++j) {
      const Vec2 c = s.centers[j].location.xy;
      const double corr = toy.kernel.correction(c, s.w_s).value;
      f += q[j] * planar_gaussian(e.location.xy, c, s.w_s) / corr * temporal_kernel(e.t, s.centers[j].t, s.w_t);
    }
    total += std::log(f);
  }
  return total;
}

FitConfig small_config() {
  FitConfig cfg;
  cfg.max_clusters = 5;
  cfg.iterations = 60;
  cfg.thin = 2;
  cfg.pixel_rows = 6;
  cfg.pixel_cols = 6;
  cfg.mc_points = 500;
  return cfg;
}

}  // namespace

TEST_CASE("stick breaking examples") {
  const std::vector<double> u{0.5, 0.5, 0.5};
  const auto q = stick_breaking(u);
  CHECK(q[0] == doctest::Approx(0.5));
  CHECK(q[1] == doctest::Approx(0.25));
  CHECK(q[2] == doctest::Approx(0.25));

  Rng rng(11);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> sticks(40);
  for (auto& v : sticks) v = unit(rng);
  const auto w = stick_breaking(sticks);
  CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  for (double v : w) CHECK(v >= 0.0);
}

TEST_CASE("log likelihood matches a direct evaluation") {
  FitConfig cfg;
  cfg.weight_mode = WeightMode::raw;
  const Toy toy(toy_events(), cfg);
  const auto s = two_cluster_state(toy);
  CHECK(log_likelihood(s, toy.ctx) == doctest::Approx(oracle_loglik(toy, s, {0.3, 0.7})).epsilon(1e-10));

  // Renormalized weights keep only occupied clusters.
  FitConfig rcfg;
  const Toy rtoy(toy_events(), rcfg);
  auto r = two_cluster_state(rtoy);
  r.membership = {0, 0, 0, 0};
  CHECK(log_likelihood(r, rtoy.ctx) == doctest::Approx(oracle_loglik(rtoy, r, {1.0, 0.0})).epsilon(1e-10));
  r.membership = {0, 0, 1, 0};
  CHECK(log_likelihood(r, rtoy.ctx) == doctest::Approx(oracle_loglik(rtoy, r, {0.3, 0.7})).epsilon(1e-10));
}

TEST_CASE("duplicating every event doubles the log likelihood") {
  FitConfig cfg;
  cfg.weight_mode = WeightMode::raw;
  auto events = toy_events();
  const Toy one(events, cfg);
  const auto copy = events;
  events.insert(events.end(), copy.begin(), copy.end());
  const Toy two(events, cfg);
  auto s1 = two_cluster_state(one);
  auto s2 = two_cluster_state(two);
  s2.membership = {0, 0, 1, 0, 0, 0, 1, 0};
  CHECK(log_likelihood(s2, two.ctx) == doctest::Approx(2.0 * log_likelihood(s1, one.ctx)).epsilon(1e-12));
}

TEST_CASE("membership probabilities match the normalized kernel terms") {
  const Toy toy(toy_events(), FitConfig{});
  const auto s = two_cluster_state(toy);
  for (std::size_t i = 0; i < toy.ctx.event_count(); ++i) {
    const auto& e = toy.ctx.events()[i];
    std::vector<double> raw(2);
    for (std::size_t j = 0; j < 2; ++j) {
      const Vec2 c = s.centers[j].location.xy;
      raw[j] = s.weights[j] * planar_gaussian(e.location.xy, c, s.w_s) / toy.kernel.correction(c, s.w_s).value *
               temporal_kernel(e.t, s.centers[j].t, s.w_t);
    }
    const auto p = membership_probs(i, s, toy.ctx);
    CHECK(p[0] == doctest::Approx(raw[0] / (raw[0] + raw[1])).epsilon(1e-10));
    CHECK(p[0] + p[1] == doctest::Approx(1.0));
  }
}

TEST_CASE("membership draws follow their probabilities") {
  const Toy toy(toy_events(), FitConfig{});
  auto s = two_cluster_state(toy);
  s.w_s = 400.0;
  s.w_t = 0.5;
  const auto p = membership_probs(1, s, toy.ctx);
  REQUIRE(p[0] > 0.05);
  REQUIRE(p[1] > 0.05);
  Rng rng(21);
  AcceptanceCounters acc;
  std::vector<double> counts(2, 0.0);
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    update_memberships(s, toy.ctx, rng, acc);
    counts[s.membership[1]] += 1.0;
  }
  const std::vector<double> expected{p[0] * n, p[1] * n};
  CHECK(stats::chi_square_p(counts, expected) > 0.001);
  CHECK(acc.degenerate_memberships == 0);
}

TEST_CASE("stick update from three members and b_u = 1 is Beta(4, 1)") {
  ChainState s;
  s.b_u = 1.0;
  s.sticks = {0.5, 1.0};
  s.centers.resize(2);
  s.membership = {0, 0, 0};
  Rng rng(5);
  std::vector<double> draws;
  const std::size_t n = 100000;
  draws.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    update_sticks(s, rng);
    draws.push_back(s.sticks[0]);
    CHECK(s.sticks[1] == 1.0);
  }
  const double mean = stats::mean(draws);
  const double var = 4.0 / (25.0 * 6.0);
  CHECK(std::abs(mean - 0.8) < 3.0 * std::sqrt(var / n));
  std::vector<double> sq(draws.size());
  for (std::size_t k = 0; k < n; ++k) sq[k] = draws[k] * draws[k];
  // E[U^2] = 4/6, Var[U^2] = E[U^4] - (E[U^2])^2 = 4/8 - 4/9.
  CHECK(std::abs(stats::mean(sq) - 4.0 / 6.0) < 3.0 * std::sqrt((0.5 - 4.0 / 9.0) / n));
  CHECK(stats::ks_p(draws, [](double u) { return std::pow(u, 4.0); }) > 0.001);
}

TEST_CASE("stick update moments for a general configuration") {
  ChainState s;
  s.b_u = 2.5;
  s.sticks = {0.5, 0.5, 0.5, 1.0};
  s.centers.resize(4);
  s.membership = {0, 1, 1, 3, 3, 3, 3};
  Rng rng(6);
  const std::size_t n = 100000;
  // U_j ~ Beta(1 + n_j, b_u + sum_{l > j} n_l).
  const double a[3] = {2.0, 3.0, 1.0};
  const double b[3] = {2.5 + 6.0, 2.5 + 4.0, 2.5 + 4.0};
  std::vector<std::vector<double>> draws(3);
  for (std::size_t k = 0; k < n; ++k) {
    update_sticks(s, rng);
    for (std::size_t j = 0; j < 3; ++j) draws[j].push_back(s.sticks[j]);
  }
  for (std::size_t j = 0; j < 3; ++j) {
    const double m = a[j] / (a[j] + b[j]);
    const double v = a[j] * b[j] / ((a[j] + b[j]) * (a[j] + b[j]) * (a[j] + b[j] + 1.0));
    CHECK(std::abs(stats::mean(draws[j]) - m) < 3.0 * std::sqrt(v / n));
    // Sampling sd of the variance estimate from the empirical fourth moment.
    double m4 = 0.0;
    for (double x : draws[j]) m4 += std::pow(x - m, 4.0);
    m4 /= static_cast<double>(n);
    CHECK(std::abs(stats::variance(draws[j]) - v) < 3.0 * std::sqrt((m4 - v * v) / n));
  }
  CHECK(std::accumulate(s.weights.begin(), s.weights.end(), 0.0) == doctest::Approx(1.0));
}

TEST_CASE("concentration update matches its Gamma conditional") {
  ChainState s;
  s.sticks = {0.2, 0.6, 0.05, 0.4, 1.0};
  const double shape = 1.5;
  const double rate = 0.7;
  double post_rate = rate;
  for (std::size_t j = 0; j < 4; ++j) post_rate -= std::log(1.0 - s.sticks[j]);
  const double a = 4.0 + shape;
  const double mean = a / post_rate;
  const double var = a / (post_rate * post_rate);
  Rng rng(8);
  const std::size_t n = 100000;
  std::vector<double> draws;
  draws.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    update_concentration(s, shape, rate, rng);
    draws.push_back(s.b_u);
  }
  CHECK(std::abs(stats::mean(draws) - mean) < 3.0 * std::sqrt(var / n));
  // Var of the sample variance for a Gamma: (mu4 - var^2) / n with mu4 = 3 var^2 (1 + 2 / a).
  const double mu4 = 3.0 * var * var * (1.0 + 2.0 / a);
  CHECK(std::abs(stats::variance(draws) - var) < 3.0 * std::sqrt((mu4 - var * var) / n));
}

TEST_CASE("sticks and concentration without data return the Gamma prior") {
  // Small b_u puts sticks within rounding of 1; log(1 - U) must survive that.
  ChainState s;
  s.sticks.assign(10, 0.5);
  s.sticks.back() = 1.0;
  s.centers.resize(10);
  Rng rng(5);
  std::vector<double> b;
  for (int it = 0; it < 400000; ++it) {
    update_sticks(s, rng);
    update_concentration(s, 1.0, 1.0, rng);
    if (it % 4 == 0) b.push_back(s.b_u);
  }
  const double ess = stats::effective_size(b);
  const double d = stats::ks_statistic(b, [](double x) { return 1.0 - std::exp(-x); });
  // 1.63 / sqrt(n) is the 1% KS point; the effective size stands in for n.
  CHECK(d < 1.63 / std::sqrt(ess));
}

TEST_CASE("stick draws keep log(1 - U) when U rounds to 1") {
  ChainState s;
  s.b_u = 1e-3;
  s.sticks.assign(3, 0.5);
  s.sticks.back() = 1.0;
  s.centers.resize(3);
  Rng rng(9);
  double lowest = 0.0;
  for (int k = 0; k < 200; ++k) {
    update_sticks(s, rng);
    REQUIRE(s.stick_log_rest.size() == 3);
    CHECK(s.sticks[0] < 1.0);
    CHECK(std::isfinite(s.stick_log_rest[0]));
    lowest = std::min(lowest, s.stick_log_rest[0]);
  }
  // Beta(1, 0.001): log(1 - U) is below -100 about 90% of the time.
  CHECK(lowest < -1000.0);
}

TEST_CASE("bandwidth acceptance ratio") {
  FitConfig cfg;
  cfg.weight_mode = WeightMode::raw;
  const Toy toy(toy_events(), cfg);
  const auto s = two_cluster_state(toy);
  CHECK(theta_log_accept_ratio(s, toy.ctx, s.w_s, s.w_t) == doctest::Approx(0.0));
  CHECK(theta_log_accept_ratio(s, toy.ctx, 50.0, s.w_t) == -std::numeric_limits<double>::infinity());
  CHECK(theta_log_accept_ratio(s, toy.ctx, s.w_s, 1.5) == -std::numeric_limits<double>::infinity());
  const double expected = log_likelihood(s, toy.ctx, 200.0, 0.3) - log_likelihood(s, toy.ctx) +
                          std::log(200.0 / 150.0) + std::log(0.3 / 0.2);
  CHECK(theta_log_accept_ratio(s, toy.ctx, 200.0, 0.3) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("reflection keeps proposals inside the bounds") {
  CHECK(reflect(0.5, 0.0, 1.0) == doctest::Approx(0.5));
  CHECK(reflect(1.2, 0.0, 1.0) == doctest::Approx(0.8));
  CHECK(reflect(-0.3, 0.0, 1.0) == doctest::Approx(0.3));
  CHECK(reflect(2.4, 0.0, 1.0) == doctest::Approx(0.4));
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(reflect(0.7, -inf, 0.0) == doctest::Approx(-0.7));
  CHECK(reflect(-5.0, -inf, 0.0) == doctest::Approx(-5.0));
}

TEST_CASE("center acceptance ratio") {
  const Toy toy(toy_events(), FitConfig{});
  auto s = two_cluster_state(toy);
  s.membership = {0, 0, 0, 0};
  CHECK(center_log_accept_ratio(s, toy.ctx, 1, toy.ctx.make_center(3, 0.5)) ==
        std::numeric_limits<double>::infinity());
  CHECK(center_log_accept_ratio(s, toy.ctx, 0, s.centers[0]) == doctest::Approx(0.0));

  // Moving a lone member's center onto the member's own pixel and time raises
  // the likelihood whenever the correction there is no larger.
  s.membership = {0, 1, 0, 0};
  const auto& e = toy.ctx.events()[1];
  const std::size_t own = toy.pixels.geometry().cell_of(e.location.xy);
  std::size_t idx = 0;
  for (std::size_t k = 0; k < toy.pixels.active_count(); ++k) {
    const auto& px = toy.pixels.active()[k];
    if (px.row * toy.pixels.cols() + px.col == own) idx = k;
  }
  const auto near = toy.ctx.make_center(idx, e.t);
  const double expected =
      log_kernel_term(e, near, toy.ctx.log_correction(near.pixel, s.w_s), s.w_s, s.w_t) -
      log_kernel_term(e, s.centers[1], toy.ctx.log_correction(s.centers[1].pixel, s.w_s), s.w_s, s.w_t);
  CHECK(center_log_accept_ratio(s, toy.ctx, 1, near) == doctest::Approx(expected));
  CHECK(expected > 0.0);
}

TEST_CASE("one sweep keeps the state consistent") {
  auto cfg = small_config();
  const Toy toy(toy_events(), cfg);
  Rng rng(3);
  auto s = initial_state(toy.ctx, rng);
  AcceptanceCounters acc;
  for (int k = 0; k < 50; ++k) {
    mcmc_step(s, toy.ctx, rng, acc);
    CHECK(s.sticks.back() == 1.0);
    CHECK(std::accumulate(s.weights.begin(), s.weights.end(), 0.0) == doctest::Approx(1.0));
    CHECK(s.w_s >= cfg.ws_min);
    CHECK(s.w_s <= cfg.ws_max);
    CHECK(s.w_t > 0.0);
    CHECK(s.w_t <= cfg.wt_max);
    CHECK(s.b_u > 0.0);
    for (auto g : s.membership) CHECK(g < cfg.max_clusters);
  }
  CHECK(acc.theta_proposed == 50);
  CHECK(acc.centers_proposed == 50 * cfg.max_clusters);
}

TEST_CASE("runs are deterministic given the seed") {
  const auto net = fixture::grid(3, 100.0);
  const auto events = toy_events();
  const auto cfg = small_config();
  const auto a = run_mcmc(events, net, cfg);
  const auto b = run_mcmc(events, net, cfg);
  REQUIRE(a.draws.size() == cfg.retained());
  REQUIRE(a.draws.size() == b.draws.size());
  for (std::size_t k = 0; k < a.draws.size(); ++k) {
    CHECK(a.draws[k].iteration == b.draws[k].iteration);
    CHECK(a.draws[k].state.w_s == b.draws[k].state.w_s);
    CHECK(a.draws[k].state.membership == b.draws[k].state.membership);
  }
  auto other = cfg;
  other.seed = 2;
  const auto c = run_mcmc(events, net, other);
  CHECK(c.draws.back().state.w_s != a.draws.back().state.w_s);
  CHECK(a.draws.front().iteration == 32);
}

TEST_CASE("fit configuration validation") {
  auto bad = [](auto mutate) {
    FitConfig c;
    mutate(c);
    return c;
  };
  CHECK_NOTHROW(FitConfig{}.validate());
  CHECK_THROWS_AS(bad([](FitConfig& c) { c.max_clusters = 1; }).validate(), InputError);
  CHECK_THROWS_AS(bad([](FitConfig& c) { c.iterations = 0; }).validate(), InputError);
  CHECK_THROWS_AS(bad([](FitConfig& c) { c.burnin_fraction = 1.0; }).validate(), InputError);
  CHECK_THROWS_AS(bad([](FitConfig& c) { c.thin = 0; }).validate(), InputError);
  CHECK_THROWS_AS(bad([](FitConfig& c) {
                    c.iterations = 10;
                    c.thin = 20;
                  }).validate(),
                  InputError);
  CHECK_THROWS_AS(bad([](FitConfig& c) { c.ws_min = 0.0; }).validate(), InputError);
  CHECK_THROWS_AS(bad([](FitConfig& c) { c.init_ws = 5000.0; }).validate(), InputError);
  CHECK_THROWS_AS(bad([](FitConfig& c) { c.init_wt = 0.0; }).validate(), InputError);
  CHECK_THROWS_AS(bad([](FitConfig& c) { c.concentration_rate = 0.0; }).validate(), InputError);
  CHECK_THROWS_AS(weight_mode_from_string("both"), InputError);
  CHECK(weight_mode_from_string(to_string(WeightMode::raw)) == WeightMode::raw);
  FitConfig c;
  c.iterations = 20000;
  c.thin = 10;
  CHECK(c.burnin() == 10000);
  CHECK(c.retained() == 1000);
}

TEST_CASE("mixture density from a state") {
  const Toy toy(toy_events(), FitConfig{});
  auto s = two_cluster_state(toy);
  s.membership = {1, 1, 1, 1};
  const auto renorm = MixtureDensity::from_state(s, WeightMode::renormalized);
  REQUIRE(renorm.components.size() == 1);
  CHECK(renorm.components[0].weight == doctest::Approx(1.0));
  const auto raw = MixtureDensity::from_state(s, WeightMode::raw);
  REQUIRE(raw.components.size() == 2);
  CHECK(raw.components[0].weight == doctest::Approx(0.3));
  const auto& e = toy.ctx.events()[0];
  const Vec2 c = s.centers[1].location.xy;
  CHECK(renorm.density(e.location.xy, e.t, toy.kernel) ==
        doctest::Approx(toy.kernel.density(e.location.xy, c, s.w_s) * temporal_kernel(e.t, s.centers[1].t, s.w_t)));
}
