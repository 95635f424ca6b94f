#include <doctest.h>

#include <numeric>

#include "fixtures.hpp"
#include "stnet/assess.hpp"

using namespace stnet;

namespace {

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

MixtureDensity two_components() {
  MixtureDensity mix;
  mix.w_s = 120.0;
  mix.w_t = 0.1;
  mix.components = {{{200, 200}, 0.3, 0.6}, {{700, 500}, 0.7, 0.4}};
  return mix;
}

}  // namespace

TEST_CASE("grid spec validation") {
  GridSpec g;
  CHECK_NOTHROW(g.validate());
  g.coarse_x = 300;
  CHECK_THROWS_AS(g.validate(), InputError);
  GridSpec z;
  z.sub_t = 0;
  CHECK_THROWS_AS(z.validate(), InputError);
}

TEST_CASE("theoretical proportions sum to one and aggregation keeps mass") {
  const auto net = fixture::grid(10, 100.0);
  const auto kernel = SpatialKernel::monte_carlo(net, {1000, 2});
  const AssessmentGrid grid(net, {100, 100, 10, 5, 5, 5});
  const auto mix = two_components();
  const auto sub = subcell_masses(mix, kernel, grid);
  const auto coarse = aggregate_to_coarse(sub, grid);
  CHECK(sum(coarse) == doctest::Approx(sum(sub)).epsilon(1e-12));
  CHECK(sum(theoretical_props(mix, kernel, grid)) == doctest::Approx(1.0).epsilon(1e-12));
  // Total mass is the network integral of the corrected kernel times the
  // temporal mass inside [0, 1].
  const double expected = 0.6 * temporal_mass(0, 1, 0.3, 0.1) + 0.4 * temporal_mass(0, 1, 0.7, 0.1);
  CHECK(sum(sub) == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("coarse lengths partition the network") {
  const auto net = fixture::grid(10, 100.0);
  const AssessmentGrid grid(net, {50, 50, 4, 5, 5, 2});
  CHECK(sum(grid.coarse_length()) == doctest::Approx(net.total_length()));
  double pieces = 0.0;
  for (const auto& p : grid.pieces()) pieces += p.length;
  CHECK(pieces == doctest::Approx(net.total_length()));
}

TEST_CASE("concentrated mixture puts its mass in one cell") {
  const auto net = fixture::grid(10, 100.0);
  const auto kernel = SpatialKernel::monte_carlo(net, {1000, 2});
  const AssessmentGrid grid(net, {100, 100, 10, 5, 5, 5});
  MixtureDensity mix;
  mix.w_s = 5.0;
  mix.w_t = 0.005;
  // Center of coarse spatial cell (1, 2) and temporal slab 3.
  mix.components = {{{300, 500}, 0.7, 1.0}};
  const auto p = theoretical_props(mix, kernel, grid);
  CHECK(p[grid.coarse_index(1, 2, 3)] > 0.999);
}

TEST_CASE("flat mixture gives proportions proportional to length times duration") {
  const auto net = fixture::from_coords({{0, 0, 1000, 0}, {0, 0, 0, 1000}, {0, 1000, 400, 1000}});
  const auto kernel = SpatialKernel::monte_carlo(net, {1000, 2});
  const AssessmentGrid grid(net, {40, 40, 10, 4, 4, 2});
  MixtureDensity mix;
  mix.w_s = 1e6;
  mix.w_t = 1e3;
  mix.components = {{{500, 500}, 0.5, 1.0}};
  const auto p = theoretical_props(mix, kernel, grid);
  for (std::size_t it = 0; it < 2; ++it) {
    for (std::size_t iy = 0; iy < 4; ++iy) {
      for (std::size_t ix = 0; ix < 4; ++ix) {
        const double share = grid.coarse_length()[iy * 4 + ix] / net.total_length() / 2.0;
        CHECK(p[grid.coarse_index(ix, iy, it)] == doctest::Approx(share).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("subgrid integration agrees with a refined quadrature") {
  const auto net = fixture::grid(10, 100.0);
  const auto kernel = SpatialKernel::monte_carlo(net, {1000, 4});
  const AssessmentGrid grid(net, {200, 200, 10, 5, 5, 5});
  const auto mix = two_components();
  const auto p = theoretical_props(mix, kernel, grid);

  // Independent oracle: 1 m pieces along every segment, exact time slabs.
  std::vector<double> oracle(grid.coarse_cell_count(), 0.0);
  for (std::size_t s = 0; s < net.segment_count(); ++s) {
    const double len = net.segments()[s].length;
    const auto k = static_cast<std::size_t>(len);
    for (std::size_t i = 0; i < k; ++i) {
      const Vec2 x = net.point_at(s, (static_cast<double>(i) + 0.5) / static_cast<double>(k)).xy;
      const std::size_t cell = grid.coarse().cell_of(x);
      for (const auto& c : mix.components) {
        const double spatial = kernel.density(x, c.center, mix.w_s) * len / static_cast<double>(k);
        for (std::size_t it = 0; it < 5; ++it) {
          const double lo = static_cast<double>(it) / 5.0;
          oracle[grid.coarse_index(cell % 5, cell / 5, it)] +=
              c.weight * spatial * temporal_mass(lo, lo + 0.2, c.t, mix.w_t);
        }
      }
    }
  }
  const double total = sum(oracle);
  for (std::size_t k = 0; k < oracle.size(); ++k) CHECK(std::abs(p[k] - oracle[k] / total) < 0.01);
}

TEST_CASE("observed proportions count events per cube") {
  const auto net = fixture::grid(10, 100.0);
  const AssessmentGrid grid(net, {100, 100, 10, 5, 5, 5});
  const std::vector<Event> events{{fixture::at(net, {50, 0}), 0.05, 0},
                                  {fixture::at(net, {150, 0}), 0.1, 0},
                                  {fixture::at(net, {1000, 1000}), 1.0, 0},
                                  {fixture::at(net, {500, 550}), 0.5, 0}};
  const auto p = observed_props(events, grid);
  CHECK(sum(p) == 1.0);
  CHECK(p[grid.coarse_index(0, 0, 0)] == 0.5);
  CHECK(p[grid.coarse_index(4, 4, 4)] == 0.25);
  CHECK(p[grid.coarse_index(2, 2, 2)] == 0.25);
  CHECK_THROWS_AS(observed_props({}, grid), InputError);
}

TEST_CASE("scatter summary") {
  CellTable same;
  for (double v : {0.1, 0.2, 0.3, 0.4}) same.rows.push_back({0, 0, 0, v, v});
  const auto s = assess_scatter(same);
  REQUIRE(s.correlation.has_value());
  CHECK(*s.correlation == doctest::Approx(1.0));
  CHECK(s.rmse == 0.0);

  CellTable opposite;
  opposite.rows = {{0, 0, 0, 0.5, 0.0}, {0, 0, 0, 0.0, 0.5}, {0, 0, 0, 0.5, 0.0}, {0, 0, 0, 0.0, 0.5}};
  CHECK(*assess_scatter(opposite).correlation < 0.0);

  CellTable sparse;
  sparse.rows = {{0, 0, 0, 0.5, 0.5}, {0, 0, 0, 0.5, 0.5}, {0, 0, 0, 0.0, 0.0}};
  CHECK_FALSE(assess_scatter(sparse).correlation.has_value());
}

TEST_CASE("cell table keeps cells with network or events") {
  const auto net = fixture::from_coords({{0, 0, 100, 0}, {0, 0, 0, 100}});
  const AssessmentGrid grid(net, {10, 10, 2, 2, 2, 1});
  std::vector<double> theory(4, 0.25);
  std::vector<double> obs(4, 0.25);
  theory[3] = 0.0;
  obs[3] = 0.0;
  const auto table = make_cell_table(grid, theory, obs);
  CHECK(table.rows.size() == 3);
  CHECK_THROWS_AS(make_cell_table(grid, std::vector<double>(3, 0.0), obs), InputError);
}
