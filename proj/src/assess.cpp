#include "stnet/assess.hpp"

#include <cmath>

#include <fmt/format.h>

namespace stnet {

void GridSpec::validate() const {
  if (sub_x == 0 || sub_y == 0 || sub_t == 0 || coarse_x == 0 || coarse_y == 0 || coarse_t == 0) {
    throw InputError("assessment grid dimensions must be positive");
  }
  if (coarse_x > sub_x || coarse_y > sub_y || coarse_t > sub_t) {
    throw InputError("coarse grid must not be finer than the subgrid");
  }
}

AssessmentGrid::AssessmentGrid(const LinearNetwork& net, GridSpec spec)
    : net_(&net), spec_(spec) {
  spec_.validate();
  const Window w = grid_window(net);
  sub_ = GridGeometry(w, spec_.sub_y, spec_.sub_x);
  coarse_ = GridGeometry(w, spec_.coarse_y, spec_.coarse_x);
  pieces_ = clip_to_grid(net, sub_);

  sub_to_coarse_.resize(spec_.sub_x * spec_.sub_y);
  for (std::size_t r = 0; r < spec_.sub_y; ++r) {
    for (std::size_t c = 0; c < spec_.sub_x; ++c) {
      const Vec2 mid{w.xmin + (static_cast<double>(c) + 0.5) * sub_.cell_width(),
                     w.ymin + (static_cast<double>(r) + 0.5) * sub_.cell_height()};
      sub_to_coarse_[r * spec_.sub_x + c] = coarse_.cell_of(mid);
    }
  }
  coarse_length_.assign(spec_.coarse_x * spec_.coarse_y, 0.0);
  for (const auto& p : pieces_) coarse_length_[sub_to_coarse_[p.cell]] += p.length;
}

std::size_t AssessmentGrid::coarse_slab(std::size_t sub_slab) const {
  const double mid = (static_cast<double>(sub_slab) + 0.5) / static_cast<double>(spec_.sub_t);
  return std::min(static_cast<std::size_t>(mid * static_cast<double>(spec_.coarse_t)), spec_.coarse_t - 1);
}

std::size_t AssessmentGrid::coarse_index_of(const Event& e) const {
  const std::size_t cell = coarse_.cell_of(e.location.xy);
  const double t = std::clamp(e.t, 0.0, 1.0);
  const std::size_t slab = std::min(static_cast<std::size_t>(t * static_cast<double>(spec_.coarse_t)),
                                    spec_.coarse_t - 1);
  return coarse_index(cell % spec_.coarse_x, cell / spec_.coarse_x, slab);
}

std::vector<double> subcell_masses(const MixtureDensity& mix, const SpatialKernel& kernel,
                                   const AssessmentGrid& grid) {
  const auto& spec = grid.spec();
  const std::size_t plane = spec.sub_x * spec.sub_y;
  std::vector<double> mass(plane * spec.sub_t, 0.0);
  const auto& net = grid.network();

  for (const auto& comp : mix.components) {
    const auto corr = kernel.try_log_correction(comp.center, mix.w_s);
    if (!corr) continue;
    std::vector<double> slab(spec.sub_t);
    for (std::size_t k = 0; k < spec.sub_t; ++k) {
      const double lo = static_cast<double>(k) / static_cast<double>(spec.sub_t);
      const double hi = static_cast<double>(k + 1) / static_cast<double>(spec.sub_t);
      slab[k] = comp.weight * temporal_mass(lo, hi, comp.t, mix.w_t);
    }
    for (const auto& p : grid.pieces()) {
      // Midpoint rule on each in-cell piece.
      const Vec2 mid = net.point_at(p.segment, 0.5 * (p.offset_lo + p.offset_hi)).xy;
      const double spatial = std::exp(log_planar_gaussian(mid, comp.center, mix.w_s) - *corr) * p.length;
      if (spatial == 0.0) continue;
      for (std::size_t k = 0; k < spec.sub_t; ++k) mass[k * plane + p.cell] += spatial * slab[k];
    }
  }
  return mass;
}

std::vector<double> aggregate_to_coarse(const std::vector<double>& sub_masses, const AssessmentGrid& grid) {
  const auto& spec = grid.spec();
  const std::size_t plane = spec.sub_x * spec.sub_y;
  std::vector<double> out(grid.coarse_cell_count(), 0.0);
  for (std::size_t k = 0; k < spec.sub_t; ++k) {
    const std::size_t slab = grid.coarse_slab(k);
    for (std::size_t s = 0; s < plane; ++s) {
      const double v = sub_masses[k * plane + s];
      if (v == 0.0) continue;
      const std::size_t cell = grid.coarse_of_subcell(s);
      out[grid.coarse_index(cell % spec.coarse_x, cell / spec.coarse_x, slab)] += v;
    }
  }
  return out;
}

std::vector<double> theoretical_props(const MixtureDensity& mix, const SpatialKernel& kernel,
                                      const AssessmentGrid& grid) {
  auto coarse = aggregate_to_coarse(subcell_masses(mix, kernel, grid), grid);
  double total = 0.0;
  for (double v : coarse) total += v;
  if (!(total > 0.0)) throw NumericalError("fitted mixture has no mass on the assessment grid");
  for (double& v : coarse) v /= total;
  return coarse;
}

std::vector<double> theoretical_props_averaged(const PosteriorRun& run, const SpatialKernel& kernel,
                                               const AssessmentGrid& grid) {
  if (run.draws.empty()) throw InputError("posterior run has no retained draws");
  std::vector<double> acc(grid.coarse_cell_count(), 0.0);
  for (const auto& d : run.draws) {
    const auto p = theoretical_props(MixtureDensity::from_state(d.state, run.config.weight_mode), kernel, grid);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p[i];
  }
  for (double& v : acc) v /= static_cast<double>(run.draws.size());
  return acc;
}

MixtureDensity plug_in_mixture(const PosteriorRun& run, std::size_t draw_index) {
  if (run.draws.empty()) throw InputError("posterior run has no retained draws");
  double ws = 0.0;
  double wt = 0.0;
  for (const auto& d : run.draws) {
    ws += d.state.w_s;
    wt += d.state.w_t;
  }
  auto mix = MixtureDensity::from_state(run.draws.at(draw_index).state, run.config.weight_mode);
  mix.w_s = ws / static_cast<double>(run.draws.size());
  mix.w_t = wt / static_cast<double>(run.draws.size());
  return mix;
}

std::vector<double> observed_props(std::span<const Event> events, const AssessmentGrid& grid) {
  if (events.empty()) throw InputError("observed proportions need at least one event");
  std::vector<std::size_t> counts(grid.coarse_cell_count(), 0);
  for (const auto& e : events) ++counts[grid.coarse_index_of(e)];
  std::vector<double> out(counts.size());
  const double n = static_cast<double>(events.size());
  for (std::size_t i = 0; i < counts.size(); ++i) out[i] = static_cast<double>(counts[i]) / n;
  return out;
}

CellTable make_cell_table(const AssessmentGrid& grid, const std::vector<double>& theory,
                          const std::vector<double>& observed) {
  const auto& spec = grid.spec();
  if (theory.size() != grid.coarse_cell_count() || observed.size() != grid.coarse_cell_count()) {
    throw InputError("proportion vectors do not match the coarse grid");
  }
  CellTable table;
  for (std::size_t it = 0; it < spec.coarse_t; ++it) {
    for (std::size_t iy = 0; iy < spec.coarse_y; ++iy) {
      for (std::size_t ix = 0; ix < spec.coarse_x; ++ix) {
        const std::size_t k = grid.coarse_index(ix, iy, it);
        const bool on_network = grid.coarse_length()[iy * spec.coarse_x + ix] > 0.0;
        if (!on_network && observed[k] == 0.0 && theory[k] == 0.0) continue;
        table.rows.push_back({ix, iy, it, theory[k], observed[k]});
      }
    }
  }
  return table;
}

ScatterSummary assess_scatter(const CellTable& table) {
  ScatterSummary s;
  s.cells = table.rows.size();
  if (table.rows.empty()) return s;
  double mt = 0.0;
  double mo = 0.0;
  double sq = 0.0;
  std::size_t nonzero = 0;
  for (const auto& r : table.rows) {
    mt += r.p_theory;
    mo += r.p_obs;
    sq += (r.p_theory - r.p_obs) * (r.p_theory - r.p_obs);
    nonzero += (r.p_theory != 0.0 || r.p_obs != 0.0);
  }
  const double n = static_cast<double>(table.rows.size());
  s.rmse = std::sqrt(sq / n);
  if (nonzero < 3) return s;
  mt /= n;
  mo /= n;
  double stt = 0.0;
  double soo = 0.0;
  double sto = 0.0;
  for (const auto& r : table.rows) {
    stt += (r.p_theory - mt) * (r.p_theory - mt);
    soo += (r.p_obs - mo) * (r.p_obs - mo);
    sto += (r.p_theory - mt) * (r.p_obs - mo);
  }
  if (stt > 0.0 && soo > 0.0) s.correlation = sto / std::sqrt(stt * soo);
  return s;
}

}  // namespace stnet
