/**
 * @file assess.hpp
 * @brief Model assessment: fitted versus observed event proportions on
 * space-time cubes.
 *
 * The fitted mixture is integrated over a fine subgrid restricted to the
 * network, then aggregated onto a coarse grid where it is compared with the
 * empirical proportions of events.
 */

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "stnet/kernels.hpp"
#include "stnet/model.hpp"
#include "stnet/network.hpp"

namespace stnet {

struct GridSpec {
  std::size_t sub_x = 200;
  std::size_t sub_y = 200;
  std::size_t sub_t = 10;
  std::size_t coarse_x = 5;
  std::size_t coarse_y = 5;
  std::size_t coarse_t = 10;

  void validate() const;
};

class AssessmentGrid {
 public:
  AssessmentGrid(const LinearNetwork& net, GridSpec spec);

  const GridSpec& spec() const { return spec_; }
  const GridGeometry& subgrid() const { return sub_; }
  const GridGeometry& coarse() const { return coarse_; }
  const std::vector<CellPiece>& pieces() const { return pieces_; }
  const LinearNetwork& network() const { return *net_; }

  std::size_t coarse_cell_count() const { return spec_.coarse_x * spec_.coarse_y * spec_.coarse_t; }
  std::size_t coarse_index(std::size_t ix, std::size_t iy, std::size_t it) const {
    return (it * spec_.coarse_y + iy) * spec_.coarse_x + ix;
  }
  /// Coarse spatial cell (row * coarse_x + col) of a spatial subcell.
  std::size_t coarse_of_subcell(std::size_t subcell) const { return sub_to_coarse_[subcell]; }
  /// Coarse time slab of a sub time slab.
  std::size_t coarse_slab(std::size_t sub_slab) const;
  /// Network length inside each coarse spatial cell.
  const std::vector<double>& coarse_length() const { return coarse_length_; }

  std::size_t coarse_index_of(const Event& e) const;

 private:
  const LinearNetwork* net_;
  GridSpec spec_;
  GridGeometry sub_;
  GridGeometry coarse_;
  std::vector<CellPiece> pieces_;
  std::vector<std::size_t> sub_to_coarse_;
  std::vector<double> coarse_length_;
};

/// Mixture mass in every (spatial subcell, sub time slab), laid out as
/// slab * (sub_x * sub_y) + subcell. Unnormalized.
std::vector<double> subcell_masses(const MixtureDensity& mix, const SpatialKernel& kernel,
                                   const AssessmentGrid& grid);

/// Sums subcell masses into coarse cells (coarse_index layout).
std::vector<double> aggregate_to_coarse(const std::vector<double>& sub_masses, const AssessmentGrid& grid);

/// Normalized theoretical proportions per coarse cell for one mixture.
std::vector<double> theoretical_props(const MixtureDensity& mix, const SpatialKernel& kernel,
                                      const AssessmentGrid& grid);

/// Average of per-draw theoretical proportions across the posterior.
std::vector<double> theoretical_props_averaged(const PosteriorRun& run, const SpatialKernel& kernel,
                                               const AssessmentGrid& grid);

/// Posterior-mean bandwidths combined with the centers and weights of draw
/// `draw_index` (usually the Dahl-selected one).
MixtureDensity plug_in_mixture(const PosteriorRun& run, std::size_t draw_index);

/// Fraction of events per coarse cell.
std::vector<double> observed_props(std::span<const Event> events, const AssessmentGrid& grid);

struct CellRow {
  std::size_t ix = 0;
  std::size_t iy = 0;
  std::size_t it = 0;
  double p_theory = 0.0;
  double p_obs = 0.0;
};

/// Rows for coarse cells that contain network or events.
struct CellTable {
  std::vector<CellRow> rows;
};

CellTable make_cell_table(const AssessmentGrid& grid, const std::vector<double>& theory,
                          const std::vector<double>& observed);

struct ScatterSummary {
  std::optional<double> correlation;  // absent with < 3 nonzero cells or no variance
  double rmse = 0.0;
  std::size_t cells = 0;
};

ScatterSummary assess_scatter(const CellTable& table);

}  // namespace stnet
