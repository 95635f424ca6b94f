#include "stnet/model.hpp"

#include <cstdint>

namespace stnet {

std::vector<double> coclustering(std::span<const std::vector<std::size_t>> memberships) {
  if (memberships.empty()) throw InputError("co-clustering needs at least one draw");
  const std::size_t n = memberships.front().size();
  std::vector<double> d(n * n, 0.0);
  for (const auto& g : memberships) {
    if (g.size() != n) throw InputError("draws disagree on the number of events");
    for (std::size_t i = 0; i < n; ++i) {
      double* row = d.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += g[i] == g[j] ? 1.0 : 0.0;
    }
  }
  const double b = static_cast<double>(memberships.size());
  for (double& v : d) v /= b;
  return d;
}

double dahl_loss(const std::vector<std::size_t>& membership, const std::vector<double>& cocluster) {
  const std::size_t n = membership.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = cocluster.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double diff = (membership[i] == membership[j] ? 1.0 : 0.0) - row[j];
      loss += diff * diff;
    }
  }
  return loss;
}

DahlResult dahl_select(std::span<const std::vector<std::size_t>> memberships) {
  if (memberships.empty()) throw InputError("co-clustering needs at least one draw");
  const std::size_t n = memberships.front().size();
  // Integer co-clustering counts make the loss exact: B^2 * loss equals
  // sum (B * [g_i == g_j] - count_ij)^2, so ties are resolved by draw order
  // and never by rounding.
  std::vector<std::int64_t> counts(n * n, 0);
  for (const auto& g : memberships) {
    if (g.size() != n) throw InputError("draws disagree on the number of events");
    for (std::size_t i = 0; i < n; ++i) {
      std::int64_t* row = counts.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += g[i] == g[j];
    }
  }
  const auto b = static_cast<std::int64_t>(memberships.size());
  DahlResult best;
  std::int64_t best_scaled = 0;
  for (std::size_t k = 0; k < memberships.size(); ++k) {
    const auto& g = memberships[k];
    std::int64_t scaled = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t* row = counts.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const std::int64_t diff = (g[i] == g[j] ? b : 0) - row[j];
        scaled += diff * diff;
      }
    }
    if (k == 0 || scaled < best_scaled) {
      best.index = k;
      best_scaled = scaled;
    }
  }
  best.loss = static_cast<double>(best_scaled) / static_cast<double>(b * b);
  best.partition = memberships[best.index];
  return best;
}

DahlResult dahl_select(const PosteriorRun& run) {
  if (run.draws.empty()) throw InputError("posterior run has no retained draws");
  std::vector<std::vector<std::size_t>> g;
  g.reserve(run.draws.size());
  for (const auto& d : run.draws) g.push_back(d.state.membership);
  return dahl_select(g);
}

}  // namespace stnet
