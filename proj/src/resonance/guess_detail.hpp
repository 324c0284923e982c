#pragma once

#include "tlsloss/resonance.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tlsloss::resonance::detail {

struct GuessReport {
  // Dip-shape estimate: minimum of |S21|, half-depth width, depth split of Qi/Qc*.
  ResonanceFit heuristic;
  // Circle-fit estimate in the inverse domain; absent when the circle fit is ill-posed.
  std::optional<ResonanceFit> refined;
  // Samples belonging to the deepest dip, [begin, end).
  std::size_t window_begin = 0;
  std::size_t window_end = 0;
  // False when the dip minimum sits on the first or last two samples.
  bool bracketed = true;
  double noise_sigma = 0.0;
  std::vector<std::string> warnings;

  const ResonanceFit& best() const { return refined ? *refined : heuristic; }
};

GuessReport analyze(const ComplexTrace& trace);

}  // namespace tlsloss::resonance::detail
