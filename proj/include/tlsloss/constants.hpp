#pragma once

namespace tlsloss::constants {

inline constexpr double planck = 6.62607015e-34;          // J s
inline constexpr double vacuum_permittivity = 8.8541878128e-12;  // F/m

}  // namespace tlsloss::constants
