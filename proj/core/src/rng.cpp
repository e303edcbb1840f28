// Rng is header-only; this TU anchors the target.
#include "ciss/rng.hpp"
