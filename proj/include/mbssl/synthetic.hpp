#pragma once
// Desk-scale cascading multi-behavior data (view -> cart -> purchase shape).

#include "mbssl/config.hpp"
#include "mbssl/graph.hpp"

namespace mbssl {

// Behavior 1 draws each user's items without replacement with probability
// proportional to exp(sharpness * <p_u, q_i>); every later behavior keeps each
// edge of the previous one with its cascade probability. Throws DataError if a
// behavior comes out empty.
MultiBehaviorGraph generate_synthetic(const SyntheticSpec& spec);

}  // namespace mbssl
