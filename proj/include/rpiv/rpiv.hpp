#pragma once

// Umbrella header for the rpiv library.

#include "rpiv/csv.hpp"
#include "rpiv/dataset.hpp"
#include "rpiv/error.hpp"
#include "rpiv/forest.hpp"
#include "rpiv/jtest.hpp"
#include "rpiv/linear_iv.hpp"
#include "rpiv/normal.hpp"
#include "rpiv/parallel.hpp"
#include "rpiv/rng.hpp"
#include "rpiv/rp_test.hpp"
#include "rpiv/simulation.hpp"
#include "rpiv/weight_learner.hpp"
