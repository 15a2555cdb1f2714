#pragma once

// Umbrella header: reflected multivalued SDE simulation, backward
// variational-inequality solving, coefficient time-averaging, and the
// convergence experiment harness.

#include "mvsde/audit.hpp"
#include "mvsde/backward.hpp"
#include "mvsde/coefficients.hpp"
#include "mvsde/common.hpp"
#include "mvsde/domain.hpp"
#include "mvsde/forward.hpp"
#include "mvsde/harness.hpp"
#include "mvsde/models.hpp"
#include "mvsde/potential.hpp"
#include "mvsde/rng.hpp"
