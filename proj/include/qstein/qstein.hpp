#pragma once

// Umbrella header: bounded-support q-Gaussian distributions, exact samplers,
// identity-based gradient estimators, verification oracles, and the
// experiment harness.

#include "qstein/estimators.hpp"
#include "qstein/experiments.hpp"
#include "qstein/io.hpp"
#include "qstein/oracle.hpp"
#include "qstein/parallel.hpp"
#include "qstein/qgauss.hpp"
#include "qstein/rng.hpp"
#include "qstein/sampler.hpp"
#include "qstein/special.hpp"
#include "qstein/testfn.hpp"
