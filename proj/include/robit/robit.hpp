#pragma once

// Umbrella header for the choice-model library.

#include "robit/datagen.hpp"
#include "robit/distributions.hpp"
#include "robit/error.hpp"
#include "robit/gibbs.hpp"
#include "robit/io.hpp"
#include "robit/model.hpp"
#include "robit/posterior.hpp"
#include "robit/predictive.hpp"
#include "robit/rng.hpp"
#include "robit/special_functions.hpp"
#include "robit/tail_proposals.hpp"
