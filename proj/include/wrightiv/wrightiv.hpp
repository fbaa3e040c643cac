#pragma once
// Umbrella header: pulls in the whole library.

#include "wrightiv/common.hpp"
#include "wrightiv/counterfactual.hpp"
#include "wrightiv/dag.hpp"
#include "wrightiv/gmm.hpp"
#include "wrightiv/io.hpp"
#include "wrightiv/linalg.hpp"
#include "wrightiv/montecarlo.hpp"
#include "wrightiv/optimize.hpp"
#include "wrightiv/parallel.hpp"
#include "wrightiv/partialing.hpp"
#include "wrightiv/rng.hpp"
#include "wrightiv/stats.hpp"
#include "wrightiv/structural.hpp"
#include "wrightiv/weak_id.hpp"
