#pragma once

// Everything except the HTTP transport (consensus/http.hpp).
#include "consensus/aggregation.hpp"
#include "consensus/analysis.hpp"
#include "consensus/config.hpp"
#include "consensus/engine.hpp"
#include "consensus/experiment.hpp"
#include "consensus/llm.hpp"
#include "consensus/records.hpp"
#include "consensus/rng.hpp"
#include "consensus/state.hpp"
#include "consensus/strategy.hpp"
#include "consensus/topology.hpp"
