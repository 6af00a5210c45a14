#pragma once

// Everything at once. Include the module headers directly to keep builds lean.
#include "penprior/convergence_rates.hpp"
#include "penprior/divergence.hpp"
#include "penprior/json_io.hpp"
#include "penprior/lambda_planner.hpp"
#include "penprior/prior_engine.hpp"
#include "penprior/pruning_lab.hpp"
