#pragma once

#include "lattice_model.hpp"
#include "rng.hpp"
#include "stochastic_forcing.hpp"
#include "empirical_measure.hpp"
#include "parallel.hpp"
#include "integrator.hpp"
#include "lp_simplex.hpp"
#include "transport.hpp"
#include "measure_lab.hpp"
#include "statistics.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "experiments.hpp"
