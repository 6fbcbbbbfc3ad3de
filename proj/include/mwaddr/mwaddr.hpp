#pragma once

#include "analysis.hpp"
#include "config_io.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "gaussian_fit.hpp"
#include "imaging.hpp"
#include "kvdoc.hpp"
#include "least_squares.hpp"
#include "physics.hpp"
#include "planner.hpp"
#include "pulse.hpp"
#include "rng.hpp"
#include "simulation.hpp"
#include "units.hpp"
