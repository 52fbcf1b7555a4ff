#pragma once

// Convenience umbrella; every public header of the library.

#include "gopnet/data.hpp"
#include "gopnet/errors.hpp"
#include "gopnet/matrix.hpp"
#include "gopnet/metrics.hpp"
#include "gopnet/model_io.hpp"
#include "gopnet/network.hpp"
#include "gopnet/operators.hpp"
#include "gopnet/progression.hpp"
#include "gopnet/rng.hpp"
#include "gopnet/solver.hpp"
#include "gopnet/training.hpp"
#include "gopnet/verify.hpp"
