#pragma once

#include "errors.hpp"
#include "expr.hpp"
#include "filter_bank.hpp"
#include "grid.hpp"
#include "io.hpp"
#include "lyapunov.hpp"
#include "moment_space.hpp"
#include "oracle.hpp"
#include "solver.hpp"
#include "spectra.hpp"
