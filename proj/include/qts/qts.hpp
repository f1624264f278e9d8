#pragma once

// Umbrella header for the quantum time-scale toolkit: exact q-calculus on
// q^Z (and Z), the transform to generalized integer sequences, almost
// automorphy diagnostics, exponential dichotomies with the bounded-solution
// Green operator, and the Picard solver for semilinear delayed equations.

#include <qts/errors.hpp>
#include <qts/grid.hpp>
#include <qts/qcalc.hpp>
#include <qts/genseq.hpp>
#include <qts/autom.hpp>
#include <qts/lindyn.hpp>
#include <qts/semlin.hpp>
