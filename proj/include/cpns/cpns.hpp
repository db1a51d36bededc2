// ============================================================================
// cpns.hpp -- umbrella header for the cpns library
// ============================================================================
#pragma once
#include "cpns/errors.hpp"
#include "cpns/special_functions.hpp"
#include "cpns/quadrature.hpp"
#include "cpns/channel.hpp"
#include "cpns/pmf.hpp"
#include "cpns/cpns_dist.hpp"
#include "cpns/highrate.hpp"
#include "cpns/detector.hpp"
#include "cpns/simulate.hpp"
