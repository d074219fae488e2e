#pragma once

#include "homog/cell_solver.hpp"
#include "homog/config.hpp"
#include "homog/corrector.hpp"
#include "homog/elliptic_solver.hpp"
#include "homog/harness.hpp"
#include "homog/report.hpp"
#include "homog/smoothing.hpp"
#include "homog/verify.hpp"
