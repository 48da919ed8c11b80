#pragma once

#include "fundmm/commands.hpp"
#include "fundmm/config.hpp"
#include "fundmm/errors.hpp"
#include "fundmm/fill_calib.hpp"
#include "fundmm/funding_calib.hpp"
#include "fundmm/hjb_solver.hpp"
#include "fundmm/io.hpp"
#include "fundmm/metrics.hpp"
#include "fundmm/nelder_mead.hpp"
#include "fundmm/policies.hpp"
#include "fundmm/policy_calibration.hpp"
#include "fundmm/reports.hpp"
#include "fundmm/rng.hpp"
#include "fundmm/simulator.hpp"
#include "fundmm/stress.hpp"
#include "fundmm/synthetic.hpp"
#include "fundmm/table_io.hpp"
