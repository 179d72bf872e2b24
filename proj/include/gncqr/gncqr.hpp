#pragma once

#include "gncqr/almon.hpp"
#include "gncqr/backtest.hpp"
#include "gncqr/common.hpp"
#include "gncqr/config.hpp"
#include "gncqr/dataset.hpp"
#include "gncqr/evaluation.hpp"
#include "gncqr/loss.hpp"
#include "gncqr/lp.hpp"
#include "gncqr/parallel.hpp"
#include "gncqr/scaling.hpp"
#include "gncqr/solver.hpp"
#include "gncqr/synthetic.hpp"
#include "gncqr/tuning.hpp"
