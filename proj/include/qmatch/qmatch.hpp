#pragma once

#include "qmatch/dataset.hpp"
#include "qmatch/diagnostics.hpp"
#include "qmatch/distributions.hpp"
#include "qmatch/error.hpp"
#include "qmatch/inference.hpp"
#include "qmatch/nelder_mead.hpp"
#include "qmatch/order_statistics.hpp"
#include "qmatch/predictive.hpp"
#include "qmatch/random.hpp"
#include "qmatch/report.hpp"
#include "qmatch/simulation.hpp"
#include "qmatch/special_functions.hpp"
