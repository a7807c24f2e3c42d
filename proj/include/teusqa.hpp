#pragma once

#include "teusqa/common.hpp"
#include "teusqa/config.hpp"
#include "teusqa/encoding.hpp"
#include "teusqa/estimator.hpp"
#include "teusqa/fisher.hpp"
#include "teusqa/io.hpp"
#include "teusqa/montecarlo.hpp"
#include "teusqa/parallel.hpp"
#include "teusqa/patterns.hpp"
#include "teusqa/phantom.hpp"
#include "teusqa/pipeline.hpp"
#include "teusqa/rng.hpp"
#include "teusqa/signal_model.hpp"
