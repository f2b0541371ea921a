#pragma once

#include "spatten/attention.hpp"
#include "spatten/core.hpp"
#include "spatten/progressive_quant.hpp"
#include "spatten/pruning.hpp"
#include "spatten/quant.hpp"
#include "spatten/report_io.hpp"
#include "spatten/runner.hpp"
#include "spatten/simarch.hpp"
#include "spatten/topk_engine.hpp"
#include "spatten/workloads.hpp"
