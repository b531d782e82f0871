#pragma once

#include "fairrank/eval_core.hpp"
#include "fairrank/experiments.hpp"
#include "fairrank/irt2pl.hpp"
#include "fairrank/item_parameters.hpp"
#include "fairrank/lbfgs.hpp"
#include "fairrank/ranking_stats.hpp"
#include "fairrank/simgen.hpp"
