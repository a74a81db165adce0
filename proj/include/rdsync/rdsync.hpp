#pragma once

#include "rdsync/error.hpp"
#include "rdsync/mutual_info.hpp"
#include "rdsync/random.hpp"
#include "rdsync/rds_model.hpp"
#include "rdsync/simulate.hpp"
#include "rdsync/stats.hpp"
#include "rdsync/stochastic_core.hpp"
#include "rdsync/two_point.hpp"
