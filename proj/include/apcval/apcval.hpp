#pragma once

#include "apcval/normal.hpp"
#include "apcval/domain.hpp"
#include "apcval/estimator.hpp"
#include "apcval/planner.hpp"
#include "apcval/cost.hpp"
#include "apcval/classify.hpp"
#include "apcval/simulate.hpp"
#include "apcval/io.hpp"
#include "apcval/report.hpp"
