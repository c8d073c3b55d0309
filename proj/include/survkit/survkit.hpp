// Umbrella header.
#pragma once

#include "survkit/cohort.hpp"
#include "survkit/common.hpp"
#include "survkit/coxph.hpp"
#include "survkit/csv.hpp"
#include "survkit/metrics.hpp"
#include "survkit/neural.hpp"
#include "survkit/selection.hpp"
#include "survkit/serialize.hpp"
#include "survkit/tuning.hpp"
