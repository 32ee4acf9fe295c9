#pragma once

#include "epibias/cfr.hpp"
#include "epibias/error.hpp"
#include "epibias/estimators.hpp"
#include "epibias/exposures.hpp"
#include "epibias/gamma.hpp"
#include "epibias/growth.hpp"
#include "epibias/io.hpp"
#include "epibias/numerics.hpp"
#include "epibias/outbreak.hpp"
#include "epibias/random.hpp"
#include "epibias/reports.hpp"
#include "epibias/summary.hpp"
#include "epibias/tracing.hpp"
