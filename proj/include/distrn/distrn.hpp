#pragma once

#include "distrn/analysis.hpp"
#include "distrn/csv.hpp"
#include "distrn/epidemic.hpp"
#include "distrn/errors.hpp"
#include "distrn/normal.hpp"
#include "distrn/privacy.hpp"
#include "distrn/protocol.hpp"
#include "distrn/reproduction.hpp"
#include "distrn/rng.hpp"
#include "distrn/scenario.hpp"
