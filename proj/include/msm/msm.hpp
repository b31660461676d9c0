#pragma once

#include "msm/core.hpp"
#include "msm/estimators.hpp"
#include "msm/random.hpp"
#include "msm/resampling.hpp"
#include "msm/simgen.hpp"
#include "msm/harness.hpp"
#include "msm/config.hpp"
#include "msm/io.hpp"
