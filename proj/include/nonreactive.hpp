#pragma once

#include "nonreactive/baselines.hpp"
#include "nonreactive/concentration.hpp"
#include "nonreactive/core.hpp"
#include "nonreactive/covariance.hpp"
#include "nonreactive/environments.hpp"
#include "nonreactive/estimator.hpp"
#include "nonreactive/harness.hpp"
#include "nonreactive/planner.hpp"
#include "nonreactive/sampler.hpp"
#include "nonreactive/serialization.hpp"
