#pragma once

#include "vbkde/bias_oracle.hpp"
#include "vbkde/clipping.hpp"
#include "vbkde/density.hpp"
#include "vbkde/error.hpp"
#include "vbkde/estimators.hpp"
#include "vbkde/experiments.hpp"
#include "vbkde/kernels.hpp"
#include "vbkde/neighbors.hpp"
#include "vbkde/rng.hpp"
#include "vbkde/samples.hpp"
