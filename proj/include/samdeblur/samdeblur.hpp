// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "samdeblur/autodiff.hpp"
#include "samdeblur/errors.hpp"
#include "samdeblur/geometry.hpp"
#include "samdeblur/image_io.hpp"
#include "samdeblur/map_unit.hpp"
#include "samdeblur/mask.hpp"
#include "samdeblur/metrics.hpp"
#include "samdeblur/net.hpp"
#include "samdeblur/optim.hpp"
#include "samdeblur/rng.hpp"
#include "samdeblur/synth.hpp"
#include "samdeblur/tensor.hpp"
#include "samdeblur/train.hpp"
