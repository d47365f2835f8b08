// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "m3d/attention.hpp"
#include "m3d/common.hpp"
#include "m3d/config.hpp"
#include "m3d/gradcheck.hpp"
#include "m3d/graph.hpp"
#include "m3d/harness.hpp"
#include "m3d/mask.hpp"
#include "m3d/metrics.hpp"
#include "m3d/model.hpp"
#include "m3d/ops.hpp"
#include "m3d/optim.hpp"
#include "m3d/partition.hpp"
#include "m3d/rng.hpp"
#include "m3d/sbm.hpp"
#include "m3d/tensor.hpp"
#include "m3d/theory.hpp"
