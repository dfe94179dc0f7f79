/*
 * Copyright 2026 The chanprune Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Umbrella header for the library (the CLI layer lives in chanprune/cli/).

#include "chanprune/core/error.hpp"
#include "chanprune/core/parallel.hpp"
#include "chanprune/core/rng.hpp"
#include "chanprune/core/tensor.hpp"
#include "chanprune/data/dataset.hpp"
#include "chanprune/engine/conv.hpp"
#include "chanprune/engine/ops.hpp"
#include "chanprune/engine/svd.hpp"
#include "chanprune/info/allocation.hpp"
#include "chanprune/info/concentration.hpp"
#include "chanprune/model/builders.hpp"
#include "chanprune/model/checkpoint.hpp"
#include "chanprune/model/costs.hpp"
#include "chanprune/model/forward.hpp"
#include "chanprune/model/graph.hpp"
#include "chanprune/model/rewrite.hpp"
#include "chanprune/prune/criteria.hpp"
#include "chanprune/prune/schedules.hpp"
#include "chanprune/prune/trace_io.hpp"
#include "chanprune/prune/train.hpp"
#include "chanprune/shapley/game.hpp"
#include "chanprune/shapley/shapley.hpp"
