// Copyright 2026 The prefillsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Umbrella header.

#pragma once

#include "prefillsim/block_hash.hpp"
#include "prefillsim/block_table.hpp"
#include "prefillsim/cluster.hpp"
#include "prefillsim/comm_model.hpp"
#include "prefillsim/config.hpp"
#include "prefillsim/cost_model.hpp"
#include "prefillsim/engine_events.hpp"
#include "prefillsim/experiment.hpp"
#include "prefillsim/feasibility.hpp"
#include "prefillsim/presets.hpp"
#include "prefillsim/report.hpp"
#include "prefillsim/request.hpp"
#include "prefillsim/router.hpp"
#include "prefillsim/simulator.hpp"
#include "prefillsim/skew.hpp"
#include "prefillsim/threshold.hpp"
#include "prefillsim/timeline.hpp"
#include "prefillsim/trace_io.hpp"
#include "prefillsim/workload.hpp"
