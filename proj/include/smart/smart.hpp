// Copyright 2026 The SMART Retrieval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Umbrella header.

#pragma once

#include "smart/adapter.hpp"
#include "smart/core_types.hpp"
#include "smart/error.hpp"
#include "smart/eval.hpp"
#include "smart/matrix.hpp"
#include "smart/parallel.hpp"
#include "smart/persist.hpp"
#include "smart/random.hpp"
#include "smart/scoring.hpp"
#include "smart/toy_bench.hpp"
