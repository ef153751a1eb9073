// Copyright 2026 The asyvr Authors. All Rights Reserved.
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
// =============================================================================

#ifndef ASYVR_ASYVR_HPP
#define ASYVR_ASYVR_HPP

#include "asyvr/config.hpp"
#include "asyvr/core.hpp"
#include "asyvr/data.hpp"
#include "asyvr/dist_async.hpp"
#include "asyvr/harness.hpp"
#include "asyvr/problem.hpp"
#include "asyvr/shared_async.hpp"
#include "asyvr/theory.hpp"
#include "asyvr/trace.hpp"
#include "asyvr/vr_core.hpp"

#endif  // ASYVR_ASYVR_HPP
