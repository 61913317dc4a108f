// Copyright 2026 The sgflow Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SGFLOW_SGFLOW_HPP
#define SGFLOW_SGFLOW_HPP

#include "sgflow/analytics.hpp"
#include "sgflow/common.hpp"
#include "sgflow/config.hpp"
#include "sgflow/flow.hpp"
#include "sgflow/hash.hpp"
#include "sgflow/io.hpp"
#include "sgflow/mlp.hpp"
#include "sgflow/pt.hpp"
#include "sgflow/report.hpp"
#include "sgflow/spinglass.hpp"
#include "sgflow/trainer.hpp"

#endif  // SGFLOW_SGFLOW_HPP
