// Copyright 2026 The ope-mix Authors.
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

#ifndef OPEMIX_OPEMIX_HPP
#define OPEMIX_OPEMIX_HPP

#include <opemix/errors.hpp>
#include <opemix/linalg.hpp>
#include <opemix/core.hpp>
#include <opemix/io.hpp>
#include <opemix/estimators.hpp>
#include <opemix/variance.hpp>
#include <opemix/mixture.hpp>
#include <opemix/direct_method.hpp>
#include <opemix/oracle.hpp>
#include <opemix/recsim.hpp>
#include <opemix/bench.hpp>

#endif  // OPEMIX_OPEMIX_HPP
