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

#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>

namespace prefillsim::detail {

__extension__ typedef unsigned __int128 u128;

inline std::uint64_t narrow_u64(u128 v, const char* what) {
  if (v > std::numeric_limits<std::uint64_t>::max()) {
    throw std::overflow_error(std::string(what) + ": byte count exceeds 64 bits");
  }
  return static_cast<std::uint64_t>(v);
}

// Exact product of unsigned factors; throws on 64-bit overflow of the result.
inline std::uint64_t checked_product(std::initializer_list<std::uint64_t> factors,
                                     const char* what) {
  u128 acc = 1;
  for (std::uint64_t f : factors) {
    if (f == 0) return 0;
  }
  for (std::uint64_t f : factors) {
    acc *= f;
    if (acc > std::numeric_limits<std::uint64_t>::max()) {
      throw std::overflow_error(std::string(what) + ": byte count exceeds 64 bits");
    }
  }
  return static_cast<std::uint64_t>(acc);
}

}  // namespace prefillsim::detail
