// Copyright 2026 The TokenMoE Authors. All Rights Reserved.
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

#ifndef TOKMOE_TYPES_HPP_
#define TOKMOE_TYPES_HPP_

#include <cstdint>

namespace tokmoe {

using TokenId = std::uint32_t;

// Reserved ids present in every vocabulary.
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kBosId = 2;
inline constexpr TokenId kEosId = 3;
inline constexpr TokenId kSpecialCount = 4;

// Floor applied to probabilities before taking a log.
inline constexpr double kProbFloor = 1e-12;

}  // namespace tokmoe

#endif  // TOKMOE_TYPES_HPP_
