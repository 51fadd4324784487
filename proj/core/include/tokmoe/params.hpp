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

#ifndef TOKMOE_PARAMS_HPP_
#define TOKMOE_PARAMS_HPP_

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tokmoe/tensor.hpp"

namespace tokmoe {

// A learnable tensor with its accumulated gradient.
struct ParamSlot {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Index of a slot inside a ParamStore. Indices stay valid when the store is
// copied, which keeps model structs trivially copyable.
using SlotId = std::size_t;

class ParamStore {
 public:
  // Registers a zero-initialized slot. Names must be unique.
  SlotId add(std::string name, Shape shape);

  std::optional<SlotId> find(std::string_view name) const;
  SlotId at(std::string_view name) const;

  ParamSlot& slot(SlotId id) { return slots_[id]; }
  const ParamSlot& slot(SlotId id) const { return slots_[id]; }
  Tensor& value(SlotId id) { return slots_[id].value; }
  const Tensor& value(SlotId id) const { return slots_[id].value; }
  Tensor& grad(SlotId id) { return slots_[id].grad; }

  std::size_t size() const noexcept { return slots_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return slots_.begin(); }
  auto end() { return slots_.end(); }
  auto begin() const { return slots_.begin(); }
  auto end() const { return slots_.end(); }

  void zero_grad();
  bool all_finite() const;

 private:
  std::vector<ParamSlot> slots_;
  std::unordered_map<std::string, SlotId> index_;
};

}  // namespace tokmoe

#endif  // TOKMOE_PARAMS_HPP_
