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

#include "tokmoe/params.hpp"

#include <algorithm>

#include "tokmoe/error.hpp"

namespace tokmoe {

SlotId ParamStore::add(std::string name, Shape shape) {
  if (index_.contains(name)) {
    throw ConfigError("duplicate parameter name '" + name + "'");
  }
  const SlotId id = slots_.size();
  Tensor value(shape);
  Tensor grad(std::move(shape));
  index_.emplace(name, id);
  slots_.push_back(ParamSlot{std::move(name), std::move(value), std::move(grad)});
  return id;
}

std::optional<SlotId> ParamStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

SlotId ParamStore::at(std::string_view name) const {
  auto id = find(name);
  if (!id) throw IndexError("no parameter named '" + std::string(name) + "'");
  return *id;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& s : slots_) n += s.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& s : slots_) s.grad.fill(0.0);
}

bool ParamStore::all_finite() const {
  return std::all_of(slots_.begin(), slots_.end(), [](const ParamSlot& s) {
    return s.value.all_finite() && s.grad.all_finite();
  });
}

}  // namespace tokmoe
