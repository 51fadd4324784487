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

#ifndef TOKMOE_CONFIG_HPP_
#define TOKMOE_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tokmoe/model.hpp"
#include "tokmoe/training.hpp"

namespace tokmoe {

enum class Variant { kBase, kV1, kV2, kV3 };

std::string_view variant_name(Variant variant);
Variant parse_variant(std::string_view name);
VariantConfig variant_config(Variant variant);

// Flat `key = value` run configuration. Every default is the full-scale
// setting; desk-scale runs override the dimensions.
struct RunConfig {
  Scheme scheme = Scheme::kS4;
  Variant variant = Variant::kBase;
  CellKind cell = CellKind::kLstm;
  bool attention = true;
  std::optional<std::size_t> experts;  // unset: one per training intent
  std::optional<double> lambda;
  std::size_t hidden_size = 150;
  std::size_t embedding_size = 50;
  std::size_t attention_size = 0;
  std::size_t gate_hidden = 128;
  std::size_t gate_size = 32;
  double init_range = 0.08;
  std::size_t vocab_cap = 400;
  OptimizerConfig optimizer;
  std::uint64_t seed = 1;
  std::size_t epochs = 20;
  std::size_t max_len = 50;
  std::size_t threads = 1;
  std::string train_path;
  std::string valid_path;
  std::string test_path;
  std::string output = "tokmoe.ckpt";
  std::string manifest;  // empty: <output>.manifest.json

  // Keys assigned explicitly, by file or flag.
  std::set<std::string> explicit_keys;

  static const std::vector<std::string>& keys();

  // Throws ConfigError on an unknown key or a malformed value.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;

  // Applies the variant, then checks the scheme and variant against the
  // explicit keys.
  void resolve();
  SchemeConfig scheme_config() const;
  ModelConfig model_config(std::size_t vocab_size, std::size_t num_experts) const;
  std::string manifest_path() const;

  // Canonical snapshot, one `key = value` line per key.
  std::string to_text() const;
};

// Parses `key = value` lines. Blank lines and `#` comments are skipped.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

RunConfig parse_run_config(std::string_view text);

}  // namespace tokmoe

#endif  // TOKMOE_CONFIG_HPP_
