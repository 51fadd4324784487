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

#include "tokmoe/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "tokmoe/error.hpp"

namespace tokmoe {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value,
                            std::string_view expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " +
                    std::string(key) + " (expected " + std::string(expected) + ")");
}

std::uint64_t to_u64(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
    bad_value(key, value, "a nonnegative integer");
  }
  return out;
}

std::size_t to_size(std::string_view key, std::string_view value) {
  return static_cast<std::size_t>(to_u64(key, value));
}

double to_double(std::string_view key, std::string_view value) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
    bad_value(key, value, "a number");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad_value(key, value, "true or false");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

std::string_view variant_name(Variant variant) {
  switch (variant) {
    case Variant::kBase:
      return "base";
    case Variant::kV1:
      return "V1";
    case Variant::kV2:
      return "V2";
    case Variant::kV3:
      return "V3";
  }
  return "base";
}

Variant parse_variant(std::string_view name) {
  if (name == "base" || name == "none") return Variant::kBase;
  if (name == "V1" || name == "v1") return Variant::kV1;
  if (name == "V2" || name == "v2") return Variant::kV2;
  if (name == "V3" || name == "v3") return Variant::kV3;
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected base, V1, V2, V3)");
}

VariantConfig variant_config(Variant variant) {
  switch (variant) {
    case Variant::kBase:
      return VariantConfig::baseline();
    case Variant::kV1:
      return VariantConfig::v1();
    case Variant::kV2:
      return VariantConfig::v2();
    case Variant::kV3:
      return VariantConfig::v3();
  }
  return VariantConfig::baseline();
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {
      "scheme",      "variant",     "cell",        "attention",  "experts",
      "lambda",      "hidden_size", "embedding_size", "attention_size",
      "gate_hidden", "gate_size",   "init_range",  "vocab_cap",  "alpha",
      "beta1",       "beta2",       "epsilon",     "clip",       "clip_mode",
      "l2",          "batch_size",  "seed",        "epochs",     "max_len",
      "threads",     "train",       "valid",       "test",       "output",
      "manifest"};
  return k;
}

void RunConfig::set(std::string_view key, std::string_view raw) {
  const std::string_view value = trim(raw);
  if (key == "scheme") {
    scheme = parse_scheme(value);
  } else if (key == "variant") {
    variant = parse_variant(value);
  } else if (key == "cell") {
    cell = parse_cell_kind(value);
  } else if (key == "attention") {
    attention = to_bool(key, value);
  } else if (key == "experts") {
    if (value == "auto") {
      experts.reset();
    } else {
      experts = to_size(key, value);
    }
  } else if (key == "lambda") {
    lambda = to_double(key, value);
  } else if (key == "hidden_size") {
    hidden_size = to_size(key, value);
  } else if (key == "embedding_size") {
    embedding_size = to_size(key, value);
  } else if (key == "attention_size") {
    attention_size = to_size(key, value);
  } else if (key == "gate_hidden") {
    gate_hidden = to_size(key, value);
  } else if (key == "gate_size") {
    gate_size = to_size(key, value);
  } else if (key == "init_range") {
    init_range = to_double(key, value);
  } else if (key == "vocab_cap") {
    vocab_cap = to_size(key, value);
  } else if (key == "alpha") {
    optimizer.alpha = to_double(key, value);
  } else if (key == "beta1") {
    optimizer.beta1 = to_double(key, value);
  } else if (key == "beta2") {
    optimizer.beta2 = to_double(key, value);
  } else if (key == "epsilon") {
    optimizer.epsilon = to_double(key, value);
  } else if (key == "clip") {
    optimizer.clip = to_double(key, value);
  } else if (key == "clip_mode") {
    if (value == "value") {
      optimizer.clip_mode = ClipMode::kValue;
    } else if (value == "norm") {
      optimizer.clip_mode = ClipMode::kNorm;
    } else {
      bad_value(key, value, "value or norm");
    }
  } else if (key == "l2") {
    optimizer.l2_weight = to_double(key, value);
  } else if (key == "batch_size") {
    optimizer.batch_size = to_size(key, value);
  } else if (key == "seed") {
    seed = to_u64(key, value);
  } else if (key == "epochs") {
    epochs = to_size(key, value);
  } else if (key == "max_len") {
    max_len = to_size(key, value);
  } else if (key == "threads") {
    threads = to_size(key, value);
  } else if (key == "train") {
    train_path = value;
  } else if (key == "valid") {
    valid_path = value;
  } else if (key == "test") {
    test_path = value;
  } else if (key == "output") {
    output = value;
  } else if (key == "manifest") {
    manifest = value;
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
  explicit_keys.insert(std::string(key));
}

std::string RunConfig::get(std::string_view key) const {
  if (key == "scheme") return std::string(scheme_name(scheme));
  if (key == "variant") return std::string(variant_name(variant));
  if (key == "cell") return std::string(cell_kind_name(cell));
  if (key == "attention") return attention ? "true" : "false";
  if (key == "experts") return experts ? std::to_string(*experts) : "auto";
  if (key == "lambda") {
    return lambda ? fmt_double(*lambda) : fmt_double(scheme_config().lambda_value);
  }
  if (key == "hidden_size") return std::to_string(hidden_size);
  if (key == "embedding_size") return std::to_string(embedding_size);
  if (key == "attention_size") return std::to_string(attention_size);
  if (key == "gate_hidden") return std::to_string(gate_hidden);
  if (key == "gate_size") return std::to_string(gate_size);
  if (key == "init_range") return fmt_double(init_range);
  if (key == "vocab_cap") return std::to_string(vocab_cap);
  if (key == "alpha") return fmt_double(optimizer.alpha);
  if (key == "beta1") return fmt_double(optimizer.beta1);
  if (key == "beta2") return fmt_double(optimizer.beta2);
  if (key == "epsilon") return fmt_double(optimizer.epsilon);
  if (key == "clip") return fmt_double(optimizer.clip);
  if (key == "clip_mode") return optimizer.clip_mode == ClipMode::kValue ? "value" : "norm";
  if (key == "l2") return fmt_double(optimizer.l2_weight);
  if (key == "batch_size") return std::to_string(optimizer.batch_size);
  if (key == "seed") return std::to_string(seed);
  if (key == "epochs") return std::to_string(epochs);
  if (key == "max_len") return std::to_string(max_len);
  if (key == "threads") return std::to_string(threads);
  if (key == "train") return train_path;
  if (key == "valid") return valid_path;
  if (key == "test") return test_path;
  if (key == "output") return output;
  if (key == "manifest") return manifest;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void RunConfig::resolve() {
  const VariantConfig v = variant_config(variant);
  const VariantConfig base = VariantConfig::baseline();
  const std::string vname(variant_name(variant));
  auto conflict = [&](const std::string& key) {
    throw ConfigError("variant " + vname + " conflicts with " + key + " = " + get(key));
  };
  if (v.attention_enabled != base.attention_enabled) {
    if (explicit_keys.count("attention") && attention != v.attention_enabled) {
      conflict("attention");
    }
    attention = v.attention_enabled;
  }
  if (v.cell != base.cell) {
    if (explicit_keys.count("cell") && cell != v.cell) conflict("cell");
    cell = v.cell;
  }
  if (v.hidden_size != base.hidden_size) {
    if (explicit_keys.count("hidden_size") && hidden_size != v.hidden_size) {
      conflict("hidden_size");
    }
    hidden_size = v.hidden_size;
  }

  const SchemeConfig sc = SchemeConfig::for_scheme(scheme);
  const std::string sname(scheme_name(scheme));
  if (lambda) {
    if (sc.lambda_mode == LambdaMode::kLearnable) {
      throw ConfigError("scheme " + sname + " learns lambda; remove the lambda key");
    }
    if (*lambda != sc.lambda_value) {
      throw ConfigError("scheme " + sname + " fixes lambda = " +
                        fmt_short(sc.lambda_value) + ", got " + fmt_short(*lambda));
    }
  }
  if (experts && *experts == 0 && scheme != Scheme::kS3) {
    throw ConfigError("scheme " + sname + " needs experts; experts = 0 is only valid with S3");
  }
  if (hidden_size == 0 || embedding_size == 0 || gate_hidden == 0 || gate_size == 0) {
    throw ConfigError("dimensions must be at least 1");
  }
  if (vocab_cap <= kSpecialCount) {
    throw ConfigError("vocab_cap must exceed the " + std::to_string(kSpecialCount) +
                      " special tokens");
  }
  if (!(init_range > 0.0)) throw ConfigError("init_range must be positive");
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (threads == 0) throw ConfigError("threads must be at least 1");
  optimizer.validate();
}

SchemeConfig RunConfig::scheme_config() const { return SchemeConfig::for_scheme(scheme); }

ModelConfig RunConfig::model_config(std::size_t vocab_size, std::size_t num_experts) const {
  ModelConfig mc;
  mc.vocab_size = vocab_size;
  mc.num_experts = num_experts;
  mc.mixture = scheme_config().moe_enabled;
  mc.cell = cell;
  mc.attention = attention;
  mc.embedding_size = embedding_size;
  mc.hidden_size = hidden_size;
  mc.attention_size = attention_size;
  mc.gate_hidden = gate_hidden;
  mc.gate_size = gate_size;
  mc.init_range = init_range;
  mc.seed = seed;
  mc.validate();
  return mc;
}

std::string RunConfig::manifest_path() const {
  return manifest.empty() ? output + ".manifest.json" : manifest;
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  for (const std::string& key : keys()) {
    if (key == "lambda" && scheme_config().lambda_mode == LambdaMode::kLearnable) continue;
    out << key << " = " << get(key) << '\n';
  }
  return out.str();
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("config line " + std::to_string(line_no) +
                       ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) {
      throw ParseError("config line " + std::to_string(line_no) + ": empty key");
    }
    for (const auto& kv : out) {
      if (kv.first == key) {
        throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" +
                          key + "'");
      }
    }
    out.emplace_back(key, std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  for (const auto& [key, value] : parse_key_values(text)) cfg.set(key, value);
  return cfg;
}

}  // namespace tokmoe
