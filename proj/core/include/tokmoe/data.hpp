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

#ifndef TOKMOE_DATA_HPP_
#define TOKMOE_DATA_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tokmoe/types.hpp"

namespace tokmoe {

// Delexicalized task goal: the entity placeholder a response must mention
// and the placeholders of the attributes the user asked for.
struct Goal {
  std::optional<std::string> entity;
  std::vector<std::string> requested;

  friend bool operator==(const Goal&, const Goal&) = default;
};

struct Sample {
  std::vector<std::string> context;
  std::vector<std::string> response;
  std::string intent;  // empty means unlabeled
  std::optional<Goal> goal;
  std::size_t line = 0;  // 1-based source line, 0 when generated

  friend bool operator==(const Sample& a, const Sample& b) {
    return a.context == b.context && a.response == b.response &&
           a.intent == b.intent && a.goal == b.goal;
  }
};

enum class Split { kTrain, kValid, kTest };
std::string_view split_name(Split split);

struct Corpus {
  std::vector<Sample> samples;
  Split split = Split::kTrain;
};

class Vocabulary {
 public:
  // Only the reserved tokens <PAD>, <UNK>, <BOS>, <EOS>.
  Vocabulary();
  // Token list whose first four entries are the reserved tokens.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  TokenId id(std::string_view token) const;  // UNK when absent
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  void push(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

inline constexpr std::size_t kDefaultVocabCap = 400;

// Most frequent context and response tokens, ties broken lexicographically.
Vocabulary build_vocab(const Corpus& corpus, std::size_t cap = kDefaultVocabCap);

struct EncodedSample {
  std::vector<TokenId> context;
  std::vector<TokenId> response;  // ends with EOS
  std::string intent;
};

EncodedSample encode_sample(const Vocabulary& vocab, const Sample& sample);
std::vector<EncodedSample> encode_corpus(const Vocabulary& vocab,
                                         const Corpus& corpus);
// Stops at the first EOS.
std::vector<std::string> decode_tokens(const Vocabulary& vocab,
                                       std::span<const TokenId> ids);

// One JSON object per line:
// {"context": [...], "response": [...], "intent": "hotel",
//  "goal": {"entity": "[hotel_name]", "requested": ["[value_time]"]}}
// "goal" and "goal.entity" are optional.
Corpus parse_corpus_jsonl(std::string_view text, Split split = Split::kTrain);
Corpus load_corpus_jsonl(const std::filesystem::path& path,
                         Split split = Split::kTrain);
std::string sample_to_json_line(const Sample& sample);
std::string corpus_to_jsonl(const Corpus& corpus);
void save_corpus_jsonl(const std::filesystem::path& path, const Corpus& corpus);

struct CorpusSplits {
  Corpus train;
  Corpus valid;
  Corpus test;
};

// Seeded shuffle then contiguous cut. Fractions must sum to 1.
CorpusSplits split_corpus(const Corpus& corpus, std::array<double, 3> fractions,
                          std::uint64_t seed);

// Samples grouped by intent label, in lexicographic label order.
std::map<std::string, Corpus> partition_by_intent(const Corpus& corpus);
std::vector<std::string> intent_labels(const Corpus& corpus);

// Seeded multi-intent generator. Each intent owns a set of exclusive words,
// an entity placeholder and slot placeholders; a context's first word (the
// cue) selects one of the intent's response templates and its ask words
// select which slot placeholders are appended to the response.
struct SynthSpec {
  std::size_t intents = 3;
  std::size_t shared_vocab = 17;
  std::size_t per_intent_vocab = 10;
  std::size_t samples_per_intent = 20;
  std::size_t templates_per_intent = 3;
  std::size_t slots_per_intent = 2;
  std::size_t context_min = 4;
  std::size_t context_max = 8;
  std::size_t response_min = 3;
  std::size_t response_max = 6;
  std::uint64_t seed = 7;

  void validate() const;
};

Corpus generate_synthetic_corpus(const SynthSpec& spec);
std::string synthetic_intent_name(std::size_t index);

}  // namespace tokmoe

#endif  // TOKMOE_DATA_HPP_
