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

#include "tokmoe/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tokmoe/checkpoint.hpp"
#include "tokmoe/error.hpp"
#include "tokmoe/random.hpp"

namespace tokmoe {

using nlohmann::json;

namespace {

const std::array<std::string_view, 4> kSpecialTokens = {"<PAD>", "<UNK>",
                                                        "<BOS>", "<EOS>"};

std::vector<std::string> string_array(const json& obj, const char* key,
                                      std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw DataError("line " + std::to_string(line) + ": missing field \"" +
                    key + "\"");
  }
  if (!it->is_array()) {
    throw DataError("line " + std::to_string(line) + ": field \"" + key +
                    "\" must be an array of strings");
  }
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) {
      throw DataError("line " + std::to_string(line) + ": field \"" + key +
                      "\" must be an array of strings");
    }
    out.push_back(v.get<std::string>());
  }
  return out;
}

Sample sample_from_json(const json& obj, std::size_t line) {
  if (!obj.is_object()) {
    throw DataError("line " + std::to_string(line) + ": expected a JSON object");
  }
  Sample s;
  s.line = line;
  s.context = string_array(obj, "context", line);
  s.response = string_array(obj, "response", line);
  if (s.context.empty() || s.response.empty()) {
    throw DataError("line " + std::to_string(line) +
                    ": context and response must be nonempty");
  }
  auto intent = obj.find("intent");
  if (intent == obj.end() || !intent->is_string() ||
      intent->get<std::string>().empty()) {
    throw DataError("line " + std::to_string(line) + ": missing field \"intent\"");
  }
  s.intent = intent->get<std::string>();
  if (auto goal = obj.find("goal"); goal != obj.end() && !goal->is_null()) {
    if (!goal->is_object()) {
      throw DataError("line " + std::to_string(line) + ": \"goal\" must be an object");
    }
    Goal g;
    if (auto e = goal->find("entity"); e != goal->end() && !e->is_null()) {
      if (!e->is_string()) {
        throw DataError("line " + std::to_string(line) +
                        ": \"goal.entity\" must be a string");
      }
      g.entity = e->get<std::string>();
    }
    if (goal->contains("requested")) {
      g.requested = string_array(*goal, "requested", line);
    }
    s.goal = std::move(g);
  }
  return s;
}

json sample_json(const Sample& s) {
  json obj;
  obj["context"] = s.context;
  obj["response"] = s.response;
  obj["intent"] = s.intent;
  if (s.goal) {
    json g;
    if (s.goal->entity) g["entity"] = *s.goal->entity;
    g["requested"] = s.goal->requested;
    obj["goal"] = std::move(g);
  }
  return obj;
}

}  // namespace

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kValid:
      return "valid";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Vocabulary::Vocabulary() {
  for (auto t : kSpecialTokens) push(std::string(t));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kSpecialCount) {
    throw DataError("vocabulary must start with the reserved tokens");
  }
  for (std::size_t i = 0; i < kSpecialCount; ++i) {
    if (tokens[i] != kSpecialTokens[i]) {
      throw DataError("vocabulary entry " + std::to_string(i) + " must be " +
                      std::string(kSpecialTokens[i]));
    }
  }
  Vocabulary v;
  for (std::size_t i = kSpecialCount; i < tokens.size(); ++i) {
    if (v.find(tokens[i])) throw DataError("duplicate vocabulary token '" + tokens[i] + "'");
    v.push(std::move(tokens[i]));
  }
  return v;
}

void Vocabulary::push(std::string token) {
  ids_.emplace(token, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view token) const {
  return find(token).value_or(kUnkId);
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of size " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

Vocabulary build_vocab(const Corpus& corpus, std::size_t cap) {
  if (corpus.samples.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  if (cap < kSpecialCount) throw ConfigError("vocabulary cap below the reserved token count");
  std::unordered_map<std::string, std::size_t> counts;
  for (const Sample& s : corpus.samples) {
    for (const auto& t : s.context) ++counts[t];
    for (const auto& t : s.response) ++counts[t];
  }
  Vocabulary probe;
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (!probe.find(tok)) ranked.emplace_back(tok, n);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens(kSpecialTokens.begin(), kSpecialTokens.end());
  for (auto& [tok, n] : ranked) {
    if (tokens.size() >= cap) break;
    tokens.push_back(tok);
  }
  return Vocabulary::from_tokens(std::move(tokens));
}

EncodedSample encode_sample(const Vocabulary& vocab, const Sample& sample) {
  EncodedSample e;
  e.intent = sample.intent;
  e.context.reserve(sample.context.size());
  for (const auto& t : sample.context) e.context.push_back(vocab.id(t));
  e.response.reserve(sample.response.size() + 1);
  for (const auto& t : sample.response) e.response.push_back(vocab.id(t));
  e.response.push_back(kEosId);
  return e;
}

std::vector<EncodedSample> encode_corpus(const Vocabulary& vocab,
                                         const Corpus& corpus) {
  std::vector<EncodedSample> out;
  out.reserve(corpus.samples.size());
  for (const auto& s : corpus.samples) out.push_back(encode_sample(vocab, s));
  return out;
}

std::vector<std::string> decode_tokens(const Vocabulary& vocab,
                                       std::span<const TokenId> ids) {
  std::vector<std::string> out;
  for (TokenId id : ids) {
    if (id == kEosId) break;
    out.push_back(vocab.token(id));
  }
  return out;
}

Corpus parse_corpus_jsonl(std::string_view text, Split split) {
  Corpus corpus;
  corpus.split = split;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    corpus.samples.push_back(sample_from_json(obj, line_no));
  }
  if (split == Split::kTrain && corpus.samples.empty()) {
    throw DataError("training corpus is empty");
  }
  return corpus;
}

Corpus load_corpus_jsonl(const std::filesystem::path& path, Split split) {
  try {
    return parse_corpus_jsonl(read_file(path), split);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string sample_to_json_line(const Sample& sample) {
  return sample_json(sample).dump();
}

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus.samples) {
    out += sample_to_json_line(s);
    out += '\n';
  }
  return out;
}

void save_corpus_jsonl(const std::filesystem::path& path, const Corpus& corpus) {
  write_file_atomic(path, corpus_to_jsonl(corpus));
}

CorpusSplits split_corpus(const Corpus& corpus, std::array<double, 3> fractions,
                          std::uint64_t seed) {
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9 ||
      std::any_of(fractions.begin(), fractions.end(), [](double f) { return f < 0.0; })) {
    throw ConfigError("split fractions must be nonnegative and sum to 1");
  }
  std::vector<std::size_t> order(corpus.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const std::size_t n = order.size();
  const auto n_train = static_cast<std::size_t>(std::floor(fractions[0] * n + 0.5));
  const auto n_valid = std::min(
      n - n_train, static_cast<std::size_t>(std::floor(fractions[1] * n + 0.5)));
  CorpusSplits out;
  out.train.split = Split::kTrain;
  out.valid.split = Split::kValid;
  out.test.split = Split::kTest;
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = corpus.samples[order[i]];
    if (i < n_train) {
      out.train.samples.push_back(s);
    } else if (i < n_train + n_valid) {
      out.valid.samples.push_back(s);
    } else {
      out.test.samples.push_back(s);
    }
  }
  return out;
}

std::map<std::string, Corpus> partition_by_intent(const Corpus& corpus) {
  std::map<std::string, Corpus> parts;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const Sample& s = corpus.samples[i];
    if (s.intent.empty()) {
      throw DataError("sample " + std::to_string(i) + " has no intent label");
    }
    Corpus& part = parts[s.intent];
    part.split = corpus.split;
    part.samples.push_back(s);
  }
  return parts;
}

std::vector<std::string> intent_labels(const Corpus& corpus) {
  std::vector<std::string> labels;
  for (auto& [name, part] : partition_by_intent(corpus)) labels.push_back(name);
  return labels;
}

void SynthSpec::validate() const {
  if (intents < 2) throw ConfigError("synthetic corpus needs at least 2 intents");
  if (shared_vocab == 0 || samples_per_intent == 0 || templates_per_intent == 0) {
    throw ConfigError("synthetic corpus counts must be positive");
  }
  if (per_intent_vocab < slots_per_intent + templates_per_intent + 1) {
    throw ConfigError("per_intent_vocab must cover ask words, cue words and "
                      "at least one filler word");
  }
  if (context_min == 0 || context_min > context_max || response_min == 0 ||
      response_min > response_max) {
    throw ConfigError("invalid synthetic length ranges");
  }
  if (context_min < 1 + slots_per_intent) {
    throw ConfigError("context_min must leave room for the cue and ask words");
  }
}

std::string synthetic_intent_name(std::size_t index) {
  static const std::array<std::string_view, 8> kNames = {
      "hotel", "train", "restaurant", "taxi",
      "attraction", "booking", "police", "hospital"};
  if (index < kNames.size()) return std::string(kNames[index]);
  return "intent" + std::to_string(index);
}

Corpus generate_synthetic_corpus(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  auto in_range = [&](std::size_t lo, std::size_t hi) {
    return lo + rng.index(hi - lo + 1);
  };
  auto shared = [&]() { return "w" + std::to_string(rng.index(spec.shared_vocab)); };

  struct IntentLexicon {
    std::string name;
    std::vector<std::string> ask;
    std::vector<std::string> cue;
    std::vector<std::string> filler;
    std::string entity;
    std::vector<std::string> slots;
    std::vector<std::vector<std::string>> templates;
  };

  std::vector<IntentLexicon> lexicons(spec.intents);
  for (std::size_t l = 0; l < spec.intents; ++l) {
    IntentLexicon& lex = lexicons[l];
    lex.name = synthetic_intent_name(l);
    for (std::size_t w = 0; w < spec.per_intent_vocab; ++w) {
      std::string word = lex.name + "_" + std::to_string(w);
      if (w < spec.slots_per_intent) {
        lex.ask.push_back(std::move(word));
      } else if (w < spec.slots_per_intent + spec.templates_per_intent) {
        lex.cue.push_back(std::move(word));
      } else {
        lex.filler.push_back(std::move(word));
      }
    }
    lex.entity = "[" + lex.name + "_name]";
    for (std::size_t r = 0; r < spec.slots_per_intent; ++r) {
      lex.slots.push_back("[" + lex.name + "_slot" + std::to_string(r) + "]");
    }
    for (std::size_t t = 0; t < spec.templates_per_intent; ++t) {
      const std::size_t len = in_range(spec.response_min, spec.response_max);
      const std::size_t entity_at = rng.index(len);
      std::vector<std::string> body;
      for (std::size_t p = 0; p < len; ++p) {
        if (p == entity_at) {
          body.push_back(lex.entity);
        } else if (rng.uniform01() < 0.6) {
          body.push_back(lex.filler[rng.index(lex.filler.size())]);
        } else {
          body.push_back(shared());
        }
      }
      lex.templates.push_back(std::move(body));
    }
  }

  Corpus corpus;
  corpus.split = Split::kTrain;
  const std::size_t max_requested = std::min<std::size_t>(2, spec.slots_per_intent);
  for (std::size_t l = 0; l < spec.intents; ++l) {
    const IntentLexicon& lex = lexicons[l];
    for (std::size_t s = 0; s < spec.samples_per_intent; ++s) {
      const std::size_t t = rng.index(spec.templates_per_intent);
      const std::size_t n_req = rng.index(max_requested + 1);
      std::vector<std::size_t> slot_ids(spec.slots_per_intent);
      for (std::size_t r = 0; r < slot_ids.size(); ++r) slot_ids[r] = r;
      rng.shuffle(slot_ids);
      slot_ids.resize(n_req);
      std::sort(slot_ids.begin(), slot_ids.end());

      std::vector<std::string> rest;
      for (std::size_t r : slot_ids) rest.push_back(lex.ask[r]);
      const std::size_t ctx_len =
          std::max(in_range(spec.context_min, spec.context_max), 1 + n_req);
      while (rest.size() + 1 < ctx_len) {
        if (rng.uniform01() < 0.5) {
          rest.push_back(lex.filler[rng.index(lex.filler.size())]);
        } else {
          rest.push_back(shared());
        }
      }
      rng.shuffle(rest);

      Sample sample;
      sample.intent = lex.name;
      sample.context.push_back(lex.cue[t]);
      sample.context.insert(sample.context.end(), rest.begin(), rest.end());
      sample.response = lex.templates[t];
      Goal goal;
      goal.entity = lex.entity;
      for (std::size_t r : slot_ids) {
        sample.response.push_back(lex.slots[r]);
        goal.requested.push_back(lex.slots[r]);
      }
      sample.goal = std::move(goal);
      corpus.samples.push_back(std::move(sample));
    }
  }
  return corpus;
}

}  // namespace tokmoe
