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

#include <cmath>

#include <gtest/gtest.h>

#include "support/naive_model.hpp"
#include "support/oracle.hpp"
#include "tokmoe/error.hpp"
#include "tokmoe/model.hpp"

namespace tokmoe {
namespace {

using testing::naive_expert_step;
using testing::naive_gate;
using testing::Vec;

ModelConfig tiny_config(std::size_t k = 2, std::uint64_t seed = 1) {
  ModelConfig c;
  c.vocab_size = 6;
  c.num_experts = k;
  c.embedding_size = 3;
  c.hidden_size = 3;
  c.gate_hidden = 5;
  c.gate_size = 4;
  c.init_range = 0.5;
  c.seed = seed;
  return c;
}

double sum(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

const std::vector<TokenId> kContext = {4, 5, 1, 4};
const std::vector<TokenId> kResponse = {5, 4, kEosId};

TEST(ModelConfig, RejectsTooSmallVocabulary) {
  ModelConfig c = tiny_config();
  c.vocab_size = kSpecialCount;
  EXPECT_THROW(TokenMoeModel{c}, ConfigError);
}

TEST(Model, DecoderCountAndSharedEmbedding) {
  const TokenMoeModel m(tiny_config(3));
  EXPECT_EQ(m.decoders().size(), 4u);
  EXPECT_TRUE(m.params().find("chair.cell.W").has_value());
  EXPECT_TRUE(m.params().find("expert.3.out.U").has_value());
  EXPECT_FALSE(m.params().find("expert.4.out.U").has_value());
  EXPECT_TRUE(m.params().find("gate.expert_emb.4").has_value());
  EXPECT_FALSE(m.params().find("expert.1.embedding").has_value());
  const TokenMoeModel single(tiny_config(0));
  EXPECT_EQ(single.decoders().size(), 1u);
  EXPECT_FALSE(single.gating().has_value());
}

TEST(Encode, LengthAndEmptyContext) {
  const TokenMoeModel m(tiny_config());
  EXPECT_EQ(encode_context(m, std::vector<TokenId>{4}).hiddens.size(), 1u);
  EXPECT_EQ(encode_context(m, kContext).hiddens.size(), kContext.size());
  EXPECT_THROW(encode_context(m, std::vector<TokenId>{}), DomainError);
}

TEST(Encode, ZeroParamsGiveZeroHiddens) {
  TokenMoeModel m(tiny_config());
  for (ParamSlot& s : m.params()) s.value.fill(0.0);
  const EncoderOutput enc = encode_context(m, kContext);
  for (const auto& h : enc.hiddens) {
    for (double v : h) EXPECT_EQ(v, 0.0);
  }
}

TEST(ExpertStep, MatchesLoopReference) {
  for (CellKind cell : {CellKind::kLstm, CellKind::kGru}) {
    for (bool attention : {true, false}) {
      ModelConfig c = tiny_config(1, 4);
      c.vocab_size = 5;
      c.hidden_size = 2;
      c.embedding_size = 2;
      c.cell = cell;
      c.attention = attention;
      const TokenMoeModel m(c);
      const EncoderOutput enc = encode_context(m, std::vector<TokenId>{4, 1, 3});
      for (std::size_t l = 0; l < 2; ++l) {
        const ExpertStep got = expert_step(m, l, kBosId, enc.final_state, enc);
        const ExpertStep want =
            naive_expert_step(m, l, kBosId, enc.final_state, enc.hiddens);
        for (std::size_t t = 0; t < got.dist.size(); ++t) {
          EXPECT_NEAR(got.dist[t], want.dist[t], 1e-12);
        }
        for (std::size_t k = 0; k < 2; ++k) {
          EXPECT_NEAR(got.state.hidden[k], want.state.hidden[k], 1e-12);
          EXPECT_NEAR(got.state.cell[k], want.state.cell[k], 1e-12);
        }
      }
    }
  }
}

TEST(ExpertStep, OutputOnSimplexAndBadIndex) {
  const TokenMoeModel m(tiny_config());
  const EncoderOutput enc = encode_context(m, kContext);
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_NEAR(sum(expert_step(m, l, 4, enc.final_state, enc).dist), 1.0, 1e-12);
  }
  EXPECT_THROW(expert_step(m, 3, 4, enc.final_state, enc), Error);
}

TEST(ExpertStep, WithoutAttentionOnlyFinalStateMatters) {
  ModelConfig c = tiny_config();
  c.attention = false;
  const TokenMoeModel m(c);
  const EncoderOutput enc = encode_context(m, kContext);
  EncoderOutput other = enc;
  for (auto& h : other.hiddens) {
    for (double& v : h) v = 0.9 - v;
  }
  other.hiddens.push_back({0.1, 0.2, 0.3});
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_EQ(expert_step(m, l, 5, enc.final_state, enc).dist,
              expert_step(m, l, 5, enc.final_state, other).dist);
  }
}

TEST(ExpertStep, AttentionParamsAreNotShared) {
  TokenMoeModel m(tiny_config());
  const EncoderOutput enc = encode_context(m, kContext);
  std::vector<Vec> before;
  for (std::size_t l = 0; l < 3; ++l) {
    before.push_back(expert_step(m, l, 4, enc.final_state, enc).dist);
  }
  for (double& v : m.params().value(m.params().at("expert.1.attn.W")).values()) v += 0.3;
  EXPECT_NE(expert_step(m, 0, 4, enc.final_state, enc).dist, before[0]);
  EXPECT_EQ(expert_step(m, 1, 4, enc.final_state, enc).dist, before[1]);
  EXPECT_EQ(expert_step(m, 2, 4, enc.final_state, enc).dist, before[2]);
}

struct GateInputs {
  std::vector<RnnState> states;
  std::vector<Vec> dists;
};

GateInputs gate_inputs(const TokenMoeModel& m) {
  const EncoderOutput enc = encode_context(m, kContext);
  GateInputs in;
  for (std::size_t l = 0; l < m.config().decoder_count(); ++l) {
    ExpertStep s = expert_step(m, l, kBosId, enc.final_state, enc);
    in.states.push_back(s.state);
    in.dists.push_back(s.dist);
  }
  return in;
}

TEST(Gate, TwoDecoderCaseMatchesLoopReference) {
  ModelConfig c = tiny_config(1, 8);
  c.gate_size = 2;
  c.gate_hidden = 3;
  const TokenMoeModel m(c);
  const GateInputs in = gate_inputs(m);
  Vec want;
  naive_gate(m, in.states, in.dists, &want);
  const Vec got = gate_weights(m, in.states, in.dists);
  ASSERT_EQ(got.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) EXPECT_NEAR(got[l], want[l], 1e-12);
  EXPECT_NEAR(sum(got), 1.0, 1e-12);
}

TEST(Gate, EqualExpertEmbeddingsGiveUniformWeights) {
  TokenMoeModel m(tiny_config(3));
  const Tensor first = m.params().value(m.params().at("gate.expert_emb.1"));
  for (int l = 2; l <= 4; ++l) {
    m.params().value(m.params().at("gate.expert_emb." + std::to_string(l))) = first;
  }
  const GateInputs in = gate_inputs(m);
  for (double b : gate_weights(m, in.states, in.dists)) EXPECT_NEAR(b, 0.25, 1e-15);
}

TEST(Gate, CommonLogitShiftLeavesWeightsUnchanged) {
  TokenMoeModel m(tiny_config());
  const GateInputs in = gate_inputs(m);
  const Vec u = naive_gate(m, in.states, in.dists, nullptr);
  const Vec before = gate_weights(m, in.states, in.dists);
  double uu = 0.0;
  for (double v : u) uu += v * v;
  // Moving every u_e by c*u/|u|^2 adds c to every logit.
  const double shift = 7.5;
  for (int l = 1; l <= 3; ++l) {
    auto e = m.params().value(m.params().at("gate.expert_emb." + std::to_string(l))).values();
    for (std::size_t k = 0; k < u.size(); ++k) e[k] += shift * u[k] / uu;
  }
  const Vec after = gate_weights(m, in.states, in.dists);
  for (std::size_t l = 0; l < 3; ++l) EXPECT_NEAR(after[l], before[l], 1e-12);
  EXPECT_EQ(argmax(chair_combine(in.dists, after)), argmax(chair_combine(in.dists, before)));
}

TEST(Gate, CountMismatch) {
  const TokenMoeModel m(tiny_config());
  GateInputs in = gate_inputs(m);
  in.states.pop_back();
  EXPECT_THROW(gate_weights(m, in.states, in.dists), DimensionError);
}

TEST(ChairCombine, HandValues) {
  const std::vector<Vec> d = {{0.8, 0.2}, {0.2, 0.8}};
  const Vec out = chair_combine(d, std::vector<double>{0.5, 0.5});
  EXPECT_NEAR(out[0], 0.5, 1e-15);
  EXPECT_NEAR(out[1], 0.5, 1e-15);
}

TEST(ChairCombine, EqualDistsAndOneHotBeta) {
  const std::vector<Vec> same = {{0.1, 0.3, 0.6}, {0.1, 0.3, 0.6}, {0.1, 0.3, 0.6}};
  const Vec mixed = chair_combine(same, std::vector<double>{0.2, 0.5, 0.3});
  for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(mixed[t], same[0][t], 1e-15);
  const std::vector<Vec> d = {{0.1, 0.9}, {0.35, 0.65}, {0.7, 0.3}};
  EXPECT_EQ(chair_combine(d, std::vector<double>{0, 1, 0}), d[1]);
}

TEST(ChairCombine, LengthMismatch) {
  const std::vector<Vec> d = {{0.5, 0.5}, {0.5, 0.5}};
  EXPECT_THROW(chair_combine(d, std::vector<double>{1.0}), DimensionError);
}

TEST(TeacherForced, StepCountAndSimplex) {
  const TokenMoeModel m(tiny_config());
  const auto steps = forward_teacher_forced(m, kContext, kResponse);
  ASSERT_EQ(steps.size(), kResponse.size());
  for (const StepOutput& s : steps) {
    EXPECT_NEAR(sum(s.beta), 1.0, 1e-12);
    EXPECT_NEAR(sum(s.combined), 1.0, 1e-12);
    for (const Vec& d : s.per_expert_dists) EXPECT_NEAR(sum(d), 1.0, 1e-12);
  }
  EXPECT_THROW(forward_teacher_forced(m, kContext, std::vector<TokenId>{}), DomainError);
}

TEST(TeacherForced, SingleDecoderCombinedIsItsOwnOutput) {
  const TokenMoeModel m(tiny_config(0));
  for (const StepOutput& s : forward_teacher_forced(m, kContext, kResponse)) {
    EXPECT_EQ(s.beta, Vec{1.0});
    EXPECT_EQ(s.combined, s.per_expert_dists[0]);
  }
}

TEST(TeacherForced, FeedsGoldTokens) {
  const TokenMoeModel m(tiny_config());
  const auto steps = forward_teacher_forced(m, kContext, kResponse);
  const EncoderOutput enc = encode_context(m, kContext);
  RnnState state = enc.final_state;
  TokenId prev = kBosId;
  for (std::size_t j = 0; j < kResponse.size(); ++j) {
    ExpertStep s = expert_step(m, 1, prev, state, enc);
    EXPECT_EQ(s.dist, steps[j].per_expert_dists[1]);
    state = s.state;
    prev = kResponse[j];
  }
}

TEST(Greedy, DominantEosStopsImmediately) {
  TokenMoeModel m(tiny_config());
  for (const char* p : {"expert.1.out.a", "expert.2.out.a", "chair.out.a"}) {
    m.params().value(m.params().at(p))[kEosId] = 60.0;
  }
  const DecodeResult r = greedy_decode(m, kContext, {});
  EXPECT_EQ(r.tokens, std::vector<TokenId>{kEosId});
}

TEST(Greedy, DeterministicAndBounded) {
  const TokenMoeModel m(tiny_config(2, 17));
  DecodeOptions o;
  o.max_len = 4;
  o.trace = true;
  const DecodeResult a = greedy_decode(m, kContext, o);
  const DecodeResult b = greedy_decode(m, kContext, o);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_LE(a.tokens.size(), 4u);
  ASSERT_EQ(a.betas.size(), a.tokens.size());
  for (const Vec& beta : a.betas) EXPECT_NEAR(sum(beta), 1.0, 1e-12);
}

TEST(Greedy, ArgmaxTiesGoToLowestId) {
  EXPECT_EQ(argmax(std::vector<double>{0.25, 0.25, 0.25, 0.25}), 0u);
  EXPECT_EQ(argmax(std::vector<double>{0.1, 0.4, 0.4, 0.1}), 1u);
}

TEST(Greedy, ForcedExpertEqualsDecodingThatExpertAlone) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const TokenMoeModel m(tiny_config(2, seed));
    for (std::size_t l = 0; l < 3; ++l) {
      DecodeOptions o;
      o.max_len = 8;
      o.forced_expert = l;
      const DecodeResult r = greedy_decode(m, kContext, o);
      const EncoderOutput enc = encode_context(m, kContext);
      std::vector<TokenId> alone;
      RnnState state = enc.final_state;
      TokenId prev = kBosId;
      while (alone.size() < 8) {
        ExpertStep s = expert_step(m, l, prev, state, enc);
        state = s.state;
        prev = static_cast<TokenId>(argmax(s.dist));
        alone.push_back(prev);
        if (prev == kEosId) break;
      }
      EXPECT_EQ(r.tokens, alone);
    }
  }
}

TEST(Mixture, CombinedWithinExpertBounds) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const TokenMoeModel m(tiny_config(3, seed));
    for (const StepOutput& s : forward_teacher_forced(m, kContext, kResponse)) {
      for (std::size_t t = 0; t < s.combined.size(); ++t) {
        double lo = 1.0;
        double hi = 0.0;
        for (const Vec& d : s.per_expert_dists) {
          lo = std::min(lo, d[t]);
          hi = std::max(hi, d[t]);
        }
        EXPECT_GE(s.combined[t], lo - 1e-15);
        EXPECT_LE(s.combined[t], hi + 1e-15);
      }
    }
  }
}

TEST(FromParams, RebuildsArchitecture) {
  for (CellKind cell : {CellKind::kLstm, CellKind::kGru}) {
    for (bool attention : {true, false}) {
      for (bool mixture : {true, false}) {
        ModelConfig c = tiny_config(2);
        c.cell = cell;
        c.attention = attention;
        c.mixture = mixture;
        const TokenMoeModel m(c);
        const TokenMoeModel r = TokenMoeModel::from_params(m.params());
        EXPECT_EQ(r.config().cell, cell);
        EXPECT_EQ(r.config().attention, attention);
        EXPECT_EQ(r.config().gated(), mixture);
        EXPECT_EQ(r.config().num_experts, 2u);
        EXPECT_EQ(r.config().hidden_size, 3u);
        EXPECT_EQ(forward_teacher_forced(r, kContext, kResponse)[1].combined,
                  forward_teacher_forced(m, kContext, kResponse)[1].combined);
      }
    }
  }
}

}  // namespace
}  // namespace tokmoe
