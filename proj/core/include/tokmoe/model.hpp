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

#ifndef TOKMOE_MODEL_HPP_
#define TOKMOE_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tokmoe/params.hpp"
#include "tokmoe/seq.hpp"
#include "tokmoe/types.hpp"

namespace tokmoe {

struct ModelConfig {
  std::size_t vocab_size = 400;
  // Number of expert decoders k. Zero gives the single-decoder baseline.
  std::size_t num_experts = 0;
  // Learned gating over all decoders. When off, the chair's own
  // distribution is used directly.
  bool mixture = true;
  CellKind cell = CellKind::kLstm;
  bool attention = true;
  std::size_t embedding_size = 50;
  std::size_t hidden_size = 150;
  std::size_t attention_size = 0;  // 0 means hidden_size
  std::size_t gate_hidden = 128;
  std::size_t gate_size = 32;
  double init_range = 0.08;
  std::uint64_t seed = 1;

  std::size_t decoder_count() const { return num_experts + 1; }
  std::size_t chair_index() const { return num_experts; }
  bool gated() const { return mixture && num_experts > 0; }
  std::size_t attention_width() const {
    return attention_size == 0 ? hidden_size : attention_size;
  }
  void validate() const;
};

// One decoder: recurrent cell, its own attention and vocabulary projection.
struct DecoderStack {
  CellParams cell;
  std::optional<AttentionParams> attention;
  ProjectionParams projection;
};

// One-hidden-layer tanh MLP over the concatenated decoder states and
// distributions, scored against one learned vector per decoder.
struct GatingParams {
  SlotId hidden_w = 0;  // input x gate_hidden
  SlotId hidden_b = 0;
  SlotId out_w = 0;  // gate_hidden x gate_size
  SlotId out_b = 0;
  std::vector<SlotId> expert_embeddings;  // decoder_count vectors of gate_size
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  std::size_t width = 0;
};

// Shared encoder, k expert decoders and the chair decoder (always last).
// Parameter names: embedding.table, encoder.{W,U,b},
// expert.<l>.{cell,attn,out}.* for l = 1..k, chair.{cell,attn,out}.*,
// gate.{hidden,out}.{W,b} and gate.expert_emb.<l> for l = 1..k+1.
class TokenMoeModel {
 public:
  // Registers all parameters and draws them from the configured seed.
  explicit TokenMoeModel(const ModelConfig& config);
  // Rebuilds the architecture from a loaded parameter store. Extra slots
  // (e.g. learnable loss weights) are kept.
  static TokenMoeModel from_params(ParamStore params);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const EmbeddingParams& embedding() const { return embedding_; }
  const CellParams& encoder() const { return encoder_; }
  const std::vector<DecoderStack>& decoders() const { return decoders_; }
  const std::optional<GatingParams>& gating() const { return gating_; }

 private:
  TokenMoeModel(ModelConfig config, ParamStore params);
  void register_params();

  ModelConfig config_;
  ParamStore params_;
  EmbeddingParams embedding_;
  CellParams encoder_;
  std::vector<DecoderStack> decoders_;
  std::optional<GatingParams> gating_;
};

struct EncoderOutput {
  std::vector<std::vector<double>> hiddens;
  RnnState final_state;
};

// Decoder indices are 0-based here: experts 0..k-1, chair k.
struct ExpertStep {
  std::vector<double> dist;
  RnnState state;
};

struct StepOutput {
  std::vector<std::vector<double>> per_expert_dists;
  std::vector<RnnState> per_expert_states;
  std::vector<double> beta;
  std::vector<double> combined;
};

EncoderOutput encode_context(const TokenMoeModel& model,
                             std::span<const TokenId> context);

ExpertStep expert_step(const TokenMoeModel& model, std::size_t expert,
                       TokenId prev_token, const RnnState& prev_state,
                       const EncoderOutput& encoded);

std::vector<double> gate_weights(const TokenMoeModel& model,
                                 std::span<const RnnState> states,
                                 std::span<const std::vector<double>> dists);

std::vector<double> chair_combine(std::span<const std::vector<double>> dists,
                                  std::span<const double> beta);

// Teacher-forced pass over `targets` (which should end with EOS). Step j
// feeds targets[j-1] (BOS at j = 0) to every decoder.
std::vector<StepOutput> forward_teacher_forced(const TokenMoeModel& model,
                                               std::span<const TokenId> context,
                                               std::span<const TokenId> targets);

struct DecodeOptions {
  std::size_t max_len = 50;
  // Pins beta to a one-hot vector at this decoder.
  std::optional<std::size_t> forced_expert;
  bool trace = false;
};

struct DecodeResult {
  std::vector<TokenId> tokens;             // includes the final EOS if emitted
  std::vector<std::vector<double>> betas;  // one per token when tracing
};

DecodeResult greedy_decode(const TokenMoeModel& model,
                           std::span<const TokenId> context,
                           const DecodeOptions& options);

// Index of the largest value, lowest index on ties.
std::size_t argmax(std::span<const double> values);

// Intermediate values of one teacher-forced pass, kept for backward.
struct ForwardTrace {
  struct DecoderStepCache {
    std::vector<double> input;  // emb(prev) ++ context
    CellCache cell;
    AttentionCache attention;
  };
  struct GateStepCache {
    std::vector<double> input;
    std::vector<double> hidden;  // tanh activations
    std::vector<double> projected;  // u
  };

  std::vector<TokenId> context;
  std::vector<TokenId> targets;
  std::vector<CellCache> encoder_steps;
  EncoderOutput encoded;
  std::vector<AttentionMemory> memories;  // per decoder, empty without attention
  std::vector<std::vector<DecoderStepCache>> decoder_steps;  // [decoder][step]
  std::vector<GateStepCache> gate_steps;
  std::vector<StepOutput> steps;
};

ForwardTrace forward_trace(const TokenMoeModel& model,
                           std::span<const TokenId> context,
                           std::span<const TokenId> targets);

// Loss gradient at one step. Empty vectors mean zero.
struct StepGradient {
  std::vector<std::vector<double>> d_dists;  // per decoder
  std::vector<double> d_combined;
};

struct BackwardOptions {
  // Drops the decoder-input embedding gradient; used to prove the gradient
  // checker catches a broken backward pass.
  bool inject_fault = false;
};

// Accumulates parameter gradients for one traced sequence.
void backward(TokenMoeModel& model, const ForwardTrace& trace,
              std::span<const StepGradient> step_grads,
              const BackwardOptions& options = {});

}  // namespace tokmoe

#endif  // TOKMOE_MODEL_HPP_
