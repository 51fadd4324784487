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

#ifndef TOKMOE_SEQ_HPP_
#define TOKMOE_SEQ_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tokmoe/params.hpp"
#include "tokmoe/random.hpp"
#include "tokmoe/types.hpp"

namespace tokmoe {

// Recurrent cells, embeddings, attention and the vocabulary projection.
// Each layer is a small struct of SlotIds into a ParamStore plus a forward
// function and a backward function that accumulates into the slot grads.

enum class CellKind { kLstm, kGru };

std::string_view cell_kind_name(CellKind kind);
CellKind parse_cell_kind(std::string_view name);

struct RnnState {
  std::vector<double> hidden;
  std::vector<double> cell;  // kept at zero for GRU

  static RnnState zeros(std::size_t size) {
    return {std::vector<double>(size, 0.0), std::vector<double>(size, 0.0)};
  }
};

// The state vector that attention queries and the gating network read. For
// an LSTM this is the memory cell, for a GRU (which has no cell) the hidden.
std::span<const double> state_vector(CellKind kind, const RnnState& state);
std::span<double> state_vector(CellKind kind, RnnState& state);

// Gate layout along the columns of W, U and b:
//   LSTM: [input | forget | candidate | output]
//   GRU:  [update | reset | candidate]
struct CellParams {
  CellKind kind = CellKind::kLstm;
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  SlotId w = 0;  // input_size x gates*hidden_size
  SlotId u = 0;  // hidden_size x gates*hidden_size
  SlotId b = 0;  // gates*hidden_size

  std::size_t gate_count() const { return kind == CellKind::kLstm ? 4 : 3; }
};

CellParams add_cell_params(ParamStore& store, const std::string& prefix,
                           CellKind kind, std::size_t input_size,
                           std::size_t hidden_size);

struct CellCache {
  std::vector<double> input;
  RnnState prev;
  std::vector<double> gates;     // post-activation, gates*hidden
  std::vector<double> tanh_cell;  // LSTM only
  std::vector<double> reset_hidden;  // GRU only: r * h_prev
};

RnnState lstm_cell_step(const ParamStore& store, const CellParams& params,
                        std::span<const double> input, const RnnState& prev,
                        CellCache* cache = nullptr);
RnnState gru_cell_step(const ParamStore& store, const CellParams& params,
                       std::span<const double> input, const RnnState& prev,
                       CellCache* cache = nullptr);
RnnState cell_step(const ParamStore& store, const CellParams& params,
                   std::span<const double> input, const RnnState& prev,
                   CellCache* cache = nullptr);

// Given gradients on the new state, accumulates parameter gradients, adds
// the input gradient into d_input and the previous-state gradient into
// d_prev.
void cell_step_backward(ParamStore& store, const CellParams& params,
                        const CellCache& cache, const RnnState& d_next,
                        std::span<double> d_input, RnnState& d_prev);

struct EmbeddingParams {
  SlotId table = 0;  // vocab_size x width
  std::size_t vocab_size = 0;
  std::size_t width = 0;
};

EmbeddingParams add_embedding_params(ParamStore& store, const std::string& name,
                                     std::size_t vocab_size, std::size_t width);
// Returns a view of row `token`. Throws IndexError when out of range.
std::span<const double> embed_lookup(const ParamStore& store,
                                     const EmbeddingParams& params,
                                     TokenId token);
void embed_backward(ParamStore& store, const EmbeddingParams& params,
                    TokenId token, std::span<const double> upstream);

// Concatenation attention: score_i = v . tanh([h_i ; q] W + b).
// Rows [0, hidden) of W act on the encoder hidden, rows [hidden, 2*hidden)
// on the decoder query.
struct AttentionParams {
  SlotId w = 0;  // 2*hidden x width
  SlotId b = 0;  // width
  SlotId v = 0;  // width
  std::size_t hidden_size = 0;
  std::size_t width = 0;
};

AttentionParams add_attention_params(ParamStore& store, const std::string& prefix,
                                     std::size_t hidden_size, std::size_t width);

// Encoder-side half of the score pre-activation, computed once per input
// sequence and reused at every decoder step.
struct AttentionMemory {
  std::vector<std::vector<double>> hiddens;
  std::vector<double> keys;    // m x width, h_i W_top
  std::vector<double> d_keys;  // gradient accumulator, same layout
};

AttentionMemory make_attention_memory(
    const ParamStore& store, const AttentionParams& params,
    const std::vector<std::vector<double>>& encoder_hiddens);

struct AttentionCache {
  std::vector<double> query;
  std::vector<double> activations;  // m x width, tanh outputs
  std::vector<double> weights;
};

struct AttentionResult {
  std::vector<double> context;
  std::vector<double> weights;
};

AttentionResult attend(const ParamStore& store, const AttentionParams& params,
                       const AttentionMemory& memory,
                       std::span<const double> query,
                       AttentionCache* cache = nullptr);

// Accumulates into W_bottom, b, v and memory.d_keys; adds into d_query and
// d_hiddens.
void attend_backward(ParamStore& store, const AttentionParams& params,
                     AttentionMemory& memory, const AttentionCache& cache,
                     std::span<const double> d_context,
                     std::span<double> d_query,
                     std::vector<std::vector<double>>& d_hiddens);
// Flushes memory.d_keys into W_top and d_hiddens. Call once per sequence.
void attention_memory_backward(ParamStore& store, const AttentionParams& params,
                               const AttentionMemory& memory,
                               std::vector<std::vector<double>>& d_hiddens);

// One-shot form: builds the memory and attends. Throws DomainError on an
// empty encoder output.
AttentionResult attention_context(
    const ParamStore& store, const AttentionParams& params,
    const std::vector<std::vector<double>>& encoder_hiddens,
    std::span<const double> decoder_prev_state);

struct ProjectionParams {
  SlotId u = 0;  // hidden x vocab
  SlotId a = 0;  // vocab
  std::size_t hidden_size = 0;
  std::size_t vocab_size = 0;
};

ProjectionParams add_projection_params(ParamStore& store, const std::string& prefix,
                                       std::size_t hidden_size,
                                       std::size_t vocab_size);

// softmax(U^T o + a).
std::vector<double> project_to_vocab(const ParamStore& store,
                                     const ProjectionParams& params,
                                     std::span<const double> o);
// Backward from a gradient on the probabilities. Adds into d_o.
void project_backward(ParamStore& store, const ProjectionParams& params,
                      std::span<const double> o, std::span<const double> probs,
                      std::span<const double> d_probs, std::span<double> d_o);

// Uniform(-range, range) over every slot, in registration order.
void init_uniform(ParamStore& store, double range, Rng& rng);

}  // namespace tokmoe

#endif  // TOKMOE_SEQ_HPP_
