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

#include "tokmoe/seq.hpp"

#include <cmath>

#include "tokmoe/error.hpp"
#include "tokmoe/tensor.hpp"

namespace tokmoe {

namespace {

// out[j] += sum_i x[i] * W[i, col0 + j] for j < out.size().
void vec_mat_block(std::span<const double> x, std::span<const double> w,
                   std::size_t cols, std::size_t col0, std::span<double> out) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = w.data() + i * cols + col0;
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += xi * row[j];
  }
}

// dx[i] += sum_j W[i, col0 + j] * g[j].
void mat_vec_block(std::span<const double> w, std::size_t cols,
                   std::size_t col0, std::span<const double> g,
                   std::span<double> dx) {
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const double* row = w.data() + i * cols + col0;
    double acc = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) acc += row[j] * g[j];
    dx[i] += acc;
  }
}

// dW[i, col0 + j] += x[i] * g[j].
void outer_block(std::span<const double> x, std::span<const double> g,
                 std::size_t cols, std::size_t col0, std::span<double> dw) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    double* row = dw.data() + i * cols + col0;
    for (std::size_t j = 0; j < g.size(); ++j) row[j] += xi * g[j];
  }
}

void check_cell_shapes(const CellParams& p, std::span<const double> input,
                       const RnnState& prev) {
  if (input.size() != p.input_size || prev.hidden.size() != p.hidden_size ||
      prev.cell.size() != p.hidden_size) {
    throw DimensionError("cell step: expected input " +
                         std::to_string(p.input_size) + " and state " +
                         std::to_string(p.hidden_size) + ", got input " +
                         std::to_string(input.size()) + " and state " +
                         std::to_string(prev.hidden.size()) + "/" +
                         std::to_string(prev.cell.size()));
  }
}

}  // namespace

std::string_view cell_kind_name(CellKind kind) {
  return kind == CellKind::kLstm ? "lstm" : "gru";
}

CellKind parse_cell_kind(std::string_view name) {
  if (name == "lstm" || name == "LSTM") return CellKind::kLstm;
  if (name == "gru" || name == "GRU") return CellKind::kGru;
  throw ConfigError("unknown cell kind '" + std::string(name) + "'");
}

std::span<const double> state_vector(CellKind kind, const RnnState& state) {
  return kind == CellKind::kLstm ? std::span<const double>(state.cell)
                                 : std::span<const double>(state.hidden);
}

std::span<double> state_vector(CellKind kind, RnnState& state) {
  return kind == CellKind::kLstm ? std::span<double>(state.cell)
                                 : std::span<double>(state.hidden);
}

CellParams add_cell_params(ParamStore& store, const std::string& prefix,
                           CellKind kind, std::size_t input_size,
                           std::size_t hidden_size) {
  CellParams p;
  p.kind = kind;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  const std::size_t g = p.gate_count() * hidden_size;
  p.w = store.add(prefix + ".W", {input_size, g});
  p.u = store.add(prefix + ".U", {hidden_size, g});
  p.b = store.add(prefix + ".b", {g});
  return p;
}

RnnState lstm_cell_step(const ParamStore& store, const CellParams& params,
                        std::span<const double> input, const RnnState& prev,
                        CellCache* cache) {
  check_cell_shapes(params, input, prev);
  const std::size_t h = params.hidden_size;
  const std::size_t cols = 4 * h;
  const auto bias = store.value(params.b).values();
  std::vector<double> z(bias.begin(), bias.end());
  kernels::vec_mat_acc(input, store.value(params.w).values(), cols, z);
  kernels::vec_mat_acc(prev.hidden, store.value(params.u).values(), cols, z);

  RnnState next = RnnState::zeros(h);
  std::vector<double> tanh_cell(h);
  for (std::size_t k = 0; k < h; ++k) {
    const double i = kernels::sigmoid(z[k]);
    const double f = kernels::sigmoid(z[h + k]);
    const double g = std::tanh(z[2 * h + k]);
    const double o = kernels::sigmoid(z[3 * h + k]);
    z[k] = i;
    z[h + k] = f;
    z[2 * h + k] = g;
    z[3 * h + k] = o;
    next.cell[k] = f * prev.cell[k] + i * g;
    tanh_cell[k] = std::tanh(next.cell[k]);
    next.hidden[k] = o * tanh_cell[k];
  }
  if (cache != nullptr) {
    cache->input.assign(input.begin(), input.end());
    cache->prev = prev;
    cache->gates = std::move(z);
    cache->tanh_cell = std::move(tanh_cell);
    cache->reset_hidden.clear();
  }
  return next;
}

RnnState gru_cell_step(const ParamStore& store, const CellParams& params,
                       std::span<const double> input, const RnnState& prev,
                       CellCache* cache) {
  check_cell_shapes(params, input, prev);
  const std::size_t h = params.hidden_size;
  const std::size_t cols = 3 * h;
  const auto u = store.value(params.u).values();
  const auto bias = store.value(params.b).values();
  std::vector<double> a(bias.begin(), bias.end());
  kernels::vec_mat_acc(input, store.value(params.w).values(), cols, a);
  // Recurrent contribution for update and reset gates only.
  vec_mat_block(prev.hidden, u, cols, 0, std::span<double>(a).first(2 * h));
  std::vector<double> reset_hidden(h);
  for (std::size_t k = 0; k < h; ++k) {
    a[k] = kernels::sigmoid(a[k]);
    a[h + k] = kernels::sigmoid(a[h + k]);
    reset_hidden[k] = a[h + k] * prev.hidden[k];
  }
  vec_mat_block(reset_hidden, u, cols, 2 * h,
                std::span<double>(a).subspan(2 * h, h));
  RnnState next = RnnState::zeros(h);
  for (std::size_t k = 0; k < h; ++k) {
    const double n = std::tanh(a[2 * h + k]);
    a[2 * h + k] = n;
    const double zk = a[k];
    next.hidden[k] = (1.0 - zk) * prev.hidden[k] + zk * n;
  }
  if (cache != nullptr) {
    cache->input.assign(input.begin(), input.end());
    cache->prev = prev;
    cache->gates = std::move(a);
    cache->tanh_cell.clear();
    cache->reset_hidden = std::move(reset_hidden);
  }
  return next;
}

RnnState cell_step(const ParamStore& store, const CellParams& params,
                   std::span<const double> input, const RnnState& prev,
                   CellCache* cache) {
  return params.kind == CellKind::kLstm
             ? lstm_cell_step(store, params, input, prev, cache)
             : gru_cell_step(store, params, input, prev, cache);
}

void cell_step_backward(ParamStore& store, const CellParams& params,
                        const CellCache& cache, const RnnState& d_next,
                        std::span<double> d_input, RnnState& d_prev) {
  const std::size_t h = params.hidden_size;
  const std::size_t cols = params.gate_count() * h;
  const auto w = store.value(params.w).values();
  const auto u = store.value(params.u).values();
  auto dw = store.grad(params.w).values();
  auto du = store.grad(params.u).values();
  auto db = store.grad(params.b).values();
  const auto& gates = cache.gates;
  std::vector<double> da(cols, 0.0);

  if (params.kind == CellKind::kLstm) {
    for (std::size_t k = 0; k < h; ++k) {
      const double i = gates[k];
      const double f = gates[h + k];
      const double g = gates[2 * h + k];
      const double o = gates[3 * h + k];
      const double tc = cache.tanh_cell[k];
      const double dh = d_next.hidden[k];
      const double dc = d_next.cell[k] + dh * o * (1.0 - tc * tc);
      da[k] = dc * g * i * (1.0 - i);
      da[h + k] = dc * cache.prev.cell[k] * f * (1.0 - f);
      da[2 * h + k] = dc * i * (1.0 - g * g);
      da[3 * h + k] = dh * tc * o * (1.0 - o);
      d_prev.cell[k] += dc * f;
    }
    kernels::mat_vec_acc(u, da, d_prev.hidden);
    kernels::outer_acc(cache.prev.hidden, da, du);
  } else {
    std::vector<double> d_reset_hidden(h, 0.0);
    for (std::size_t k = 0; k < h; ++k) {
      const double z = gates[k];
      const double n = gates[2 * h + k];
      const double dh = d_next.hidden[k];
      da[k] = dh * (n - cache.prev.hidden[k]) * z * (1.0 - z);
      da[2 * h + k] = dh * z * (1.0 - n * n);
      d_prev.hidden[k] += dh * (1.0 - z);
    }
    const auto d_cand = std::span<const double>(da).subspan(2 * h, h);
    mat_vec_block(u, cols, 2 * h, d_cand, d_reset_hidden);
    outer_block(cache.reset_hidden, d_cand, cols, 2 * h, du);
    for (std::size_t k = 0; k < h; ++k) {
      const double r = gates[h + k];
      da[h + k] = d_reset_hidden[k] * cache.prev.hidden[k] * r * (1.0 - r);
      d_prev.hidden[k] += d_reset_hidden[k] * r;
    }
    const auto d_zr = std::span<const double>(da).first(2 * h);
    mat_vec_block(u, cols, 0, d_zr, d_prev.hidden);
    outer_block(cache.prev.hidden, d_zr, cols, 0, du);
  }
  kernels::mat_vec_acc(w, da, d_input);
  kernels::outer_acc(cache.input, da, dw);
  for (std::size_t j = 0; j < cols; ++j) db[j] += da[j];
}

EmbeddingParams add_embedding_params(ParamStore& store, const std::string& name,
                                     std::size_t vocab_size, std::size_t width) {
  return {store.add(name, {vocab_size, width}), vocab_size, width};
}

std::span<const double> embed_lookup(const ParamStore& store,
                                     const EmbeddingParams& params,
                                     TokenId token) {
  if (token >= params.vocab_size) {
    throw IndexError("token id " + std::to_string(token) +
                     " outside vocabulary of size " +
                     std::to_string(params.vocab_size));
  }
  return store.value(params.table).values().subspan(token * params.width,
                                                    params.width);
}

void embed_backward(ParamStore& store, const EmbeddingParams& params,
                    TokenId token, std::span<const double> upstream) {
  if (token >= params.vocab_size) {
    throw IndexError("token id " + std::to_string(token) +
                     " outside vocabulary of size " +
                     std::to_string(params.vocab_size));
  }
  auto row = store.grad(params.table).values().subspan(token * params.width,
                                                       params.width);
  for (std::size_t k = 0; k < params.width; ++k) row[k] += upstream[k];
}

AttentionParams add_attention_params(ParamStore& store, const std::string& prefix,
                                     std::size_t hidden_size, std::size_t width) {
  AttentionParams p;
  p.hidden_size = hidden_size;
  p.width = width;
  p.w = store.add(prefix + ".W", {2 * hidden_size, width});
  p.b = store.add(prefix + ".b", {width});
  p.v = store.add(prefix + ".v", {width});
  return p;
}

AttentionMemory make_attention_memory(
    const ParamStore& store, const AttentionParams& params,
    const std::vector<std::vector<double>>& encoder_hiddens) {
  if (encoder_hiddens.empty()) {
    throw DomainError("attention over an empty encoder output");
  }
  AttentionMemory memory;
  memory.hiddens = encoder_hiddens;
  const std::size_t m = encoder_hiddens.size();
  const std::size_t a = params.width;
  memory.keys.assign(m * a, 0.0);
  memory.d_keys.assign(m * a, 0.0);
  const auto w = store.value(params.w).values();
  for (std::size_t i = 0; i < m; ++i) {
    if (encoder_hiddens[i].size() != params.hidden_size) {
      throw DimensionError("attention: encoder hidden " + std::to_string(i) +
                           " has size " +
                           std::to_string(encoder_hiddens[i].size()) +
                           ", expected " + std::to_string(params.hidden_size));
    }
    // Top block of W occupies the first hidden_size rows.
    kernels::vec_mat_acc(encoder_hiddens[i], w.first(params.hidden_size * a), a,
                         std::span<double>(memory.keys).subspan(i * a, a));
  }
  return memory;
}

AttentionResult attend(const ParamStore& store, const AttentionParams& params,
                       const AttentionMemory& memory,
                       std::span<const double> query, AttentionCache* cache) {
  if (query.size() != params.hidden_size) {
    throw DimensionError("attention: query size " +
                         std::to_string(query.size()) + ", expected " +
                         std::to_string(params.hidden_size));
  }
  const std::size_t m = memory.hiddens.size();
  const std::size_t a = params.width;
  const std::size_t h = params.hidden_size;
  const auto w = store.value(params.w).values();
  const auto bias = store.value(params.b).values();
  const auto v = store.value(params.v).values();

  std::vector<double> query_part(bias.begin(), bias.end());
  kernels::vec_mat_acc(query, w.subspan(h * a), a, query_part);

  std::vector<double> activations(m * a);
  std::vector<double> scores(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a; ++j) {
      const double t = std::tanh(memory.keys[i * a + j] + query_part[j]);
      activations[i * a + j] = t;
      s += v[j] * t;
    }
    scores[i] = s;
  }
  kernels::softmax_inplace(scores);

  AttentionResult result;
  result.context.assign(h, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double alpha = scores[i];
    for (std::size_t k = 0; k < h; ++k) {
      result.context[k] += alpha * memory.hiddens[i][k];
    }
  }
  result.weights = std::move(scores);
  if (cache != nullptr) {
    cache->query.assign(query.begin(), query.end());
    cache->activations = std::move(activations);
    cache->weights = result.weights;
  }
  return result;
}

void attend_backward(ParamStore& store, const AttentionParams& params,
                     AttentionMemory& memory, const AttentionCache& cache,
                     std::span<const double> d_context,
                     std::span<double> d_query,
                     std::vector<std::vector<double>>& d_hiddens) {
  const std::size_t m = memory.hiddens.size();
  const std::size_t a = params.width;
  const std::size_t h = params.hidden_size;
  const auto w = store.value(params.w).values();
  const auto v = store.value(params.v).values();
  auto dw = store.grad(params.w).values();
  auto db = store.grad(params.b).values();
  auto dv = store.grad(params.v).values();

  std::vector<double> d_weights(m);
  for (std::size_t i = 0; i < m; ++i) {
    d_weights[i] = kernels::dot(d_context, memory.hiddens[i]);
    const double alpha = cache.weights[i];
    for (std::size_t k = 0; k < h; ++k) d_hiddens[i][k] += alpha * d_context[k];
  }
  std::vector<double> d_scores(m);
  kernels::softmax_backward(cache.weights, d_weights, d_scores);

  std::vector<double> d_query_part(a, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double ds = d_scores[i];
    for (std::size_t j = 0; j < a; ++j) {
      const double t = cache.activations[i * a + j];
      dv[j] += ds * t;
      const double d_pre = ds * v[j] * (1.0 - t * t);
      memory.d_keys[i * a + j] += d_pre;
      d_query_part[j] += d_pre;
    }
  }
  for (std::size_t j = 0; j < a; ++j) db[j] += d_query_part[j];
  kernels::outer_acc(cache.query, d_query_part, dw.subspan(h * a));
  kernels::mat_vec_acc(w.subspan(h * a), d_query_part, d_query);
}

void attention_memory_backward(ParamStore& store, const AttentionParams& params,
                               const AttentionMemory& memory,
                               std::vector<std::vector<double>>& d_hiddens) {
  const std::size_t a = params.width;
  const std::size_t h = params.hidden_size;
  const auto w_top = store.value(params.w).values().first(h * a);
  auto dw_top = store.grad(params.w).values().first(h * a);
  for (std::size_t i = 0; i < memory.hiddens.size(); ++i) {
    const auto dk = std::span<const double>(memory.d_keys).subspan(i * a, a);
    kernels::outer_acc(memory.hiddens[i], dk, dw_top);
    kernels::mat_vec_acc(w_top, dk, d_hiddens[i]);
  }
}

AttentionResult attention_context(
    const ParamStore& store, const AttentionParams& params,
    const std::vector<std::vector<double>>& encoder_hiddens,
    std::span<const double> decoder_prev_state) {
  const AttentionMemory memory =
      make_attention_memory(store, params, encoder_hiddens);
  return attend(store, params, memory, decoder_prev_state);
}

ProjectionParams add_projection_params(ParamStore& store, const std::string& prefix,
                                       std::size_t hidden_size,
                                       std::size_t vocab_size) {
  ProjectionParams p;
  p.hidden_size = hidden_size;
  p.vocab_size = vocab_size;
  p.u = store.add(prefix + ".U", {hidden_size, vocab_size});
  p.a = store.add(prefix + ".a", {vocab_size});
  return p;
}

std::vector<double> project_to_vocab(const ParamStore& store,
                                     const ProjectionParams& params,
                                     std::span<const double> o) {
  if (o.size() != params.hidden_size) {
    throw DimensionError("projection: input size " + std::to_string(o.size()) +
                         ", expected " + std::to_string(params.hidden_size));
  }
  const auto bias = store.value(params.a).values();
  std::vector<double> logits(bias.begin(), bias.end());
  kernels::vec_mat_acc(o, store.value(params.u).values(), params.vocab_size,
                       logits);
  kernels::softmax_inplace(logits);
  return logits;
}

void project_backward(ParamStore& store, const ProjectionParams& params,
                      std::span<const double> o, std::span<const double> probs,
                      std::span<const double> d_probs, std::span<double> d_o) {
  std::vector<double> d_logits(params.vocab_size);
  kernels::softmax_backward(probs, d_probs, d_logits);
  auto da = store.grad(params.a).values();
  for (std::size_t t = 0; t < params.vocab_size; ++t) da[t] += d_logits[t];
  kernels::outer_acc(o, d_logits, store.grad(params.u).values());
  kernels::mat_vec_acc(store.value(params.u).values(), d_logits, d_o);
}

void init_uniform(ParamStore& store, double range, Rng& rng) {
  for (auto& slot : store) {
    for (double& v : slot.value.values()) v = rng.uniform(-range, range);
  }
}

}  // namespace tokmoe
