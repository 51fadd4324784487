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

#include "tokmoe/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tokmoe/error.hpp"
#include "tokmoe/random.hpp"
#include "tokmoe/tensor.hpp"

namespace tokmoe {

namespace {

std::string decoder_prefix(const ModelConfig& config, std::size_t l) {
  return l == config.chair_index() ? std::string("chair")
                                   : "expert." + std::to_string(l + 1);
}

void add_into(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

std::vector<double> one_hot(std::size_t n, std::size_t at) {
  std::vector<double> v(n, 0.0);
  v[at] = 1.0;
  return v;
}

void check_decoder_index(const ModelConfig& config, std::size_t l) {
  if (l >= config.decoder_count()) {
    throw IndexError("decoder index " + std::to_string(l) +
                     " out of range for " +
                     std::to_string(config.decoder_count()) + " decoders");
  }
}

// Runs one decoder step. `memory` is null when attention is disabled.
ExpertStep run_decoder_step(const TokenMoeModel& model, std::size_t l,
                            TokenId prev_token, const RnnState& prev_state,
                            const AttentionMemory* memory,
                            ForwardTrace::DecoderStepCache* cache) {
  const ModelConfig& config = model.config();
  const ParamStore& store = model.params();
  const DecoderStack& dec = model.decoders()[l];
  const std::size_t emb = config.embedding_size;
  const std::size_t h = config.hidden_size;

  std::vector<double> input(emb + h, 0.0);
  const auto row = embed_lookup(store, model.embedding(), prev_token);
  std::copy(row.begin(), row.end(), input.begin());
  if (dec.attention && memory != nullptr) {
    AttentionResult attn =
        attend(store, *dec.attention, *memory,
               state_vector(config.cell, prev_state),
               cache != nullptr ? &cache->attention : nullptr);
    std::copy(attn.context.begin(), attn.context.end(), input.begin() + emb);
  }
  ExpertStep out;
  out.state = cell_step(store, dec.cell, input, prev_state,
                        cache != nullptr ? &cache->cell : nullptr);
  out.dist = project_to_vocab(store, dec.projection, out.state.hidden);
  if (cache != nullptr) cache->input = std::move(input);
  return out;
}

std::vector<double> run_gating(const TokenMoeModel& model,
                               std::span<const RnnState> states,
                               std::span<const std::vector<double>> dists,
                               ForwardTrace::GateStepCache* cache) {
  const ModelConfig& config = model.config();
  const std::size_t n = config.decoder_count();
  if (states.size() != n || dists.size() != n) {
    throw DimensionError("gating: expected " + std::to_string(n) +
                         " states and distributions, got " +
                         std::to_string(states.size()) + " and " +
                         std::to_string(dists.size()));
  }
  if (!config.gated()) return one_hot(n, config.chair_index());

  const GatingParams& g = *model.gating();
  const ParamStore& store = model.params();
  std::vector<double> input;
  input.reserve(g.input_size);
  for (std::size_t l = 0; l < n; ++l) {
    const auto s = state_vector(config.cell, states[l]);
    input.insert(input.end(), s.begin(), s.end());
    input.insert(input.end(), dists[l].begin(), dists[l].end());
  }
  if (input.size() != g.input_size) {
    throw DimensionError("gating: input width " + std::to_string(input.size()) +
                         ", expected " + std::to_string(g.input_size));
  }
  const auto hb = store.value(g.hidden_b).values();
  std::vector<double> hidden(hb.begin(), hb.end());
  kernels::vec_mat_acc(input, store.value(g.hidden_w).values(), g.hidden_size,
                       hidden);
  for (double& v : hidden) v = std::tanh(v);
  const auto ob = store.value(g.out_b).values();
  std::vector<double> projected(ob.begin(), ob.end());
  kernels::vec_mat_acc(hidden, store.value(g.out_w).values(), g.width,
                       projected);
  std::vector<double> beta(n);
  for (std::size_t l = 0; l < n; ++l) {
    beta[l] =
        kernels::dot(projected, store.value(g.expert_embeddings[l]).values());
  }
  kernels::softmax_inplace(beta);
  if (cache != nullptr) {
    cache->input = std::move(input);
    cache->hidden = std::move(hidden);
    cache->projected = std::move(projected);
  }
  return beta;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size <= kSpecialCount) {
    throw ConfigError("vocab_size must exceed the " +
                      std::to_string(kSpecialCount) + " reserved tokens");
  }
  if (embedding_size == 0 || hidden_size == 0 || gate_hidden == 0 ||
      gate_size == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (!(init_range > 0.0)) throw ConfigError("init_range must be positive");
}

TokenMoeModel::TokenMoeModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  register_params();
  Rng rng(config_.seed);
  init_uniform(params_, config_.init_range, rng);
}

TokenMoeModel::TokenMoeModel(ModelConfig config, ParamStore params)
    : config_(std::move(config)), params_(std::move(params)) {}

void TokenMoeModel::register_params() {
  const std::size_t emb = config_.embedding_size;
  const std::size_t h = config_.hidden_size;
  embedding_ =
      add_embedding_params(params_, "embedding.table", config_.vocab_size, emb);
  encoder_ = add_cell_params(params_, "encoder", config_.cell, emb, h);
  decoders_.clear();
  for (std::size_t l = 0; l < config_.decoder_count(); ++l) {
    const std::string prefix = decoder_prefix(config_, l);
    DecoderStack dec;
    dec.cell = add_cell_params(params_, prefix + ".cell", config_.cell, emb + h, h);
    if (config_.attention) {
      dec.attention = add_attention_params(params_, prefix + ".attn", h,
                                           config_.attention_width());
    }
    dec.projection =
        add_projection_params(params_, prefix + ".out", h, config_.vocab_size);
    decoders_.push_back(dec);
  }
  gating_.reset();
  if (config_.gated()) {
    GatingParams g;
    g.input_size = config_.decoder_count() * (h + config_.vocab_size);
    g.hidden_size = config_.gate_hidden;
    g.width = config_.gate_size;
    g.hidden_w = params_.add("gate.hidden.W", {g.input_size, g.hidden_size});
    g.hidden_b = params_.add("gate.hidden.b", {g.hidden_size});
    g.out_w = params_.add("gate.out.W", {g.hidden_size, g.width});
    g.out_b = params_.add("gate.out.b", {g.width});
    for (std::size_t l = 0; l < config_.decoder_count(); ++l) {
      g.expert_embeddings.push_back(
          params_.add("gate.expert_emb." + std::to_string(l + 1), {g.width}));
    }
    gating_ = std::move(g);
  }
}

TokenMoeModel TokenMoeModel::from_params(ParamStore loaded) {
  auto need = [&](const char* name) -> const Tensor& {
    auto id = loaded.find(name);
    if (!id) throw IntegrityError(std::string("checkpoint lacks tensor '") + name + "'");
    return loaded.value(*id);
  };
  ModelConfig config;
  const Tensor& table = need("embedding.table");
  const Tensor& enc_u = need("encoder.U");
  if (table.rank() != 2 || enc_u.rank() != 2) {
    throw IntegrityError("checkpoint embedding/encoder tensors are not matrices");
  }
  config.vocab_size = table.rows();
  config.embedding_size = table.cols();
  config.hidden_size = enc_u.rows();
  const std::size_t gates = enc_u.cols() / config.hidden_size;
  if (gates == 4) {
    config.cell = CellKind::kLstm;
  } else if (gates == 3) {
    config.cell = CellKind::kGru;
  } else {
    throw IntegrityError("cannot infer cell kind from encoder.U shape " +
                         shape_string(enc_u.shape()));
  }
  config.num_experts = 0;
  while (loaded.find("expert." + std::to_string(config.num_experts + 1) +
                     ".cell.W")) {
    ++config.num_experts;
  }
  if (auto id = loaded.find("chair.attn.W")) {
    config.attention = true;
    config.attention_size = loaded.value(*id).cols();
  } else {
    config.attention = false;
  }
  if (auto id = loaded.find("gate.hidden.W")) {
    config.mixture = true;
    config.gate_hidden = loaded.value(*id).cols();
    config.gate_size = need("gate.out.W").cols();
  } else {
    config.mixture = false;
  }

  TokenMoeModel model(config, ParamStore{});
  model.config_.validate();
  model.register_params();
  std::vector<bool> used(loaded.size(), false);
  for (auto& slot : model.params_) {
    auto id = loaded.find(slot.name);
    if (!id) throw IntegrityError("checkpoint lacks tensor '" + slot.name + "'");
    const Tensor& v = loaded.value(*id);
    if (v.shape() != slot.value.shape()) {
      throw IntegrityError("tensor '" + slot.name + "' has shape " +
                           shape_string(v.shape()) + ", expected " +
                           shape_string(slot.value.shape()));
    }
    slot.value = v;
    used[*id] = true;
  }
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    if (used[i]) continue;
    const ParamSlot& extra = loaded.slot(i);
    const SlotId id = model.params_.add(extra.name, extra.value.shape());
    model.params_.value(id) = extra.value;
  }
  return model;
}

EncoderOutput encode_context(const TokenMoeModel& model,
                             std::span<const TokenId> context) {
  if (context.empty()) throw DomainError("empty context sequence");
  const ModelConfig& config = model.config();
  EncoderOutput out;
  out.final_state = RnnState::zeros(config.hidden_size);
  out.hiddens.reserve(context.size());
  for (TokenId t : context) {
    const auto x = embed_lookup(model.params(), model.embedding(), t);
    out.final_state =
        cell_step(model.params(), model.encoder(), x, out.final_state);
    out.hiddens.push_back(out.final_state.hidden);
  }
  return out;
}

ExpertStep expert_step(const TokenMoeModel& model, std::size_t expert,
                       TokenId prev_token, const RnnState& prev_state,
                       const EncoderOutput& encoded) {
  check_decoder_index(model.config(), expert);
  const DecoderStack& dec = model.decoders()[expert];
  if (dec.attention) {
    const AttentionMemory memory =
        make_attention_memory(model.params(), *dec.attention, encoded.hiddens);
    return run_decoder_step(model, expert, prev_token, prev_state, &memory,
                            nullptr);
  }
  return run_decoder_step(model, expert, prev_token, prev_state, nullptr,
                          nullptr);
}

std::vector<double> gate_weights(const TokenMoeModel& model,
                                 std::span<const RnnState> states,
                                 std::span<const std::vector<double>> dists) {
  return run_gating(model, states, dists, nullptr);
}

std::vector<double> chair_combine(std::span<const std::vector<double>> dists,
                                  std::span<const double> beta) {
  if (dists.size() != beta.size() || dists.empty()) {
    throw DimensionError("chair_combine: " + std::to_string(dists.size()) +
                         " distributions vs " + std::to_string(beta.size()) +
                         " weights");
  }
  const std::size_t v = dists.front().size();
  std::vector<double> out(v, 0.0);
  for (std::size_t l = 0; l < dists.size(); ++l) {
    if (dists[l].size() != v) {
      throw DimensionError("chair_combine: distribution sizes differ");
    }
    for (std::size_t t = 0; t < v; ++t) out[t] += beta[l] * dists[l][t];
  }
  return out;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

ForwardTrace forward_trace(const TokenMoeModel& model,
                           std::span<const TokenId> context,
                           std::span<const TokenId> targets) {
  if (context.empty()) throw DomainError("empty context sequence");
  if (targets.empty()) throw DomainError("empty response sequence");
  const ModelConfig& config = model.config();
  const ParamStore& store = model.params();
  const std::size_t n_dec = config.decoder_count();
  const std::size_t n = targets.size();

  ForwardTrace trace;
  trace.context.assign(context.begin(), context.end());
  trace.targets.assign(targets.begin(), targets.end());

  RnnState state = RnnState::zeros(config.hidden_size);
  trace.encoder_steps.resize(context.size());
  for (std::size_t i = 0; i < context.size(); ++i) {
    const auto x = embed_lookup(store, model.embedding(), context[i]);
    state = cell_step(store, model.encoder(), x, state, &trace.encoder_steps[i]);
    trace.encoded.hiddens.push_back(state.hidden);
  }
  trace.encoded.final_state = state;

  trace.memories.resize(n_dec);
  for (std::size_t l = 0; l < n_dec; ++l) {
    if (model.decoders()[l].attention) {
      trace.memories[l] = make_attention_memory(
          store, *model.decoders()[l].attention, trace.encoded.hiddens);
    }
  }

  trace.decoder_steps.assign(n_dec, std::vector<ForwardTrace::DecoderStepCache>(n));
  trace.gate_steps.resize(n);
  trace.steps.resize(n);
  std::vector<RnnState> states(n_dec, trace.encoded.final_state);
  for (std::size_t j = 0; j < n; ++j) {
    const TokenId prev = j == 0 ? kBosId : targets[j - 1];
    StepOutput& step = trace.steps[j];
    step.per_expert_dists.resize(n_dec);
    for (std::size_t l = 0; l < n_dec; ++l) {
      const AttentionMemory* memory =
          model.decoders()[l].attention ? &trace.memories[l] : nullptr;
      ExpertStep out = run_decoder_step(model, l, prev, states[l], memory,
                                        &trace.decoder_steps[l][j]);
      states[l] = std::move(out.state);
      step.per_expert_dists[l] = std::move(out.dist);
    }
    step.per_expert_states = states;
    step.beta = run_gating(model, states, step.per_expert_dists,
                           &trace.gate_steps[j]);
    if (config.gated()) {
      step.combined = chair_combine(step.per_expert_dists, step.beta);
    } else {
      step.combined = step.per_expert_dists[config.chair_index()];
    }
  }
  return trace;
}

std::vector<StepOutput> forward_teacher_forced(const TokenMoeModel& model,
                                               std::span<const TokenId> context,
                                               std::span<const TokenId> targets) {
  return forward_trace(model, context, targets).steps;
}

DecodeResult greedy_decode(const TokenMoeModel& model,
                           std::span<const TokenId> context,
                           const DecodeOptions& options) {
  const ModelConfig& config = model.config();
  const ParamStore& store = model.params();
  const std::size_t n_dec = config.decoder_count();
  if (options.forced_expert) check_decoder_index(config, *options.forced_expert);

  DecodeResult result;
  if (options.max_len == 0) return result;
  const EncoderOutput encoded = encode_context(model, context);
  std::vector<AttentionMemory> memories(n_dec);
  for (std::size_t l = 0; l < n_dec; ++l) {
    if (model.decoders()[l].attention) {
      memories[l] = make_attention_memory(store, *model.decoders()[l].attention,
                                          encoded.hiddens);
    }
  }
  std::vector<RnnState> states(n_dec, encoded.final_state);
  std::vector<std::vector<double>> dists(n_dec);
  TokenId prev = kBosId;
  while (result.tokens.size() < options.max_len) {
    for (std::size_t l = 0; l < n_dec; ++l) {
      const AttentionMemory* memory =
          model.decoders()[l].attention ? &memories[l] : nullptr;
      ExpertStep out = run_decoder_step(model, l, prev, states[l], memory, nullptr);
      states[l] = std::move(out.state);
      dists[l] = std::move(out.dist);
    }
    std::vector<double> beta =
        options.forced_expert ? one_hot(n_dec, *options.forced_expert)
                              : run_gating(model, states, dists, nullptr);
    const std::vector<double> combined = chair_combine(dists, beta);
    prev = static_cast<TokenId>(argmax(combined));
    result.tokens.push_back(prev);
    if (options.trace) result.betas.push_back(std::move(beta));
    if (prev == kEosId) break;
  }
  return result;
}

void backward(TokenMoeModel& model, const ForwardTrace& trace,
              std::span<const StepGradient> step_grads,
              const BackwardOptions& options) {
  const ModelConfig& config = model.config();
  ParamStore& store = model.params();
  const std::size_t n_dec = config.decoder_count();
  const std::size_t n = trace.steps.size();
  const std::size_t h = config.hidden_size;
  const std::size_t emb = config.embedding_size;
  const std::size_t vocab = config.vocab_size;
  if (step_grads.size() != n) {
    throw DimensionError("backward: " + std::to_string(step_grads.size()) +
                         " step gradients for " + std::to_string(n) + " steps");
  }

  // Gradients w.r.t. each decoder's hidden output (through the projection)
  // and its state vector (through the gate), per step.
  std::vector<std::vector<std::vector<double>>> d_out(
      n_dec, std::vector<std::vector<double>>(n));
  std::vector<std::vector<std::vector<double>>> d_gate_state(
      n_dec, std::vector<std::vector<double>>(n));

  for (std::size_t j = 0; j < n; ++j) {
    const StepOutput& step = trace.steps[j];
    const StepGradient& sg = step_grads[j];
    std::vector<std::vector<double>> d_dist(n_dec);
    for (std::size_t l = 0; l < n_dec; ++l) {
      if (l < sg.d_dists.size() && !sg.d_dists[l].empty()) {
        d_dist[l] = sg.d_dists[l];
      }
    }
    auto ensure = [&](std::vector<double>& v, std::size_t size) {
      if (v.empty()) v.assign(size, 0.0);
    };

    if (!sg.d_combined.empty()) {
      if (config.gated()) {
        const GatingParams& g = *model.gating();
        const ForwardTrace::GateStepCache& gc = trace.gate_steps[j];
        std::vector<double> d_beta(n_dec);
        for (std::size_t l = 0; l < n_dec; ++l) {
          d_beta[l] = kernels::dot(sg.d_combined, step.per_expert_dists[l]);
          ensure(d_dist[l], vocab);
          for (std::size_t t = 0; t < vocab; ++t) {
            d_dist[l][t] += step.beta[l] * sg.d_combined[t];
          }
        }
        std::vector<double> d_logits(n_dec);
        kernels::softmax_backward(step.beta, d_beta, d_logits);
        std::vector<double> d_projected(g.width, 0.0);
        for (std::size_t l = 0; l < n_dec; ++l) {
          const auto e = store.value(g.expert_embeddings[l]).values();
          auto de = store.grad(g.expert_embeddings[l]).values();
          for (std::size_t k = 0; k < g.width; ++k) {
            d_projected[k] += d_logits[l] * e[k];
            de[k] += d_logits[l] * gc.projected[k];
          }
        }
        add_into(store.grad(g.out_b).values(), d_projected);
        kernels::outer_acc(gc.hidden, d_projected, store.grad(g.out_w).values());
        std::vector<double> d_hidden(g.hidden_size, 0.0);
        kernels::mat_vec_acc(store.value(g.out_w).values(), d_projected, d_hidden);
        for (std::size_t k = 0; k < g.hidden_size; ++k) {
          d_hidden[k] *= 1.0 - gc.hidden[k] * gc.hidden[k];
        }
        add_into(store.grad(g.hidden_b).values(), d_hidden);
        kernels::outer_acc(gc.input, d_hidden, store.grad(g.hidden_w).values());
        std::vector<double> d_input(g.input_size, 0.0);
        kernels::mat_vec_acc(store.value(g.hidden_w).values(), d_hidden, d_input);
        for (std::size_t l = 0; l < n_dec; ++l) {
          const std::size_t off = l * (h + vocab);
          d_gate_state[l][j].assign(d_input.begin() + off,
                                    d_input.begin() + off + h);
          for (std::size_t t = 0; t < vocab; ++t) {
            d_dist[l][t] += d_input[off + h + t];
          }
        }
      } else {
        const std::size_t chair = config.chair_index();
        ensure(d_dist[chair], vocab);
        add_into(d_dist[chair], sg.d_combined);
      }
    }

    for (std::size_t l = 0; l < n_dec; ++l) {
      if (d_dist[l].empty()) continue;
      d_out[l][j].assign(h, 0.0);
      project_backward(store, model.decoders()[l].projection,
                       step.per_expert_states[l].hidden,
                       step.per_expert_dists[l], d_dist[l], d_out[l][j]);
    }
  }

  RnnState d_final = RnnState::zeros(h);
  std::vector<std::vector<double>> d_enc_hiddens(
      trace.encoded.hiddens.size(), std::vector<double>(h, 0.0));
  for (std::size_t l = 0; l < n_dec; ++l) {
    const DecoderStack& dec = model.decoders()[l];
    AttentionMemory memory;
    if (dec.attention) memory = trace.memories[l];
    RnnState carry = RnnState::zeros(h);
    for (std::size_t jj = n; jj-- > 0;) {
      const ForwardTrace::DecoderStepCache& cache = trace.decoder_steps[l][jj];
      RnnState d_next = carry;
      if (!d_out[l][jj].empty()) add_into(d_next.hidden, d_out[l][jj]);
      if (!d_gate_state[l][jj].empty()) {
        add_into(state_vector(config.cell, d_next), d_gate_state[l][jj]);
      }
      RnnState d_prev = RnnState::zeros(h);
      std::vector<double> d_input(emb + h, 0.0);
      cell_step_backward(store, dec.cell, cache.cell, d_next, d_input, d_prev);
      const TokenId prev = jj == 0 ? kBosId : trace.targets[jj - 1];
      if (!options.inject_fault) {
        embed_backward(store, model.embedding(), prev,
                       std::span<const double>(d_input).first(emb));
      }
      if (dec.attention) {
        std::vector<double> d_query(h, 0.0);
        attend_backward(store, *dec.attention, memory, cache.attention,
                        std::span<const double>(d_input).subspan(emb, h),
                        d_query, d_enc_hiddens);
        add_into(state_vector(config.cell, d_prev), d_query);
      }
      carry = std::move(d_prev);
    }
    add_into(d_final.hidden, carry.hidden);
    add_into(d_final.cell, carry.cell);
    if (dec.attention) {
      attention_memory_backward(store, *dec.attention, memory, d_enc_hiddens);
    }
  }

  RnnState carry = std::move(d_final);
  for (std::size_t ii = trace.context.size(); ii-- > 0;) {
    RnnState d_next = carry;
    add_into(d_next.hidden, d_enc_hiddens[ii]);
    RnnState d_prev = RnnState::zeros(h);
    std::vector<double> d_input(emb, 0.0);
    cell_step_backward(store, model.encoder(), trace.encoder_steps[ii], d_next,
                       d_input, d_prev);
    embed_backward(store, model.embedding(), trace.context[ii], d_input);
    carry = std::move(d_prev);
  }
}

}  // namespace tokmoe
