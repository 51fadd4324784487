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

#include "support/oracle.hpp"
#include "tokmoe/error.hpp"
#include "tokmoe/random.hpp"
#include "tokmoe/seq.hpp"
#include "tokmoe/tensor.hpp"

namespace tokmoe {
namespace {

using testing::max_fd_error;
using testing::random_values;

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void fill_random(ParamStore& store, std::uint64_t seed, double range = 0.8) {
  Rng rng(seed);
  init_uniform(store, range, rng);
}

double dot_all(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Checks every parameter, the input and both state halves of one cell step.
void check_cell_gradients(CellKind kind) {
  const std::size_t d_in = 2;
  const std::size_t d_h = 3;
  ParamStore store;
  const CellParams p = add_cell_params(store, "cell", kind, d_in, d_h);
  fill_random(store, 5);
  std::vector<double> input = random_values(d_in, 6);
  RnnState prev{random_values(d_h, 7, -0.9, 0.9), random_values(d_h, 8)};
  if (kind == CellKind::kGru) prev.cell.assign(d_h, 0.0);
  const auto gh = random_values(d_h, 9);
  const auto gc = random_values(d_h, 10);

  auto loss = [&] {
    const RnnState next = cell_step(store, p, input, prev);
    double l = dot_all(next.hidden, gh);
    if (kind == CellKind::kLstm) l += dot_all(next.cell, gc);
    return l;
  };

  CellCache cache;
  cell_step(store, p, input, prev, &cache);
  RnnState d_next{gh, kind == CellKind::kLstm ? gc : std::vector<double>(d_h, 0.0)};
  std::vector<double> d_input(d_in, 0.0);
  RnnState d_prev = RnnState::zeros(d_h);
  store.zero_grad();
  cell_step_backward(store, p, cache, d_next, d_input, d_prev);

  for (SlotId s : {p.w, p.u, p.b}) {
    const Tensor grad = store.grad(s);
    EXPECT_LT(max_fd_error(loss, store.value(s).values(), grad.values()), 1e-6)
        << store.slot(s).name;
  }
  EXPECT_LT(max_fd_error(loss, input, d_input), 1e-6);
  EXPECT_LT(max_fd_error(loss, prev.hidden, d_prev.hidden), 1e-6);
  if (kind == CellKind::kLstm) {
    EXPECT_LT(max_fd_error(loss, prev.cell, d_prev.cell), 1e-6);
  }
}

TEST(Embedding, LookupReadsRow) {
  ParamStore store;
  const EmbeddingParams e = add_embedding_params(store, "emb", 3, 2);
  store.value(e.table).values()[0] = 0.1;
  store.value(e.table).values()[1] = 0.2;
  const auto row = embed_lookup(store, e, 0);
  ASSERT_EQ(row.size(), 2u);
  EXPECT_EQ(row[0], 0.1);
  EXPECT_EQ(row[1], 0.2);
}

TEST(Embedding, OutOfRangeIdIsIndexError) {
  ParamStore store;
  const EmbeddingParams e = add_embedding_params(store, "emb", 3, 2);
  EXPECT_THROW(embed_lookup(store, e, 3), IndexError);
}

TEST(Embedding, BackwardTouchesOneRow) {
  ParamStore store;
  const EmbeddingParams e = add_embedding_params(store, "emb", 4, 2);
  const std::vector<double> up = {1.5, -2.0};
  embed_backward(store, e, 2, up);
  const Tensor& g = store.grad(e.table);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_EQ(g.at(r, c), r == 2 ? up[c] : 0.0);
    }
  }
}

TEST(Lstm, ZeroParamsGiveZeroHidden) {
  ParamStore store;
  const CellParams p = add_cell_params(store, "c", CellKind::kLstm, 2, 3);
  const RnnState next = lstm_cell_step(store, p, std::vector<double>{0.7, -1.2},
                                       RnnState::zeros(3));
  for (double h : next.hidden) EXPECT_EQ(h, 0.0);
  for (double c : next.cell) EXPECT_EQ(c, 0.0);
}

TEST(Lstm, HiddenStaysInOpenUnitInterval) {
  ParamStore store;
  const CellParams p = add_cell_params(store, "c", CellKind::kLstm, 3, 4);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    fill_random(store, seed, 3.0);
    RnnState next = lstm_cell_step(store, p, random_values(3, seed + 100, -5, 5),
                                   RnnState{random_values(4, seed + 200), random_values(4, seed + 300, -4, 4)});
    for (double h : next.hidden) {
      EXPECT_GT(h, -1.0);
      EXPECT_LT(h, 1.0);
    }
  }
}

TEST(Lstm, SingleUnitMatchesHandEvaluation) {
  ParamStore store;
  const CellParams p = add_cell_params(store, "c", CellKind::kLstm, 1, 1);
  // Gate order i, f, g, o.
  const std::vector<double> w = {0.3, -0.2, 0.5, 0.1};
  const std::vector<double> u = {-0.4, 0.6, 0.2, -0.7};
  const std::vector<double> b = {0.05, 0.1, -0.15, 0.2};
  std::copy(w.begin(), w.end(), store.value(p.w).values().begin());
  std::copy(u.begin(), u.end(), store.value(p.u).values().begin());
  std::copy(b.begin(), b.end(), store.value(p.b).values().begin());
  const double x = 0.8;
  const double h = -0.3;
  const double c = 0.4;
  const double i = sig(w[0] * x + u[0] * h + b[0]);
  const double f = sig(w[1] * x + u[1] * h + b[1]);
  const double g = std::tanh(w[2] * x + u[2] * h + b[2]);
  const double o = sig(w[3] * x + u[3] * h + b[3]);
  const double c_next = f * c + i * g;
  const double h_next = o * std::tanh(c_next);
  const RnnState next = lstm_cell_step(store, p, std::vector<double>{x}, RnnState{{h}, {c}});
  EXPECT_NEAR(next.cell[0], c_next, 1e-12);
  EXPECT_NEAR(next.hidden[0], h_next, 1e-12);
}

TEST(Lstm, BackwardMatchesFiniteDifferences) { check_cell_gradients(CellKind::kLstm); }

TEST(Gru, ZeroParamsGiveZeroHidden) {
  ParamStore store;
  const CellParams p = add_cell_params(store, "c", CellKind::kGru, 2, 3);
  const RnnState next =
      gru_cell_step(store, p, std::vector<double>{0.7, -1.2}, RnnState::zeros(3));
  for (double h : next.hidden) EXPECT_EQ(h, 0.0);
  for (double c : next.cell) EXPECT_EQ(c, 0.0);
}

TEST(Gru, HiddenStaysInOpenUnitInterval) {
  ParamStore store;
  const CellParams p = add_cell_params(store, "c", CellKind::kGru, 3, 4);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    fill_random(store, seed, 3.0);
    RnnState prev = RnnState::zeros(4);
    prev.hidden = random_values(4, seed + 200, -0.99, 0.99);
    const RnnState next = gru_cell_step(store, p, random_values(3, seed + 100, -5, 5), prev);
    for (double h : next.hidden) {
      EXPECT_GT(h, -1.0);
      EXPECT_LT(h, 1.0);
    }
  }
}

TEST(Gru, SingleUnitMatchesHandEvaluation) {
  ParamStore store;
  const CellParams p = add_cell_params(store, "c", CellKind::kGru, 1, 1);
  // Gate order z, r, n.
  const std::vector<double> w = {0.3, -0.2, 0.5};
  const std::vector<double> u = {-0.4, 0.6, 0.2};
  const std::vector<double> b = {0.05, 0.1, -0.15};
  std::copy(w.begin(), w.end(), store.value(p.w).values().begin());
  std::copy(u.begin(), u.end(), store.value(p.u).values().begin());
  std::copy(b.begin(), b.end(), store.value(p.b).values().begin());
  const double x = 0.8;
  const double h = -0.3;
  const double z = sig(w[0] * x + u[0] * h + b[0]);
  const double r = sig(w[1] * x + u[1] * h + b[1]);
  const double n = std::tanh(w[2] * x + u[2] * (r * h) + b[2]);
  const double expected = (1.0 - z) * h + z * n;
  const RnnState next = gru_cell_step(store, p, std::vector<double>{x}, RnnState{{h}, {0.0}});
  EXPECT_NEAR(next.hidden[0], expected, 1e-12);
  EXPECT_EQ(next.cell[0], 0.0);
}

TEST(Gru, BackwardMatchesFiniteDifferences) { check_cell_gradients(CellKind::kGru); }

TEST(Attention, SingletonGetsAllWeight) {
  ParamStore store;
  const AttentionParams p = add_attention_params(store, "attn", 2, 3);
  fill_random(store, 1);
  const std::vector<std::vector<double>> hs = {{0.4, -0.6}};
  const AttentionResult r = attention_context(store, p, hs, std::vector<double>{0.1, 0.2});
  ASSERT_EQ(r.weights.size(), 1u);
  EXPECT_EQ(r.weights[0], 1.0);
  EXPECT_EQ(r.context, hs[0]);
}

TEST(Attention, IdenticalHiddensGiveThatHidden) {
  ParamStore store;
  const AttentionParams p = add_attention_params(store, "attn", 2, 3);
  fill_random(store, 2);
  const std::vector<std::vector<double>> hs(4, std::vector<double>{0.25, -0.5});
  const AttentionResult r = attention_context(store, p, hs, std::vector<double>{0.3, 0.1});
  EXPECT_NEAR(r.context[0], 0.25, 1e-15);
  EXPECT_NEAR(r.context[1], -0.5, 1e-15);
}

TEST(Attention, EmptyEncoderOutputIsDomainError) {
  ParamStore store;
  const AttentionParams p = add_attention_params(store, "attn", 2, 2);
  EXPECT_THROW(attention_context(store, p, {}, std::vector<double>{0.0, 0.0}), DomainError);
}

TEST(Attention, TwoPositionsMatchHandEvaluation) {
  ParamStore store;
  const AttentionParams p = add_attention_params(store, "attn", 2, 1);
  // Rows 0-1 act on the encoder hidden, rows 2-3 on the decoder state.
  const std::vector<double> w = {0.1, 0.2, -0.3, 0.4};
  std::copy(w.begin(), w.end(), store.value(p.w).values().begin());
  store.value(p.b)[0] = 0.05;
  store.value(p.v)[0] = 1.5;
  const std::vector<std::vector<double>> hs = {{0.5, -1.0}, {1.0, 2.0}};
  const std::vector<double> s = {0.3, 0.7};
  double e[2];
  for (int i = 0; i < 2; ++i) {
    e[i] = 1.5 * std::tanh(w[0] * hs[i][0] + w[1] * hs[i][1] + w[2] * s[0] + w[3] * s[1] + 0.05);
  }
  const double mx = std::max(e[0], e[1]);
  const double z0 = std::exp(e[0] - mx);
  const double z1 = std::exp(e[1] - mx);
  const double a0 = z0 / (z0 + z1);
  const double a1 = z1 / (z0 + z1);
  const AttentionResult r = attention_context(store, p, hs, s);
  EXPECT_NEAR(r.weights[0], a0, 1e-12);
  EXPECT_NEAR(r.weights[1], a1, 1e-12);
  EXPECT_NEAR(r.context[0], a0 * 0.5 + a1 * 1.0, 1e-12);
  EXPECT_NEAR(r.context[1], a0 * -1.0 + a1 * 2.0, 1e-12);
}

TEST(Attention, ContextInConvexHullForScalarHiddens) {
  ParamStore store;
  const AttentionParams p = add_attention_params(store, "attn", 1, 2);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    fill_random(store, seed, 2.0);
    const auto raw = random_values(3, seed + 50, -3, 3);
    std::vector<std::vector<double>> hs;
    for (double v : raw) hs.push_back({v});
    const AttentionResult r = attention_context(store, p, hs, random_values(1, seed + 60));
    const double lo = *std::min_element(raw.begin(), raw.end());
    const double hi = *std::max_element(raw.begin(), raw.end());
    EXPECT_GE(r.context[0], lo - 1e-12);
    EXPECT_LE(r.context[0], hi + 1e-12);
    double sum = 0.0;
    for (double a : r.weights) sum += a;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Attention, BackwardMatchesFiniteDifferences) {
  const std::size_t d_h = 3;
  ParamStore store;
  const AttentionParams p = add_attention_params(store, "attn", d_h, 2);
  fill_random(store, 12);
  std::vector<std::vector<double>> hs = {random_values(d_h, 13), random_values(d_h, 14),
                                         random_values(d_h, 15)};
  std::vector<double> query = random_values(d_h, 16);
  const auto g = random_values(d_h, 17);
  auto loss = [&] { return dot_all(attention_context(store, p, hs, query).context, g); };

  AttentionMemory memory = make_attention_memory(store, p, hs);
  AttentionCache cache;
  attend(store, p, memory, query, &cache);
  std::vector<double> d_query(d_h, 0.0);
  std::vector<std::vector<double>> d_hs(hs.size(), std::vector<double>(d_h, 0.0));
  store.zero_grad();
  attend_backward(store, p, memory, cache, g, d_query, d_hs);
  attention_memory_backward(store, p, memory, d_hs);

  for (SlotId s : {p.w, p.b, p.v}) {
    const Tensor grad = store.grad(s);
    EXPECT_LT(max_fd_error(loss, store.value(s).values(), grad.values()), 1e-6)
        << store.slot(s).name;
  }
  EXPECT_LT(max_fd_error(loss, query, d_query), 1e-6);
  for (std::size_t i = 0; i < hs.size(); ++i) {
    EXPECT_LT(max_fd_error(loss, hs[i], d_hs[i]), 1e-6);
  }
}

TEST(Projection, ZeroParamsGiveUniform) {
  ParamStore store;
  const ProjectionParams p = add_projection_params(store, "out", 3, 5);
  const auto probs = project_to_vocab(store, p, std::vector<double>{0.4, -1.0, 2.0});
  for (double v : probs) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(Projection, DominatingBiasWins) {
  ParamStore store;
  const ProjectionParams p = add_projection_params(store, "out", 3, 5);
  store.value(p.a)[2] = 50.0;
  const auto probs = project_to_vocab(store, p, std::vector<double>{0.4, -1.0, 2.0});
  EXPECT_GT(probs[2], 0.99);
}

TEST(Projection, RandomParamsStayOnSimplex) {
  ParamStore store;
  const ProjectionParams p = add_projection_params(store, "out", 4, 6);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    fill_random(store, seed, 5.0);
    const auto probs = project_to_vocab(store, p, random_values(4, seed + 7, -3, 3));
    double sum = 0.0;
    for (double v : probs) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Projection, BackwardMatchesFiniteDifferences) {
  ParamStore store;
  const ProjectionParams p = add_projection_params(store, "out", 4, 6);
  fill_random(store, 31);
  std::vector<double> o = random_values(4, 32);
  const auto g = random_values(6, 33);
  auto loss = [&] { return dot_all(project_to_vocab(store, p, o), g); };
  const auto probs = project_to_vocab(store, p, o);
  std::vector<double> d_o(4, 0.0);
  store.zero_grad();
  project_backward(store, p, o, probs, g, d_o);
  for (SlotId s : {p.u, p.a}) {
    const Tensor grad = store.grad(s);
    EXPECT_LT(max_fd_error(loss, store.value(s).values(), grad.values()), 1e-6);
  }
  EXPECT_LT(max_fd_error(loss, o, d_o), 1e-6);
}

TEST(Init, UniformRangeAndDeterminism) {
  ParamStore a;
  a.add("x", {50, 4});
  ParamStore b = a;
  Rng r1(9);
  Rng r2(9);
  init_uniform(a, 0.08, r1);
  init_uniform(b, 0.08, r2);
  EXPECT_EQ(a.value(0), b.value(0));
  for (double v : a.value(0).values()) {
    EXPECT_GE(v, -0.08);
    EXPECT_LE(v, 0.08);
  }
}

}  // namespace
}  // namespace tokmoe
