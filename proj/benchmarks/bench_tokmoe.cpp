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

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "tokmoe/eval.hpp"
#include "tokmoe/model.hpp"
#include "tokmoe/training.hpp"

namespace tokmoe {
namespace {

ModelConfig bench_config(std::size_t hidden, std::size_t k) {
  ModelConfig c;
  c.vocab_size = 200;
  c.num_experts = k;
  c.hidden_size = hidden;
  c.embedding_size = hidden / 2;
  c.gate_hidden = 32;
  c.gate_size = 16;
  return c;
}

std::vector<TokenId> random_tokens(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> d(kSpecialCount, vocab - 1);
  std::vector<TokenId> out(n);
  for (TokenId& t : out) t = static_cast<TokenId>(d(rng));
  return out;
}

void BM_ForwardTeacherForced(benchmark::State& state) {
  const ModelConfig c = bench_config(state.range(0), state.range(1));
  const TokenMoeModel m(c);
  const auto ctx = random_tokens(12, c.vocab_size, 1);
  auto tgt = random_tokens(10, c.vocab_size, 2);
  tgt.push_back(kEosId);
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward_teacher_forced(m, ctx, tgt));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(tgt.size()));
}
BENCHMARK(BM_ForwardTeacherForced)->Args({32, 0})->Args({32, 3})->Args({64, 3})->Args({150, 3});

void BM_TrainBatch(benchmark::State& state) {
  const std::size_t k = 3;
  const ModelConfig c = bench_config(state.range(0), k);
  TokenMoeModel m(c);
  Trainer t(m, SchemeConfig::for_scheme(Scheme::kS4), {}, {"a", "b", "c"}, 1);
  std::vector<EncodedSample> batch;
  for (std::size_t i = 0; i < 16; ++i) {
    EncodedSample s;
    s.intent = std::string(1, static_cast<char>('a' + i % k));
    s.context = random_tokens(10, c.vocab_size, 10 + i);
    s.response = random_tokens(8, c.vocab_size, 100 + i);
    s.response.push_back(kEosId);
    batch.push_back(std::move(s));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(t.accumulate(batch));
    t.step();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_TrainBatch)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_GreedyDecode(benchmark::State& state) {
  const ModelConfig c = bench_config(64, 3);
  const TokenMoeModel m(c);
  const auto ctx = random_tokens(12, c.vocab_size, 3);
  DecodeOptions opt;
  opt.max_len = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(greedy_decode(m, ctx, opt));
  }
}
BENCHMARK(BM_GreedyDecode)->Arg(20)->Arg(50);

void BM_BleuCorpus(benchmark::State& state) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> word(0, 60);
  std::vector<TokenSeq> hyps(state.range(0));
  std::vector<TokenSeq> refs(state.range(0));
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    for (int j = 0; j < 15; ++j) hyps[i].push_back("w" + std::to_string(word(rng) % 20));
    for (int j = 0; j < 17; ++j) refs[i].push_back("w" + std::to_string(word(rng) % 20));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(bleu_corpus(hyps, refs));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BleuCorpus)->Arg(100)->Arg(1000);

void BM_PairedTTest(benchmark::State& state) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> a(state.range(0));
  std::vector<double> b(state.range(0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = d(rng);
    b[i] = d(rng) + 0.1;
  }
  for (auto _ : state) benchmark::DoNotOptimize(paired_t_test(a, b));
}
BENCHMARK(BM_PairedTTest)->Arg(30)->Arg(1000);

}  // namespace
}  // namespace tokmoe

BENCHMARK_MAIN();
