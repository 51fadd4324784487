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

#ifndef TOKMOE_EVAL_HPP_
#define TOKMOE_EVAL_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tokmoe/data.hpp"
#include "tokmoe/model.hpp"

namespace tokmoe {

using TokenSeq = std::vector<std::string>;

// Corpus BLEU-4: clipped counts pooled over the corpus, uniform weights,
// brevity penalty, no smoothing.
double bleu_corpus(const std::vector<TokenSeq>& hypotheses,
                   const std::vector<TokenSeq>& references);

// Placeholder-containment proxies. A sample without a goal entity counts
// as informed.
bool sample_informed(const Sample& sample, const TokenSeq& generated);
bool sample_succeeded(const Sample& sample, const TokenSeq& generated);
double inform_rate(std::span<const Sample> samples,
                   const std::vector<TokenSeq>& generated);
double success_rate(std::span<const Sample> samples,
                    const std::vector<TokenSeq>& generated);

// Percent-space inputs.
double composite_score(double inform_pct, double success_pct, double bleu_pct);

struct MetricRow {
  std::string label;
  std::size_t samples = 0;
  double inform = 0.0;   // fraction
  double success = 0.0;  // fraction
  double bleu = 0.0;     // fraction
  double score = 0.0;    // percent space
};

struct MetricsReport {
  MetricRow overall;
  std::vector<MetricRow> per_intent;  // sorted by label

  std::string to_json() const;
  std::string to_table() const;
};

MetricsReport compute_metrics(std::span<const Sample> samples,
                              const std::vector<TokenSeq>& generated);

// Greedy-decodes every sample. Work is spread over `threads` workers;
// output order matches input order.
std::vector<TokenSeq> generate_responses(const TokenMoeModel& model,
                                         const Vocabulary& vocab,
                                         std::span<const Sample> samples,
                                         std::size_t max_len,
                                         std::size_t threads = 1);

// I_x(a, b).
double regularized_incomplete_beta(double x, double a, double b);
// Two-tailed p-value of Student's t with df degrees of freedom.
double student_t_two_tailed(double t, double df);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  std::size_t df = 0;
};

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace tokmoe

#endif  // TOKMOE_EVAL_HPP_
