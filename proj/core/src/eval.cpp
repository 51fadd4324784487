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

#include "tokmoe/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "tokmoe/error.hpp"

namespace tokmoe {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const TokenSeq& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

bool contains(const TokenSeq& tokens, const std::string& token) {
  return std::find(tokens.begin(), tokens.end(), token) != tokens.end();
}

void check_counts(std::size_t samples, std::size_t generated) {
  if (samples != generated) {
    throw DimensionError("metric inputs differ in length: " + std::to_string(samples) +
                         " samples vs " + std::to_string(generated) + " responses");
  }
}

MetricRow make_row(std::string label, std::span<const Sample> samples,
                   const std::vector<TokenSeq>& generated) {
  MetricRow row;
  row.label = std::move(label);
  row.samples = samples.size();
  row.inform = inform_rate(samples, generated);
  row.success = success_rate(samples, generated);
  std::vector<TokenSeq> refs;
  refs.reserve(samples.size());
  for (const Sample& s : samples) refs.push_back(s.response);
  row.bleu = bleu_corpus(generated, refs);
  row.score = composite_score(100.0 * row.inform, 100.0 * row.success, 100.0 * row.bleu);
  return row;
}

nlohmann::json row_json(const MetricRow& row) {
  return {{"label", row.label},     {"samples", row.samples},
          {"inform", row.inform},   {"success", row.success},
          {"bleu", row.bleu},       {"score", row.score}};
}

// Continued fraction for I_x(a, b), modified Lentz.
double beta_cf(double x, double a, double b) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double bleu_corpus(const std::vector<TokenSeq>& hypotheses,
                   const std::vector<TokenSeq>& references) {
  check_counts(references.size(), hypotheses.size());
  if (hypotheses.empty()) throw DomainError("BLEU of an empty corpus");
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    std::size_t matched = 0;
    std::size_t total = 0;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
      const NgramCounts hyp = count_ngrams(hypotheses[i], n);
      const NgramCounts ref = count_ngrams(references[i], n);
      for (const auto& [gram, count] : hyp) {
        total += count;
        auto it = ref.find(gram);
        if (it != ref.end()) matched += std::min(count, it->second);
      }
    }
    if (matched == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
  }
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    hyp_len += hypotheses[i].size();
    ref_len += references[i].size();
  }
  const double c = static_cast<double>(hyp_len);
  const double r = static_cast<double>(ref_len);
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_sum / 4.0);
}

bool sample_informed(const Sample& sample, const TokenSeq& generated) {
  if (!sample.goal || !sample.goal->entity) return true;
  return contains(generated, *sample.goal->entity);
}

bool sample_succeeded(const Sample& sample, const TokenSeq& generated) {
  if (!sample_informed(sample, generated)) return false;
  if (!sample.goal) return true;
  for (const std::string& r : sample.goal->requested) {
    if (!contains(generated, r)) return false;
  }
  return true;
}

double inform_rate(std::span<const Sample> samples,
                   const std::vector<TokenSeq>& generated) {
  check_counts(samples.size(), generated.size());
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (sample_informed(samples[i], generated[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double success_rate(std::span<const Sample> samples,
                    const std::vector<TokenSeq>& generated) {
  check_counts(samples.size(), generated.size());
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (sample_succeeded(samples[i], generated[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double composite_score(double inform_pct, double success_pct, double bleu_pct) {
  return 0.5 * inform_pct + 0.5 * success_pct + bleu_pct;
}

MetricsReport compute_metrics(std::span<const Sample> samples,
                              const std::vector<TokenSeq>& generated) {
  check_counts(samples.size(), generated.size());
  MetricsReport report;
  report.overall = make_row("all", samples, generated);
  std::map<std::string, std::pair<std::vector<Sample>, std::vector<TokenSeq>>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto& g = groups[samples[i].intent.empty() ? "<none>" : samples[i].intent];
    g.first.push_back(samples[i]);
    g.second.push_back(generated[i]);
  }
  for (const auto& [label, g] : groups) {
    report.per_intent.push_back(make_row(label, g.first, g.second));
  }
  return report;
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["metrics"] = "placeholder-containment proxy for inform/success";
  j["inform"] = overall.inform;
  j["success"] = overall.success;
  j["bleu"] = overall.bleu;
  j["score"] = overall.score;
  j["samples"] = overall.samples;
  nlohmann::json rows = nlohmann::json::array();
  for (const MetricRow& r : per_intent) rows.push_back(row_json(r));
  j["per_intent"] = rows;
  return j.dump(2);
}

std::string MetricsReport::to_table() const {
  std::size_t width = 6;
  for (const MetricRow& r : per_intent) width = std::max(width, r.label.size());
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s %7s %8s %8s %8s %8s\n",
                static_cast<int>(width), "intent", "n", "Inform", "Success", "BLEU",
                "Score");
  out << buf;
  auto emit = [&](const MetricRow& r) {
    std::snprintf(buf, sizeof(buf), "%-*s %7zu %8.2f %8.2f %8.2f %8.2f\n",
                  static_cast<int>(width), r.label.c_str(), r.samples,
                  100.0 * r.inform, 100.0 * r.success, 100.0 * r.bleu, r.score);
    out << buf;
  };
  for (const MetricRow& r : per_intent) emit(r);
  emit(overall);
  out << "(Inform/Success: placeholder-containment proxy)\n";
  return out.str();
}

std::vector<TokenSeq> generate_responses(const TokenMoeModel& model,
                                         const Vocabulary& vocab,
                                         std::span<const Sample> samples,
                                         std::size_t max_len, std::size_t threads) {
  std::vector<TokenSeq> out(samples.size());
  DecodeOptions options;
  options.max_len = max_len;
  auto decode_one = [&](std::size_t i) {
    std::vector<TokenId> ctx;
    ctx.reserve(samples[i].context.size());
    for (const std::string& tok : samples[i].context) ctx.push_back(vocab.id(tok));
    const DecodeResult r = greedy_decode(model, ctx, options);
    out[i] = decode_tokens(vocab, r.tokens);
  };
  threads = std::max<std::size_t>(1, std::min(threads, samples.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < samples.size(); ++i) decode_one(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < samples.size(); i = next++) decode_one(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

double regularized_incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(log_front) * beta_cf(x, a, b) / a;
  }
  return 1.0 - std::exp(log_front) * beta_cf(1.0 - x, b, a) / b;
}

double student_t_two_tailed(double t, double df) {
  if (!(df > 0.0)) throw DomainError("degrees of freedom must be positive");
  if (std::isnan(t)) throw DomainError("t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5);
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("paired t-test needs equal lengths, got " +
                         std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  const std::size_t n = a.size();
  if (n < 2) throw DomainError("paired t-test needs at least 2 pairs");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  TTestResult r;
  r.df = n - 1;
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) {
    if (mean == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = mean > 0 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
    return r;
  }
  r.t = mean * std::sqrt(static_cast<double>(n)) / sd;
  r.p = student_t_two_tailed(r.t, static_cast<double>(r.df));
  return r;
}

}  // namespace tokmoe
