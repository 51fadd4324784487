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

#include "tokmoe/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tokmoe/error.hpp"
#include "tokmoe/tensor.hpp"

namespace tokmoe {

std::string_view scheme_name(Scheme scheme) {
  switch (scheme) {
    case Scheme::kS1:
      return "S1";
    case Scheme::kS2:
      return "S2";
    case Scheme::kS3:
      return "S3";
    case Scheme::kS4:
      return "S4";
  }
  return "S4";
}

Scheme parse_scheme(std::string_view name) {
  if (name == "S1" || name == "s1") return Scheme::kS1;
  if (name == "S2" || name == "s2") return Scheme::kS2;
  if (name == "S3" || name == "s3") return Scheme::kS3;
  if (name == "S4" || name == "s4") return Scheme::kS4;
  throw ConfigError("unknown scheme '" + std::string(name) + "' (expected S1..S4)");
}

SchemeConfig SchemeConfig::for_scheme(Scheme scheme) {
  SchemeConfig c;
  c.scheme = scheme;
  switch (scheme) {
    case Scheme::kS1:
      c.moe_enabled = true;
      c.mu_mode = MuMode::kLearnable;
      c.lambda_mode = LambdaMode::kLearnable;
      c.lambda_value = 0.5;
      break;
    case Scheme::kS2:
      c.moe_enabled = true;
      c.mu_mode = MuMode::kUnused;
      c.lambda_mode = LambdaMode::kFixed;
      c.lambda_value = 0.0;
      break;
    case Scheme::kS3:
      c.moe_enabled = false;
      c.mu_mode = MuMode::kUniform;
      c.lambda_mode = LambdaMode::kFixed;
      c.lambda_value = 0.5;
      break;
    case Scheme::kS4:
      c.moe_enabled = true;
      c.mu_mode = MuMode::kUniform;
      c.lambda_mode = LambdaMode::kFixed;
      c.lambda_value = 0.5;
      break;
  }
  return c;
}

void SchemeConfig::validate() const {
  const SchemeConfig expected = for_scheme(scheme);
  if (moe_enabled != expected.moe_enabled || mu_mode != expected.mu_mode ||
      lambda_mode != expected.lambda_mode) {
    throw ConfigError("scheme " + std::string(scheme_name(scheme)) +
                      " fields do not match its definition");
  }
  if (lambda_mode == LambdaMode::kFixed && lambda_value != expected.lambda_value) {
    throw ConfigError("scheme " + std::string(scheme_name(scheme)) +
                      " fixes lambda = " + std::to_string(expected.lambda_value) +
                      ", got " + std::to_string(lambda_value));
  }
}

VariantConfig VariantConfig::v1() {
  VariantConfig v;
  v.attention_enabled = false;
  return v;
}

VariantConfig VariantConfig::v2() {
  VariantConfig v;
  v.cell = CellKind::kGru;
  return v;
}

VariantConfig VariantConfig::v3() {
  VariantConfig v;
  v.hidden_size = 100;
  return v;
}

void VariantConfig::validate() const {
  if (hidden_size == 0 || embedding_size == 0) {
    throw ConfigError("hidden_size and embedding_size must be at least 1");
  }
}

void OptimizerConfig::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be nonnegative");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("beta1 and beta2 must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(clip > 0.0)) throw ConfigError("clip must be positive");
  if (!(l2_weight >= 0.0)) throw ConfigError("l2_weight must be nonnegative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
}

double LossReport::expert_loss() const {
  double sum = 0.0;
  for (double v : expert_losses) sum += v;
  return sum;
}

LearnedWeights learnable_weights_forward(const SchemeConfig& scheme,
                                         std::span<const double> raw_mu_logits,
                                         double raw_lambda_logit) {
  if (scheme.mu_mode != MuMode::kLearnable ||
      scheme.lambda_mode != LambdaMode::kLearnable) {
    throw ConfigError("learnable loss weights are only defined for scheme S1");
  }
  LearnedWeights w;
  w.mu.assign(raw_mu_logits.begin(), raw_mu_logits.end());
  if (!w.mu.empty()) kernels::softmax_inplace(w.mu);
  w.lambda = kernels::sigmoid(raw_lambda_logit);
  return w;
}

double token_nll(double p) { return -std::log(std::max(p, kProbFloor)); }

namespace {

double nll_grad(double p) { return p > kProbFloor ? -1.0 / p : 0.0; }

}  // namespace

double loss_experts(const std::vector<std::vector<StepOutput>>& steps,
                    const std::vector<std::vector<TokenId>>& targets,
                    std::span<const std::size_t> experts,
                    const LossWeights& weights) {
  if (steps.size() != targets.size() || steps.size() != experts.size()) {
    throw DimensionError("loss_experts: sample counts differ");
  }
  double total = 0.0;
  for (std::size_t s = 0; s < steps.size(); ++s) {
    if (steps[s].size() != targets[s].size()) {
      throw DimensionError("loss_experts: step count differs from target length");
    }
    for (std::size_t j = 0; j < steps[s].size(); ++j) {
      const StepOutput& step = steps[s][j];
      const TokenId y = targets[s][j];
      const std::size_t chair = step.per_expert_dists.size() - 1;
      if (chair > 0) {
        const std::size_t e = experts[s];
        if (e >= chair || e >= weights.mu.size()) {
          throw ConfigError("loss_experts: sample " + std::to_string(s) +
                            " has no assigned expert");
        }
        total += weights.mu[e] * token_nll(step.per_expert_dists[e][y]);
      }
      total += weights.chair_mu * token_nll(step.per_expert_dists[chair][y]);
    }
  }
  return total;
}

double loss_chair(const std::vector<std::vector<StepOutput>>& steps,
                  const std::vector<std::vector<TokenId>>& targets) {
  if (steps.size() != targets.size()) {
    throw DimensionError("loss_chair: sample counts differ");
  }
  double total = 0.0;
  for (std::size_t s = 0; s < steps.size(); ++s) {
    if (steps[s].size() != targets[s].size()) {
      throw DimensionError("loss_chair: step count differs from target length");
    }
    for (std::size_t j = 0; j < steps[s].size(); ++j) {
      total += token_nll(steps[s][j].combined[targets[s][j]]);
    }
  }
  return total;
}

double loss_total(double expert_loss, double chair_loss, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
  return lambda * expert_loss + (1.0 - lambda) * chair_loss;
}

void add_l2(ParamStore& params, double weight) {
  if (weight == 0.0) return;
  for (ParamSlot& slot : params) {
    auto g = slot.grad.values();
    auto v = slot.value.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += weight * v[i];
  }
}

void clip_gradients(ParamStore& params, double clip, ClipMode mode) {
  if (mode == ClipMode::kValue) {
    for (ParamSlot& slot : params) {
      for (double& g : slot.grad.values()) g = std::clamp(g, -clip, clip);
    }
    return;
  }
  double sq = 0.0;
  for (const ParamSlot& slot : params) {
    for (double g : slot.grad.values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= clip || !std::isfinite(norm)) {
    if (std::isfinite(norm)) return;
    // Overflowed norm: fall back to value clamping so the step stays finite.
    clip_gradients(params, clip, ClipMode::kValue);
    return;
  }
  const double scale = clip / norm;
  for (ParamSlot& slot : params) {
    for (double& g : slot.grad.values()) g *= scale;
  }
}

void adam_step(const OptimizerConfig& opt, ParamStore& params, AdamState& state) {
  while (state.m.size() < params.size()) {
    const Tensor& v = params.slot(state.m.size()).value;
    state.m.push_back(Tensor::zeros_like(v));
    state.v.push_back(Tensor::zeros_like(v));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t s = 0; s < params.size(); ++s) {
    auto theta = params.slot(s).value.values();
    auto g = params.slot(s).grad.values();
    auto m = state.m[s].values();
    auto v = state.v[s].values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= opt.alpha * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    }
  }
}

TeacherForcedStats teacher_forced_stats(const TokenMoeModel& model,
                                        std::span<const EncodedSample> samples) {
  TeacherForcedStats stats;
  const std::size_t n_dec = model.config().decoder_count();
  stats.decoder_nll.assign(n_dec, 0.0);
  std::size_t correct = 0;
  for (const EncodedSample& s : samples) {
    const auto steps = forward_teacher_forced(model, s.context, s.response);
    for (std::size_t j = 0; j < steps.size(); ++j) {
      const TokenId y = s.response[j];
      if (argmax(steps[j].combined) == y) ++correct;
      for (std::size_t l = 0; l < n_dec; ++l) {
        stats.decoder_nll[l] += token_nll(steps[j].per_expert_dists[l][y]);
      }
      stats.combined_nll += token_nll(steps[j].combined[y]);
      ++stats.tokens;
    }
  }
  if (stats.tokens > 0) {
    const double n = static_cast<double>(stats.tokens);
    stats.accuracy = static_cast<double>(correct) / n;
    for (double& v : stats.decoder_nll) v /= n;
    stats.combined_nll /= n;
  }
  return stats;
}

Trainer::Trainer(TokenMoeModel& model, SchemeConfig scheme, OptimizerConfig opt,
                 std::vector<std::string> intents, std::uint64_t seed)
    : model_(model),
      scheme_(scheme),
      opt_(opt),
      intents_(std::move(intents)),
      rng_(seed) {
  scheme_.validate();
  opt_.validate();
  const ModelConfig& mc = model_.config();
  const std::size_t k = mc.num_experts;
  if (k > 0) {
    if (intents_.size() != k) {
      throw ConfigError("model has " + std::to_string(k) + " experts but " +
                        std::to_string(intents_.size()) + " intents were given");
    }
    if (mc.gated() != scheme_.moe_enabled) {
      throw ConfigError("scheme " + std::string(scheme_name(scheme_.scheme)) +
                        (scheme_.moe_enabled ? " needs" : " forbids") +
                        " a gated mixture model");
    }
  } else if (scheme_.mu_mode == MuMode::kLearnable) {
    throw ConfigError("scheme S1 needs at least one expert");
  }
  if (scheme_.mu_mode == MuMode::kLearnable) {
    ParamStore& store = model_.params();
    mu_logits_ = store.find("loss.mu_logits");
    if (!mu_logits_) mu_logits_ = store.add("loss.mu_logits", {k});
    lambda_logit_ = store.find("loss.lambda_logit");
    if (!lambda_logit_) lambda_logit_ = store.add("loss.lambda_logit", {1});
  }
}

std::size_t Trainer::expert_for(const std::string& intent) const {
  auto it = std::find(intents_.begin(), intents_.end(), intent);
  if (it == intents_.end()) {
    throw ConfigError("intent '" + intent + "' has no assigned expert");
  }
  return static_cast<std::size_t>(it - intents_.begin());
}

LossWeights Trainer::weights() const {
  const std::size_t k = model_.config().num_experts;
  LossWeights w;
  if (k == 0) {
    w.chair_mu = 1.0;
    w.lambda = 0.0;
    return w;
  }
  const double uniform = 1.0 / static_cast<double>(k);
  w.chair_mu = uniform;
  if (scheme_.mu_mode == MuMode::kLearnable) {
    const ParamStore& store = model_.params();
    LearnedWeights lw = learnable_weights_forward(
        scheme_, store.value(*mu_logits_).values(), store.value(*lambda_logit_)[0]);
    w.mu = std::move(lw.mu);
    w.lambda = lw.lambda;
  } else {
    w.mu.assign(k, uniform);
    w.lambda = scheme_.lambda_value;
  }
  return w;
}

LossReport Trainer::run_batch(std::span<const EncodedSample> batch,
                              bool with_grad, const BackwardOptions& options) const {
  const ModelConfig& mc = model_.config();
  const std::size_t k = mc.num_experts;
  const std::size_t n_dec = mc.decoder_count();
  const std::size_t chair = mc.chair_index();
  const LossWeights w = weights();

  LossReport report;
  report.expert_losses.assign(n_dec, 0.0);
  report.lambda = w.lambda;
  report.mu = w.mu;
  std::vector<double> raw_expert_nll(k, 0.0);

  for (const EncodedSample& sample : batch) {
    const ForwardTrace trace = forward_trace(model_, sample.context, sample.response);
    const std::size_t e = k > 0 ? expert_for(sample.intent) : 0;
    double nll_expert = 0.0;
    double nll_chair_own = 0.0;
    double nll_combined = 0.0;
    std::vector<StepGradient> grads;
    if (with_grad) grads.resize(trace.steps.size());
    for (std::size_t j = 0; j < trace.steps.size(); ++j) {
      const StepOutput& step = trace.steps[j];
      const TokenId y = sample.response[j];
      const double p_chair = step.per_expert_dists[chair][y];
      const double p_comb = step.combined[y];
      nll_chair_own += token_nll(p_chair);
      nll_combined += token_nll(p_comb);
      if (with_grad) {
        StepGradient& g = grads[j];
        g.d_dists.resize(n_dec);
        g.d_dists[chair].assign(mc.vocab_size, 0.0);
        g.d_dists[chair][y] = w.lambda * w.chair_mu * nll_grad(p_chair);
        g.d_combined.assign(mc.vocab_size, 0.0);
        g.d_combined[y] = (1.0 - w.lambda) * nll_grad(p_comb);
      }
      if (k > 0) {
        const double p_e = step.per_expert_dists[e][y];
        nll_expert += token_nll(p_e);
        if (with_grad) {
          grads[j].d_dists[e].assign(mc.vocab_size, 0.0);
          grads[j].d_dists[e][y] = w.lambda * w.mu[e] * nll_grad(p_e);
        }
      }
    }
    if (k > 0) {
      report.expert_losses[e] += w.mu[e] * nll_expert;
      raw_expert_nll[e] += nll_expert;
    }
    report.expert_losses[chair] += w.chair_mu * nll_chair_own;
    report.chair_loss += nll_combined;
    report.token_count += trace.steps.size();
    if (with_grad) backward(model_, trace, grads, options);
  }

  report.total = loss_total(report.expert_loss(), report.chair_loss, w.lambda);

  if (with_grad && scheme_.mu_mode == MuMode::kLearnable) {
    ParamStore& store = model_.params();
    const double lam = w.lambda;
    store.grad(*lambda_logit_)[0] +=
        (report.expert_loss() - report.chair_loss) * lam * (1.0 - lam);
    std::vector<double> d_mu(k);
    for (std::size_t l = 0; l < k; ++l) d_mu[l] = lam * raw_expert_nll[l];
    std::vector<double> d_logits(k);
    kernels::softmax_backward(w.mu, d_mu, d_logits);
    auto g = store.grad(*mu_logits_).values();
    for (std::size_t l = 0; l < k; ++l) g[l] += d_logits[l];
  }
  return report;
}

LossReport Trainer::evaluate(std::span<const EncodedSample> samples) const {
  return run_batch(samples, false, {});
}

LossReport Trainer::accumulate(std::span<const EncodedSample> batch,
                               const BackwardOptions& options) {
  return run_batch(batch, true, options);
}

void Trainer::step() {
  ParamStore& params = model_.params();
  add_l2(params, opt_.l2_weight);
  clip_gradients(params, opt_.clip, opt_.clip_mode);
  adam_step(opt_, params, adam_);
  params.zero_grad();
}

LossReport Trainer::train_epoch(std::span<const EncodedSample> corpus) {
  if (corpus.empty()) throw DataError("cannot train on an empty corpus");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng_.shuffle(order);

  const std::size_t n_dec = model_.config().decoder_count();
  LossReport epoch;
  epoch.expert_losses.assign(n_dec, 0.0);
  model_.params().zero_grad();
  for (std::size_t start = 0; start < order.size(); start += opt_.batch_size) {
    const std::size_t end = std::min(order.size(), start + opt_.batch_size);
    std::vector<EncodedSample> batch;
    batch.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) batch.push_back(corpus[order[i]]);
    LossReport r = accumulate(batch);
    step();
    for (std::size_t l = 0; l < n_dec; ++l) epoch.expert_losses[l] += r.expert_losses[l];
    epoch.chair_loss += r.chair_loss;
    epoch.total += r.total;
    epoch.token_count += r.token_count;
    epoch.batches.push_back(std::move(r));
  }
  const double n = static_cast<double>(epoch.token_count);
  for (double& v : epoch.expert_losses) v /= n;
  epoch.chair_loss /= n;
  epoch.total /= n;
  const LossWeights w = weights();
  epoch.lambda = w.lambda;
  epoch.mu = w.mu;
  return epoch;
}

double relative_error(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const TokenMoeModel& model, const EncodedSample& sample,
                           const SchemeConfig& scheme,
                           const std::vector<std::string>& intents,
                           double epsilon, const BackwardOptions& options) {
  TokenMoeModel copy = model;
  Trainer trainer(copy, scheme, OptimizerConfig{}, intents, 0);
  ParamStore& params = copy.params();
  params.zero_grad();
  const std::vector<EncodedSample> batch{sample};
  trainer.accumulate(batch, options);

  GradCheckResult result;
  for (SlotId s = 0; s < params.size(); ++s) {
    const Tensor analytic = params.slot(s).grad;
    auto values = params.slot(s).value.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double plus = trainer.evaluate(batch).total;
      values[i] = saved - epsilon;
      const double minus = trainer.evaluate(batch).total;
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double err = relative_error(analytic[i], numeric);
      ++result.coordinates;
      result.max_abs_grad = std::max(result.max_abs_grad, std::abs(analytic[i]));
      if (err > result.max_rel_error || result.coordinates == 1) {
        result.max_rel_error = std::max(result.max_rel_error, err);
        result.worst_slot = params.slot(s).name;
        result.worst_index = i;
        result.analytic = analytic[i];
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace tokmoe
