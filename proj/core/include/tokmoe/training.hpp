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

#ifndef TOKMOE_TRAINING_HPP_
#define TOKMOE_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tokmoe/data.hpp"
#include "tokmoe/model.hpp"
#include "tokmoe/params.hpp"
#include "tokmoe/random.hpp"

namespace tokmoe {

// Learning schemes:
//   S1  mixture, mu and lambda learnable
//   S2  mixture, lambda fixed at 0 (chair loss only)
//   S3  no mixture (chair's own distribution), mu = 1/k, lambda = 0.5
//   S4  mixture, mu = 1/k, lambda = 0.5
enum class Scheme { kS1, kS2, kS3, kS4 };
enum class MuMode { kLearnable, kUniform, kUnused };
enum class LambdaMode { kLearnable, kFixed };

std::string_view scheme_name(Scheme scheme);
Scheme parse_scheme(std::string_view name);

struct SchemeConfig {
  Scheme scheme = Scheme::kS4;
  bool moe_enabled = true;
  MuMode mu_mode = MuMode::kUniform;
  LambdaMode lambda_mode = LambdaMode::kFixed;
  double lambda_value = 0.5;

  static SchemeConfig for_scheme(Scheme scheme);
  // Throws ConfigError unless the fields match the scheme's row.
  void validate() const;
};

struct VariantConfig {
  bool attention_enabled = true;
  CellKind cell = CellKind::kLstm;
  std::size_t hidden_size = 150;
  std::size_t embedding_size = 50;

  static VariantConfig baseline() { return {}; }
  static VariantConfig v1();  // no attention
  static VariantConfig v2();  // GRU cells
  static VariantConfig v3();  // 100 hidden units
  void validate() const;
};

enum class ClipMode { kValue, kNorm };

struct OptimizerConfig {
  double alpha = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip = 5.0;
  ClipMode clip_mode = ClipMode::kValue;
  double l2_weight = 1e-5;
  std::size_t batch_size = 64;

  void validate() const;
};

// Loss weights in effect for one batch. mu has one entry per expert; the
// chair's own local term always uses chair_mu.
struct LossWeights {
  std::vector<double> mu;
  double chair_mu = 1.0;
  double lambda = 0.0;
};

struct LossReport {
  // Weighted local loss per decoder (experts then chair); sums to the
  // expert loss.
  std::vector<double> expert_losses;
  double chair_loss = 0.0;
  double total = 0.0;
  std::size_t token_count = 0;
  double lambda = 0.0;
  std::vector<double> mu;
  std::vector<LossReport> batches;  // filled by train_epoch, sums not means

  double expert_loss() const;
};

struct LearnedWeights {
  std::vector<double> mu;
  double lambda = 0.0;
};

// mu = softmax(raw_mu_logits), lambda = sigmoid(raw_lambda_logit). S1 only.
LearnedWeights learnable_weights_forward(const SchemeConfig& scheme,
                                         std::span<const double> raw_mu_logits,
                                         double raw_lambda_logit);

// -log(max(p, floor)).
double token_nll(double p);

// Localized expert loss. Sample s contributes its own expert's NLL
// (weighted by mu[expert]) plus the chair decoder's NLL (weighted by
// chair_mu). experts[s] is ignored for single-decoder models.
double loss_experts(const std::vector<std::vector<StepOutput>>& steps,
                    const std::vector<std::vector<TokenId>>& targets,
                    std::span<const std::size_t> experts,
                    const LossWeights& weights);
// NLL of the combined distribution summed over samples and steps.
double loss_chair(const std::vector<std::vector<StepOutput>>& steps,
                  const std::vector<std::vector<TokenId>>& targets);
// lambda * experts + (1 - lambda) * chair; lambda must lie in [0, 1].
double loss_total(double expert_loss, double chair_loss, double lambda);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

void add_l2(ParamStore& params, double weight);
void clip_gradients(ParamStore& params, double clip, ClipMode mode = ClipMode::kValue);
// Bias-corrected Adam. Moments are created lazily for new slots.
void adam_step(const OptimizerConfig& opt, ParamStore& params, AdamState& state);

struct TeacherForcedStats {
  double accuracy = 0.0;  // argmax of combined == gold
  std::size_t tokens = 0;
  std::vector<double> decoder_nll;  // per-token NLL of each decoder's own output
  double combined_nll = 0.0;
};

TeacherForcedStats teacher_forced_stats(const TokenMoeModel& model,
                                        std::span<const EncodedSample> samples);

// Drives the joint objective for one model. Experts are assigned to intent
// labels in the given order.
class Trainer {
 public:
  Trainer(TokenMoeModel& model, SchemeConfig scheme, OptimizerConfig opt,
          std::vector<std::string> intents, std::uint64_t seed);

  const SchemeConfig& scheme() const { return scheme_; }
  const OptimizerConfig& optimizer() const { return opt_; }
  const AdamState& adam() const { return adam_; }
  std::size_t expert_for(const std::string& intent) const;
  LossWeights weights() const;

  // Shuffles, then runs forward/backward/step per mini-batch. Returns
  // token-averaged losses with per-batch sums attached.
  LossReport train_epoch(std::span<const EncodedSample> corpus);
  // Summed losses at the current parameters; no gradients.
  LossReport evaluate(std::span<const EncodedSample> samples) const;
  // Forward and backward over a batch; gradients accumulate into the slots.
  LossReport accumulate(std::span<const EncodedSample> batch,
                        const BackwardOptions& options = {});
  // l2, clip, Adam, zero gradients.
  void step();

 private:
  LossReport run_batch(std::span<const EncodedSample> batch, bool with_grad,
                       const BackwardOptions& options) const;

  TokenMoeModel& model_;
  SchemeConfig scheme_;
  OptimizerConfig opt_;
  std::vector<std::string> intents_;
  Rng rng_;
  AdamState adam_;
  std::optional<SlotId> mu_logits_;
  std::optional<SlotId> lambda_logit_;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_slot;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
  double max_abs_grad = 0.0;
};

// Relative error with the denominator floored so coordinates whose true
// gradient is zero compare on an absolute scale.
inline constexpr double kGradCheckFloor = 1e-5;
double relative_error(double analytic, double numeric);

// Compares the analytic gradient of the total loss on one sample with
// central differences for every scalar of every slot. The model is copied.
GradCheckResult grad_check(const TokenMoeModel& model, const EncodedSample& sample,
                           const SchemeConfig& scheme,
                           const std::vector<std::string>& intents,
                           double epsilon = 1e-5,
                           const BackwardOptions& options = {});

}  // namespace tokmoe

#endif  // TOKMOE_TRAINING_HPP_
