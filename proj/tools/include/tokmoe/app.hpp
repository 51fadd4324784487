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

#ifndef TOKMOE_APP_HPP_
#define TOKMOE_APP_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tokmoe/config.hpp"
#include "tokmoe/data.hpp"
#include "tokmoe/error.hpp"
#include "tokmoe/eval.hpp"
#include "tokmoe/model.hpp"
#include "tokmoe/training.hpp"

namespace tokmoe::app {

// Bad command-line usage. Reported with exit status 2.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("E_USAGE", what) {}
};

// A checkpoint plus its vocabulary sidecar.
struct Bundle {
  TokenMoeModel model;
  Vocabulary vocab;
  std::vector<std::string> intents;
};

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);
void save_bundle(const std::filesystem::path& checkpoint, const TokenMoeModel& model,
                 const Vocabulary& vocab, const std::vector<std::string>& intents);
Bundle load_bundle(const std::filesystem::path& checkpoint);

std::string hex64(std::uint64_t value);

// Reads a `key = value` file, or the "config" object of a run manifest.
RunConfig load_config_file(const std::filesystem::path& path);

struct SynthOptions {
  SynthSpec spec;
  std::filesystem::path out_dir = ".";
  std::array<double, 3> split{0.8, 0.1, 0.1};
};

void run_synth(const SynthOptions& options, std::ostream& out);

struct EpochRecord {
  std::size_t epoch = 0;
  LossReport loss;
  std::optional<double> valid_score;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path manifest;
  std::uint64_t checkpoint_fnv = 0;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
  TeacherForcedStats train_stats;  // of the saved parameters
};

// Loads corpora, trains, keeps the epoch with the best validation Score,
// writes checkpoint, sidecar and manifest.
TrainResult run_train(RunConfig config, std::ostream& out);

struct EvaluateOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path corpus;
  std::size_t max_len = 50;
  std::size_t threads = 1;
  bool json = false;
};

MetricsReport run_evaluate(const EvaluateOptions& options, std::ostream& out);

struct GenerateOptions {
  std::filesystem::path checkpoint;
  std::string context;
  std::size_t max_len = 50;
  bool trace = false;
};

std::vector<std::string> run_generate(const GenerateOptions& options, std::ostream& out);

struct GradcheckOptions {
  std::size_t hidden_size = 3;
  std::size_t embedding_size = 3;
  std::size_t gate_hidden = 4;
  std::size_t gate_size = 3;
  double init_range = 0.5;
  std::uint64_t seed = 1;
  double epsilon = 1e-5;
  bool inject_fault = false;
};

inline constexpr double kGradcheckTolerance = 1e-4;
inline constexpr std::size_t kGradcheckMaxHidden = 8;

struct GradcheckLine {
  Scheme scheme = Scheme::kS1;
  double max_rel_error = 0.0;
  std::string worst;  // variant/slot[index]
};

// One line per scheme, each the worst case over base, V1, V2 and V3.
std::vector<GradcheckLine> run_gradcheck(const GradcheckOptions& options, std::ostream& out);

}  // namespace tokmoe::app

#endif  // TOKMOE_APP_HPP_
