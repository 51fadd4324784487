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

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tokmoe/app.hpp"
#include "tokmoe/error.hpp"

namespace {

using namespace tokmoe;

std::string flag_name(std::string key) {
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  return "--" + key;
}

std::optional<std::string> env_seed() {
  const char* v = std::getenv("TOKMOE_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

int run(int argc, char** argv) {
  CLI::App cli{"Token-level mixture-of-experts dialogue generator"};
  cli.require_subcommand(1);

  // synth
  app::SynthOptions synth;
  std::string synth_out = ".";
  auto* synth_cmd = cli.add_subcommand("synth", "Write a seeded synthetic multi-intent corpus");
  synth_cmd->add_option("--intents", synth.spec.intents, "Number of intents")
      ->check(CLI::Validator(
          [](std::string& v) -> std::string {
            std::size_t n = 0;
            const bool ok = CLI::detail::lexical_cast(v, n) && n >= 2;
            return ok ? std::string() : "needs an integer of at least 2";
          },
          "INT>=2"));
  synth_cmd->add_option("--per-intent", synth.spec.samples_per_intent, "Samples per intent")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--shared-vocab", synth.spec.shared_vocab, "Shared word count");
  synth_cmd->add_option("--per-intent-vocab", synth.spec.per_intent_vocab,
                        "Exclusive words per intent");
  synth_cmd->add_option("--seed", synth.spec.seed, "Generator seed");
  synth_cmd->add_option("--out", synth_out, "Output directory");
  synth_cmd->add_option("--split", synth.split, "train valid test fractions")
      ->expected(3);

  // train
  std::string train_config;
  std::map<std::string, std::string> train_flags;
  auto* train_cmd = cli.add_subcommand("train", "Train a model from a config file and flags");
  train_cmd->add_option("--config", train_config, "key = value file or run manifest");
  for (const std::string& key : RunConfig::keys()) {
    train_cmd->add_option_function<std::string>(
        flag_name(key), [&train_flags, key](const std::string& v) { train_flags[key] = v; },
        "Overrides config key " + key);
  }

  // evaluate
  app::EvaluateOptions eval;
  std::string eval_ckpt;
  std::string eval_corpus;
  auto* eval_cmd = cli.add_subcommand("evaluate", "Greedy-decode a corpus and report metrics");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
  eval_cmd->add_option("--corpus", eval_corpus, "JSONL corpus")->required();
  eval_cmd->add_option("--max-len", eval.max_len, "Maximum response length");
  eval_cmd->add_option("--threads", eval.threads, "Decoding workers")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--json", eval.json, "Emit JSON instead of a table");

  // generate
  app::GenerateOptions gen;
  std::string gen_ckpt;
  auto* gen_cmd = cli.add_subcommand("generate", "Greedy-decode one context");
  gen_cmd->add_option("--checkpoint", gen_ckpt, "Checkpoint path")->required();
  gen_cmd->add_option("--context", gen.context, "Whitespace-separated context")->required();
  gen_cmd->add_option("--max-len", gen.max_len, "Maximum response length");
  gen_cmd->add_flag("--trace", gen.trace, "Print the gating weights of every step");

  // gradcheck
  app::GradcheckOptions gc;
  std::string gc_config;
  auto* gc_cmd = cli.add_subcommand("gradcheck", "Finite-difference check of all gradients");
  gc_cmd->add_option("--config", gc_config, "key = value file");
  auto* gc_hidden = gc_cmd->add_option("--hidden-size", gc.hidden_size, "Hidden size");
  auto* gc_emb = gc_cmd->add_option("--embedding-size", gc.embedding_size, "Embedding size");
  auto* gc_seed = gc_cmd->add_option("--seed", gc.seed, "Initialization seed");
  gc_cmd->add_option("--epsilon", gc.epsilon, "Finite-difference step");
  gc_cmd->add_flag("--inject-fault", gc.inject_fault)->group("");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "E_USAGE: " << e.what() << "\n";
    return 2;
  }

  if (*synth_cmd) {
    synth.out_dir = synth_out;
    app::run_synth(synth, std::cout);
  } else if (*train_cmd) {
    RunConfig cfg;
    if (!train_config.empty()) cfg = app::load_config_file(train_config);
    if (auto s = env_seed()) cfg.set("seed", *s);
    for (const auto& [key, value] : train_flags) cfg.set(key, value);
    app::run_train(std::move(cfg), std::cout);
  } else if (*eval_cmd) {
    eval.checkpoint = eval_ckpt;
    eval.corpus = eval_corpus;
    app::run_evaluate(eval, std::cout);
  } else if (*gen_cmd) {
    gen.checkpoint = gen_ckpt;
    app::run_generate(gen, std::cout);
  } else if (*gc_cmd) {
    if (!gc_config.empty()) {
      const RunConfig file = app::load_config_file(gc_config);
      auto has = [&](const char* k) { return file.explicit_keys.count(k) > 0; };
      if (has("hidden_size") && gc_hidden->count() == 0) gc.hidden_size = file.hidden_size;
      if (has("embedding_size") && gc_emb->count() == 0) gc.embedding_size = file.embedding_size;
      if (has("gate_hidden")) gc.gate_hidden = file.gate_hidden;
      if (has("gate_size")) gc.gate_size = file.gate_size;
      if (has("init_range")) gc.init_range = file.init_range;
      if (has("seed") && gc_seed->count() == 0) gc.seed = file.seed;
    }
    if (auto s = env_seed(); s && gc_seed->count() == 0) {
      RunConfig tmp;
      tmp.set("seed", *s);
      gc.seed = tmp.seed;
    }
    const auto lines = app::run_gradcheck(gc, std::cout);
    for (const auto& line : lines) {
      if (!(line.max_rel_error < app::kGradcheckTolerance)) return 1;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const app::UsageError& e) {
    std::cerr << e.code() << ": " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << e.code() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "E_INTERNAL: " << e.what() << "\n";
    return 1;
  }
}
