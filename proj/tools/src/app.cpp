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

#include "tokmoe/app.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <system_error>

#include <nlohmann/json.hpp>

#include "tokmoe/checkpoint.hpp"
#include "tokmoe/error.hpp"

namespace tokmoe::app {

namespace fs = std::filesystem;

namespace {

using nlohmann::json;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

json parse_json(const std::string& text, const std::filesystem::path& path) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

json corpus_entry(const std::string& path) {
  if (path.empty()) return nullptr;
  return {{"path", path}, {"fnv1a64", hex64(fnv1a64(read_file(path)))}};
}

std::string loss_line(std::size_t epoch, const LossReport& r,
                      const std::optional<double>& valid_score) {
  std::ostringstream line;
  line << "epoch " << epoch << " total=" << fmt("%.6f", r.total)
       << " experts=" << fmt("%.6f", r.expert_loss())
       << " chair=" << fmt("%.6f", r.chair_loss) << " lambda=" << fmt("%.4f", r.lambda)
       << " tokens=" << r.token_count;
  if (valid_score) line << " valid_score=" << fmt("%.4f", *valid_score);
  return line.str();
}

}  // namespace

std::string hex64(std::uint64_t value) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  return checkpoint.string() + ".vocab.json";
}

void save_bundle(const std::filesystem::path& checkpoint, const TokenMoeModel& model,
                 const Vocabulary& vocab, const std::vector<std::string>& intents) {
  const std::string bytes = serialize_checkpoint(model.params());
  write_file_atomic(checkpoint, bytes);
  json side = {{"tokens", vocab.tokens()},
               {"intents", intents},
               {"checkpoint_fnv1a64", hex64(fnv1a64(bytes))}};
  write_file_atomic(sidecar_path(checkpoint), side.dump(1) + "\n");
}

Bundle load_bundle(const std::filesystem::path& checkpoint) {
  const std::string bytes = read_file(checkpoint);
  ParamStore params = parse_checkpoint(bytes);
  const std::filesystem::path side_path = sidecar_path(checkpoint);
  const json side = parse_json(read_file(side_path), side_path);
  try {
    if (side.at("checkpoint_fnv1a64").get<std::string>() != hex64(fnv1a64(bytes))) {
      throw IntegrityError(side_path.string() + " belongs to a different checkpoint");
    }
    Vocabulary vocab =
        Vocabulary::from_tokens(side.at("tokens").get<std::vector<std::string>>());
    auto intents = side.at("intents").get<std::vector<std::string>>();
    TokenMoeModel model = TokenMoeModel::from_params(std::move(params));
    if (model.config().vocab_size != vocab.size()) {
      throw IntegrityError("checkpoint vocabulary size " +
                           std::to_string(model.config().vocab_size) +
                           " differs from sidecar size " + std::to_string(vocab.size()));
    }
    return Bundle{std::move(model), std::move(vocab), std::move(intents)};
  } catch (const json::exception& e) {
    throw ParseError(side_path.string() + ": " + e.what());
  }
}

RunConfig load_config_file(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos || text[first] != '{') return parse_run_config(text);
  const json manifest = parse_json(text, path);
  if (!manifest.contains("config") || !manifest["config"].is_object()) {
    throw ConfigError(path.string() + ": manifest has no config object");
  }
  RunConfig cfg;
  for (const std::string& key : RunConfig::keys()) {
    auto it = manifest["config"].find(key);
    if (it != manifest["config"].end()) cfg.set(key, it->get<std::string>());
  }
  return cfg;
}

void run_synth(const SynthOptions& options, std::ostream& out) {
  options.spec.validate();
  const Corpus corpus = generate_synthetic_corpus(options.spec);
  const CorpusSplits splits = split_corpus(corpus, options.split, options.spec.seed);
  std::error_code ec;
  std::filesystem::create_directories(options.out_dir, ec);
  if (ec) {
    throw IoError("cannot create " + options.out_dir.string() + ": " + ec.message());
  }
  save_corpus_jsonl(options.out_dir / "train.jsonl", splits.train);
  save_corpus_jsonl(options.out_dir / "valid.jsonl", splits.valid);
  save_corpus_jsonl(options.out_dir / "test.jsonl", splits.test);
  out << "intents=" << options.spec.intents << " samples=" << corpus.samples.size()
      << " train=" << splits.train.samples.size()
      << " valid=" << splits.valid.samples.size()
      << " test=" << splits.test.samples.size() << "\n";
}

TrainResult run_train(RunConfig config, std::ostream& out) {
  config.resolve();
  if (config.train_path.empty()) throw ConfigError("train corpus path is required");

  const Corpus train = load_corpus_jsonl(config.train_path, Split::kTrain);
  Corpus valid{{}, Split::kValid};
  if (!config.valid_path.empty()) valid = load_corpus_jsonl(config.valid_path, Split::kValid);

  for (const fs::path& p : {fs::path(config.output), fs::path(config.manifest_path())}) {
    std::error_code ec;
    if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create '" + p.parent_path().string() + "': " + ec.message());
  }

  const Vocabulary vocab = build_vocab(train, config.vocab_cap);
  const std::vector<std::string> intents = intent_labels(train);
  const std::size_t k = config.experts.value_or(intents.size());
  if (k != 0 && k != intents.size()) {
    throw ConfigError("experts = " + std::to_string(k) + " but the training corpus has " +
                      std::to_string(intents.size()) + " intents");
  }
  if (k == 0 && config.scheme != Scheme::kS3) {
    throw ConfigError("scheme " + std::string(scheme_name(config.scheme)) +
                      " needs at least one expert");
  }
  const ModelConfig mc = config.model_config(vocab.size(), k);
  TokenMoeModel model(mc);
  Trainer trainer(model, config.scheme_config(), config.optimizer, intents, config.seed);

  const std::vector<EncodedSample> encoded = encode_corpus(vocab, train);
  TrainResult result;
  ParamStore best = model.params();
  std::optional<double> best_score;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = trainer.train_epoch(encoded);
    rec.loss.batches.clear();
    if (!valid.samples.empty()) {
      const auto gen = generate_responses(model, vocab, valid.samples, config.max_len,
                                          config.threads);
      rec.valid_score = compute_metrics(valid.samples, gen).overall.score;
      if (!best_score || *rec.valid_score > *best_score) {
        best_score = rec.valid_score;
        best = model.params();
        result.best_epoch = epoch;
      }
    }
    out << loss_line(epoch, rec.loss, rec.valid_score) << "\n";
    result.history.push_back(std::move(rec));
  }
  if (best_score) {
    model.params() = best;
  } else {
    result.best_epoch = config.epochs;
  }

  result.checkpoint = config.output;
  result.manifest = config.manifest_path();
  save_bundle(result.checkpoint, model, vocab, intents);
  result.checkpoint_fnv = fnv1a64(read_file(result.checkpoint));
  result.train_stats = teacher_forced_stats(model, encoded);

  json cfg_json = json::object();
  for (const std::string& key : RunConfig::keys()) cfg_json[key] = config.get(key);
  json history = json::array();
  for (const EpochRecord& rec : result.history) {
    json h = {{"epoch", rec.epoch},
              {"total", rec.loss.total},
              {"experts", rec.loss.expert_loss()},
              {"chair", rec.loss.chair_loss},
              {"lambda", rec.loss.lambda},
              {"mu", rec.loss.mu},
              {"tokens", rec.loss.token_count}};
    if (rec.valid_score) h["valid_score"] = *rec.valid_score;
    history.push_back(std::move(h));
  }
  json manifest = {{"config", cfg_json},
                   {"seed", config.seed},
                   {"corpus",
                    {{"train", corpus_entry(config.train_path)},
                     {"valid", corpus_entry(config.valid_path)},
                     {"test", corpus_entry(config.test_path)}}},
                   {"checkpoint",
                    {{"path", result.checkpoint.string()},
                     {"fnv1a64", hex64(result.checkpoint_fnv)}}},
                   {"best_epoch", result.best_epoch},
                   {"train_accuracy", result.train_stats.accuracy},
                   {"history", history}};
  write_file_atomic(result.manifest, manifest.dump(2) + "\n");

  out << "best_epoch=" << result.best_epoch
      << " train_accuracy=" << fmt("%.4f", result.train_stats.accuracy)
      << " checkpoint=" << result.checkpoint.string()
      << " fnv1a64=" << hex64(result.checkpoint_fnv) << "\n";
  return result;
}

MetricsReport run_evaluate(const EvaluateOptions& options, std::ostream& out) {
  const Bundle bundle = load_bundle(options.checkpoint);
  const Corpus corpus = load_corpus_jsonl(options.corpus, Split::kTest);
  if (corpus.samples.empty()) throw DataError(options.corpus.string() + " has no samples");
  const auto generated = generate_responses(bundle.model, bundle.vocab, corpus.samples,
                                            options.max_len, options.threads);
  MetricsReport report = compute_metrics(corpus.samples, generated);
  out << (options.json ? report.to_json() + "\n" : report.to_table());
  return report;
}

std::vector<std::string> run_generate(const GenerateOptions& options, std::ostream& out) {
  std::vector<std::string> words;
  std::istringstream in(options.context);
  for (std::string w; in >> w;) words.push_back(w);
  if (words.empty()) throw UsageError("context is empty");
  const Bundle bundle = load_bundle(options.checkpoint);
  std::vector<TokenId> ids;
  for (const std::string& w : words) ids.push_back(bundle.vocab.id(w));
  DecodeOptions decode;
  decode.max_len = options.max_len;
  decode.trace = options.trace;
  const DecodeResult r = greedy_decode(bundle.model, ids, decode);
  std::vector<std::string> response = decode_tokens(bundle.vocab, r.tokens);
  for (std::size_t i = 0; i < response.size(); ++i) {
    out << (i ? " " : "") << response[i];
  }
  out << "\n";
  if (options.trace) {
    out << "# beta columns:";
    for (const std::string& name : bundle.intents) out << ' ' << name;
    out << " chair\n";
    for (std::size_t j = 0; j < r.betas.size(); ++j) {
      out << "beta " << j << ' ' << bundle.vocab.token(r.tokens[j]);
      for (double b : r.betas[j]) out << ' ' << fmt("%.6f", b);
      out << "\n";
    }
  }
  return response;
}

std::vector<GradcheckLine> run_gradcheck(const GradcheckOptions& options,
                                         std::ostream& out) {
  if (options.hidden_size > kGradcheckMaxHidden) {
    throw ConfigError("gradcheck refuses hidden_size " +
                      std::to_string(options.hidden_size) + " (max " +
                      std::to_string(kGradcheckMaxHidden) + ")");
  }
  if (options.hidden_size == 0 || options.embedding_size == 0 || options.gate_hidden == 0 ||
      options.gate_size == 0) {
    throw ConfigError("gradcheck dimensions must be at least 1");
  }
  // |V| = 6: the four specials plus two words, two experts.
  const std::vector<std::string> intents = {"a", "b"};
  const std::vector<EncodedSample> samples = {
      {{4, 5, 1, 4}, {5, 4, kEosId}, "a"},
      {{5, 5, 4}, {4, 1, kEosId}, "b"},
  };
  BackwardOptions backward_options;
  backward_options.inject_fault = options.inject_fault;

  std::vector<GradcheckLine> lines;
  for (Scheme scheme : {Scheme::kS1, Scheme::kS2, Scheme::kS3, Scheme::kS4}) {
    const SchemeConfig sc = SchemeConfig::for_scheme(scheme);
    GradcheckLine line;
    line.scheme = scheme;
    for (Variant variant : {Variant::kBase, Variant::kV1, Variant::kV2, Variant::kV3}) {
      const VariantConfig vc = variant_config(variant);
      ModelConfig mc;
      mc.vocab_size = 6;
      mc.num_experts = 2;
      mc.mixture = sc.moe_enabled;
      mc.cell = vc.cell;
      mc.attention = vc.attention_enabled;
      mc.embedding_size = options.embedding_size;
      // V3 keeps the 100/150 hidden-size ratio.
      mc.hidden_size = variant == Variant::kV3
                           ? std::max<std::size_t>(1, options.hidden_size * 2 / 3)
                           : options.hidden_size;
      mc.gate_hidden = options.gate_hidden;
      mc.gate_size = options.gate_size;
      mc.init_range = options.init_range;
      mc.seed = options.seed;
      const TokenMoeModel model(mc);
      for (const EncodedSample& sample : samples) {
        const GradCheckResult r =
            grad_check(model, sample, sc, intents, options.epsilon, backward_options);
        if (r.max_rel_error >= line.max_rel_error) {
          line.max_rel_error = r.max_rel_error;
          line.worst = std::string(variant_name(variant)) + ":" + r.worst_slot + "[" +
                       std::to_string(r.worst_index) + "]";
        }
      }
    }
    out << scheme_name(scheme) << " max_rel_error=" << fmt("%.3e", line.max_rel_error)
        << " worst=" << line.worst << " variants=base,V1,V2,V3 "
        << (line.max_rel_error < kGradcheckTolerance ? "PASS" : "FAIL") << "\n";
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace tokmoe::app
