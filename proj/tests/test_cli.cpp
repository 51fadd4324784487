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

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "tokmoe/app.hpp"
#include "tokmoe/checkpoint.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + TOKMOE_CLI_PATH + " " + args + " 2>&1";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir_ = fs::temp_directory_path() / ("tokmoe_cli_" + std::to_string(rd()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void synth(const std::string& sub, int seed = 7) {
    fs::create_directories(dir_ / sub);
    const CliRun r = run("synth --intents 3 --per-intent 10 --seed " + std::to_string(seed) +
                      " --out " + path(sub));
    ASSERT_EQ(r.code, 0) << r.out;
  }

  std::string train_args(const std::string& data, const std::string& out,
                         int epochs = 2) const {
    return "train --scheme S4 --hidden-size 8 --embedding-size 6 --gate-hidden 5 --gate-size 4"
           " --max-len 8 --epochs " + std::to_string(epochs) + " --train " + path(data + "/train.jsonl") + " --valid " +
           path(data + "/valid.jsonl") + " --output " + path(out);
  }

  fs::path dir_;
};

TEST_F(Cli, SynthIsByteIdenticalForASeed) {
  synth("a");
  synth("b");
  synth("c", 8);
  for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  EXPECT_NE(slurp(dir_ / "a" / "train.jsonl"), slurp(dir_ / "c" / "train.jsonl"));
  EXPECT_EQ(tokmoe::parse_corpus_jsonl(slurp(dir_ / "a" / "train.jsonl")).samples.size(), 24u);
}

TEST_F(Cli, TrainTwiceGivesIdenticalCheckpoints) {
  synth("d");
  const CliRun a = run(train_args("d", "a.ckpt"));
  ASSERT_EQ(a.code, 0) << a.out;
  const CliRun b = run(train_args("d", "b.ckpt"));
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_EQ(slurp(path("a.ckpt")), slurp(path("b.ckpt")));
  EXPECT_NE(a.out.find("epoch 2 "), std::string::npos) << a.out;
  EXPECT_NE(a.out.find("fnv1a64="), std::string::npos);
  const auto manifest = nlohmann::json::parse(slurp(path("a.ckpt.manifest.json")));
  EXPECT_EQ(manifest.at("seed").get<std::uint64_t>(), 1u);
  EXPECT_EQ(manifest.at("history").size(), 2u);
  EXPECT_EQ(manifest.at("checkpoint").at("fnv1a64").get<std::string>(),
            tokmoe::app::hex64(tokmoe::fnv1a64(slurp(path("a.ckpt")))));
}

TEST_F(Cli, ManifestReplayReproducesCheckpoint) {
  synth("h");
  ASSERT_EQ(run(train_args("h", "first.ckpt") + " --seed 4").code, 0);
  const CliRun replay = run("train --config " + path("first.ckpt.manifest.json") + " --output " +
                            path("nested/dir/second.ckpt"));
  ASSERT_EQ(replay.code, 0) << replay.out;
  EXPECT_EQ(slurp(path("first.ckpt")), slurp(path("nested/dir/second.ckpt")));
}

TEST_F(Cli, SeedPrecedenceFileEnvFlag) {
  synth("e");
  {
    std::ofstream cfg(path("run.cfg"));
    cfg << "seed = 5\n";
  }
  const std::string base = train_args("e", "x.ckpt", 1) + " --config " + path("run.cfg");
  auto seed_of = [&](const CliRun& r) {
    EXPECT_EQ(r.code, 0) << r.out;
    return nlohmann::json::parse(slurp(path("x.ckpt.manifest.json"))).at("seed").get<int>();
  };
  EXPECT_EQ(seed_of(run(base)), 5);
  EXPECT_EQ(seed_of(run(base, "TOKMOE_SEED=6")), 6);
  EXPECT_EQ(seed_of(run(base + " --seed 9", "TOKMOE_SEED=6")), 9);
  EXPECT_EQ(run(base, "TOKMOE_SEED=abc").code, 1);
}

TEST_F(Cli, EvaluateAndGenerate) {
  synth("f");
  ASSERT_EQ(run(train_args("f", "m.ckpt")).code, 0);
  const CliRun table = run("evaluate --checkpoint " + path("m.ckpt") + " --corpus " +
                        path("f/test.jsonl"));
  ASSERT_EQ(table.code, 0) << table.out;
  EXPECT_NE(table.out.find("Score"), std::string::npos);
  EXPECT_NE(table.out.find("proxy"), std::string::npos);
  const CliRun json = run("evaluate --json --threads 2 --checkpoint " + path("m.ckpt") +
                       " --corpus " + path("f/train.jsonl"));
  ASSERT_EQ(json.code, 0) << json.out;
  const auto j = nlohmann::json::parse(json.out);
  EXPECT_EQ(j.at("per_intent").size(), 3u);
  const CliRun gen = run("generate --trace --checkpoint " + path("m.ckpt") + " --context 'i need'");
  ASSERT_EQ(gen.code, 0) << gen.out;
  EXPECT_NE(gen.out.find("\n# beta columns: hotel restaurant train chair\n"), std::string::npos)
      << gen.out;
  EXPECT_NE(gen.out.find("\nbeta 0 "), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("synth --intents 1").code, 2);
  const CliRun missing = run("evaluate --checkpoint " + path("nope.ckpt") + " --corpus x.jsonl");
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.out.find("E_IO"), std::string::npos) << missing.out;
  const CliRun lambda = run("train --scheme S2 --lambda 0.3 --train x.jsonl");
  EXPECT_EQ(lambda.code, 1);
  EXPECT_NE(lambda.out.find("E_CONFIG"), std::string::npos) << lambda.out;
  const CliRun big = run("gradcheck --hidden-size 9");
  EXPECT_EQ(big.code, 1);
  EXPECT_NE(big.out.find("E_CONFIG"), std::string::npos) << big.out;
}

TEST_F(Cli, CorruptedCheckpointIsRejected) {
  synth("g");
  ASSERT_EQ(run(train_args("g", "c.ckpt")).code, 0);
  std::string bytes = slurp(path("c.ckpt"));
  bytes[bytes.size() / 2] ^= 0x10;
  {
    std::ofstream out(path("c.ckpt"), std::ios::binary | std::ios::trunc);
    out << bytes;
  }
  const CliRun r = run("generate --checkpoint " + path("c.ckpt") + " --context hello");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("E_INTEGRITY"), std::string::npos) << r.out;
}

TEST_F(Cli, GradcheckPassesAndCatchesFault) {
  const CliRun ok = run("gradcheck");
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("S1 max_rel_error="), std::string::npos);
  EXPECT_NE(ok.out.find("S4 max_rel_error="), std::string::npos);
  const CliRun bad = run("gradcheck --inject-fault");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
}

}  // namespace
