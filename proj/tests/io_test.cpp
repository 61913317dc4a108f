// Copyright 2026 The sgflow Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace sgflow {
namespace {

namespace fs = std::filesystem;

// ---- containers ------------------------------------------------------------

SampleSet small_sampleset(bool with_x) {
  const auto d = draw_sk_disorder(5, 1.0, 1);
  PtOptions opt;
  opt.n_samples = 40;
  opt.burn_in_sweeps = 3;
  opt.seed = 9;
  auto res = run_pt(d, TemperatureLadder::geometric(0.5, 2.0, 3), opt);
  SampleSet ss = res.samples[1];
  if (with_x) {
    Rng rng(2);
    build_continuous_dataset(ss, shift_coupling(d, 0.01), rng);
  }
  return ss;
}

TEST(Container, HeaderAndPayloadLayout) {
  io::Container c;
  c.header = {{"kind", "x"}, {"n", 1}};
  c.payload = {1, 2, 3};
  const io::Bytes b = io::encode(c);
  ASSERT_GE(b.size(), 16u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 8), "SGFLOW01");
  const std::string h = c.header.dump();
  std::uint64_t len = 0;
  for (int k = 7; k >= 0; --k) len = (len << 8) | b[8 + k];  // little-endian length
  EXPECT_EQ(len, h.size());
  EXPECT_EQ(std::string(b.begin() + 16, b.begin() + 16 + static_cast<long>(len)), h);
  const io::Container back = io::decode(b);
  EXPECT_EQ(back.header, c.header);
  EXPECT_EQ(back.payload, c.payload);
}

TEST(Container, RejectsCorruption) {
  const io::Bytes good = io::encode_disorder(draw_sk_disorder(4, 1.0, 1), 0.01);
  io::Bytes bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(io::decode_disorder(bad_magic), IoError);
  io::Bytes truncated(good.begin(), good.end() - 3);
  EXPECT_THROW(io::decode_disorder(truncated), IoError);
  io::Bytes trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(io::decode_disorder(trailing), IoError);
  EXPECT_THROW(io::decode_sampleset(good), IoError);  // wrong kind
  EXPECT_THROW(io::decode(io::Bytes{'S', 'G'}), IoError);
  EXPECT_THROW(io::load_disorder("/nonexistent/disorder.sgd"), IoError);
}

TEST(RoundTrip, DisorderIsByteIdentical) {
  const auto d = draw_sk_disorder(7, 1.3, 42);
  const io::Bytes a = io::encode_disorder(d, 0.02);
  const io::DisorderFile f = io::decode_disorder(a);
  EXPECT_EQ(f.disorder.couplings, d.couplings);
  EXPECT_EQ(f.disorder.fields, d.fields);
  EXPECT_EQ(f.disorder.seed, 42u);
  EXPECT_EQ(f.epsilon, 0.02);
  EXPECT_EQ(io::encode_disorder(f.disorder, f.epsilon), a);
}

TEST(RoundTrip, SampleSetIsByteIdentical) {
  for (const bool with_x : {false, true}) {
    const SampleSet ss = small_sampleset(with_x);
    const io::Bytes a = io::encode_sampleset(ss);
    const SampleSet back = io::decode_sampleset(a);
    EXPECT_EQ(back.spins, ss.spins);
    EXPECT_EQ(back.xs.has_value(), with_x);
    if (with_x) {
      EXPECT_EQ(*back.xs, *ss.xs);
    }
    EXPECT_EQ(back.beta, ss.beta);
    EXPECT_EQ(back.disorder_id, ss.disorder_id);
    EXPECT_EQ(io::encode_sampleset(back), a);
  }
}

TEST(RoundTrip, SampleSetRejectsNonSpinValues) {
  const SampleSet ss = small_sampleset(false);
  io::Container c = io::decode(io::encode_sampleset(ss));
  c.payload[0] = 0;
  EXPECT_THROW(io::decode_sampleset(io::encode(c)), IoError);
}

TEST(RoundTrip, CheckpointIsByteIdenticalAndFunctional) {
  FlowModel m = init_flow(6, 4, 3);
  Rng rng(3);
  m.set_params(m.flatten_params() + 0.1 * standard_normal(m.n_params(), rng));
  const json meta = {{"loss", "forward"}, {"beta", 5.0}, {"updates", 12}};
  const io::Bytes a = io::encode_checkpoint(m, meta);
  const io::Checkpoint ck = io::decode_checkpoint(a);
  EXPECT_EQ(ck.training, meta);
  EXPECT_EQ(ck.model.flatten_params(), m.flatten_params());
  const Matrix z = standard_normal(6, 20, rng);
  EXPECT_EQ(ck.model.forward(z).out, m.forward(z).out);
  EXPECT_EQ(io::encode_checkpoint(ck.model, ck.training), a);
}

TEST(RoundTrip, FilesOnDisk) {
  const fs::path dir = fs::temp_directory_path() / "sgflow_io_test";
  fs::remove_all(dir);
  const auto d = draw_sk_disorder(5, 1.0, 5);
  io::save_disorder(dir / "nested" / "d.sgd", d, 0.01);
  EXPECT_EQ(io::load_disorder(dir / "nested" / "d.sgd").disorder.couplings, d.couplings);
  EXPECT_EQ(io::file_sha256(dir / "nested" / "d.sgd"), sha256_hex(io::encode_disorder(d, 0.01)));
  fs::remove_all(dir);
}

// ---- configuration --------------------------------------------------------

TEST(Config, DefaultsRoundTripThroughJson) {
  ExperimentConfig c;
  c.disorder.n_spins = 12;
  c.train.loss_kind = LossKind::kReverse;
  c.train.symmetrize = true;
  c.ladder.temperatures = {0.5, 1.0};
  const json j = to_json(c);
  const ExperimentConfig back = experiment_config_from_json(j);
  EXPECT_EQ(to_json(back), j);
}

// Walks the schema next to the defaults document: same keys at every level,
// and every documented default equals the compiled one.
void expect_schema_matches(const json& schema, const json& defaults, const std::string& where) {
  ASSERT_TRUE(schema.contains("properties")) << where;
  const json& props = schema["properties"];
  EXPECT_EQ(schema.value("additionalProperties", true), false) << where;
  ASSERT_EQ(props.size(), defaults.size()) << where;
  for (const auto& [key, value] : defaults.items()) {
    ASSERT_TRUE(props.contains(key)) << where << "." << key;
    if (value.is_object()) {
      expect_schema_matches(props[key], value, where + "." + key);
    } else {
      ASSERT_TRUE(props[key].contains("default")) << where << "." << key;
      EXPECT_EQ(props[key]["default"], value) << where << "." << key;
    }
  }
}

TEST(Config, SchemaAgreesWithParser) {
  const io::Bytes raw = io::read_file(SGFLOW_SCHEMA_PATH);
  json schema = json::parse(raw.begin(), raw.end());
  ASSERT_TRUE(schema["properties"].contains("$comment"));
  schema["properties"].erase("$comment");
  expect_schema_matches(schema, to_json(ExperimentConfig{}), "config");
}

TEST(Config, PartialDocumentKeepsDefaults) {
  const auto c = parse_experiment_config(R"({"disorder": {"n_spins": 16}, "train": {"loss": "reverse"}})");
  EXPECT_EQ(c.disorder.n_spins, 16);
  EXPECT_EQ(c.disorder.epsilon, 0.01);
  EXPECT_EQ(c.train.loss_kind, LossKind::kReverse);
  EXPECT_EQ(c.train.batch_size, 50);
  EXPECT_EQ(c.train.learning_rate, 1e-4);
  EXPECT_EQ(c.ladder.replicas, 20);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_experiment_config(R"({"disorder": {"n_spin": 16}})"), InvalidArgument);
  EXPECT_THROW(parse_experiment_config(R"({"extra": 1})"), InvalidArgument);
  EXPECT_THROW(parse_experiment_config(R"({"train": {"adam": {"beta3": 0.5}}})"), InvalidArgument);
  EXPECT_THROW(parse_experiment_config(R"({"disorder": {"n_spins": "many"}})"), InvalidArgument);
  EXPECT_THROW(parse_experiment_config(R"({"disorder": {"n_spins": 1}})"), InvalidArgument);
  EXPECT_THROW(parse_experiment_config(R"({"train": {"loss": "sideways"}})"), InvalidArgument);
  EXPECT_THROW(parse_experiment_config(R"({"version": 2})"), InvalidArgument);
  EXPECT_THROW(parse_experiment_config("{not json"), InvalidArgument);
  EXPECT_THROW(parse_experiment_config(R"({"disorder": {"$comment": "only at the top"}})"), InvalidArgument);
  EXPECT_NO_THROW(parse_experiment_config(R"({"$comment": "notes"})"));
}

// ---- command line ---------------------------------------------------------

struct Cli {
  fs::path root;

  explicit Cli(const std::string& name) : root(fs::temp_directory_path() / ("sgflow_cli_" + name)) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Cli() { fs::remove_all(root); }

  int run(const std::string& args) const {
    const std::string cmd =
        "cd '" + root.string() + "' && '" + std::string(SGFLOW_CLI_PATH) + "' " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::map<std::string, std::string> hashes(const std::string& dir) const {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root / dir))
      if (e.is_regular_file()) out[fs::relative(e.path(), root / dir).generic_string()] = io::file_sha256(e.path());
    return out;
  }
};

TEST(CommandLine, ExitCodes) {
  Cli cli("exit");
  EXPECT_EQ(cli.run("--help"), 0);
  EXPECT_EQ(cli.run(""), 2);
  EXPECT_EQ(cli.run("gen-disorder --n 1 --out d"), 2);
  EXPECT_EQ(cli.run("gen-disorder --bogus"), 2);
  ASSERT_EQ(cli.run("gen-disorder --n 6 --seed 1 --out d"), 0);
  EXPECT_EQ(cli.run("sample-pt --disorder d/disorder.sgd --samples 0 --out p"), 2);
  EXPECT_EQ(cli.run("sample-pt --disorder missing.sgd --out p"), 4);
  EXPECT_EQ(cli.run("train --disorder d/disorder.sgd --loss forward --updates 5 --out t"), 2);
  EXPECT_EQ(cli.run("train --disorder d/disorder.sgd --loss sideways --out t"), 2);
  EXPECT_EQ(cli.run("train --disorder d/disorder.sgd --loss reverse --layers 3 --out t"), 2);
  io::write_file(cli.root / "junk.sgd", std::string("not a container"));
  EXPECT_EQ(cli.run("sample-pt --disorder junk.sgd --out p"), 4);
  io::write_file(cli.root / "bad.json", std::string(R"({"disorder": {"spins": 4}})"));
  EXPECT_EQ(cli.run("gen-disorder --config bad.json --out d2"), 2);
}

TEST(CommandLine, DimensionMismatchAcrossFilesIsRejected) {
  Cli cli("mismatch");
  ASSERT_EQ(cli.run("gen-disorder --n 6 --seed 1 --out a"), 0);
  ASSERT_EQ(cli.run("gen-disorder --n 8 --seed 1 --out b"), 0);
  ASSERT_EQ(cli.run("sample-pt --disorder a/disorder.sgd --replicas 2 --samples 100 --out pa"), 0);
  ASSERT_EQ(cli.run("train --disorder b/disorder.sgd --loss reverse --updates 0 --out tb"), 0);
  EXPECT_EQ(cli.run("train --disorder b/disorder.sgd --loss forward --data pa/samples_01.sgs --out t"), 2);
  EXPECT_EQ(cli.run("analyze overlap --checkpoint tb/model.ckpt --disorder a/disorder.sgd --out o"), 2);
}

TEST(CommandLine, ZeroUpdatesWritesInitialCheckpointOnly) {
  Cli cli("zero");
  ASSERT_EQ(cli.run("gen-disorder --n 6 --seed 2 --out d"), 0);
  ASSERT_EQ(cli.run("sample-pt --disorder d/disorder.sgd --replicas 3 --samples 200 --emit-x --out p"), 0);
  ASSERT_EQ(cli.run("train --disorder d/disorder.sgd --loss forward --data p/samples_02.sgs --updates 0 --seed 4 --out t"),
            0);
  EXPECT_FALSE(fs::exists(cli.root / "t" / "checkpoints"));
  const io::Checkpoint ck = io::load_checkpoint(cli.root / "t" / "model.ckpt");
  EXPECT_EQ(ck.model.flatten_params(), init_flow(6, 4, 4).flatten_params());
  EXPECT_EQ(ck.training["updates"], 0);
}

TEST(CommandLine, ManifestRecordsConfigAndHashes) {
  Cli cli("manifest");
  io::write_file(cli.root / "cfg.json", std::string(R"({"disorder": {"n_spins": 5, "seed": 9}})"));
  ASSERT_EQ(cli.run("gen-disorder --config cfg.json --epsilon 0.05 --out d"), 0);
  const auto bytes = io::read_file(cli.root / "d" / "gen-disorder_manifest.json");
  const json m = json::parse(bytes.begin(), bytes.end());
  EXPECT_EQ(m["config"]["disorder"]["n_spins"], 5);
  EXPECT_EQ(m["config"]["disorder"]["seed"], 9);
  EXPECT_EQ(m["config"]["disorder"]["epsilon"], 0.05);  // flag beats file
  EXPECT_EQ(m["inputs"][0]["sha256"], io::file_sha256(cli.root / "cfg.json"));
  EXPECT_EQ(m["outputs"][0]["path"], "disorder.sgd");
  EXPECT_EQ(m["outputs"][0]["sha256"], io::file_sha256(cli.root / "d" / "disorder.sgd"));
  // the written config is itself a valid configuration document
  EXPECT_NO_THROW(experiment_config_from_json(m["config"]));
}

TEST(CommandLine, DeterministicAcrossRerunsAndThreadCounts) {
  Cli cli("determinism");
  auto pipeline = [&](const std::string& tag, int threads) {
    const std::string t = " --threads " + std::to_string(threads);
    const std::string o = " --out " + tag + "/";
    ASSERT_EQ(cli.run("gen-disorder --n 8 --seed 11" + t + o + "d"), 0);
    ASSERT_EQ(cli.run("sample-pt --disorder " + tag + "/d/disorder.sgd --replicas 5 --samples 600 --seed 3" + t + o + "p"), 0);
    ASSERT_EQ(cli.run("convert --samples " + tag + "/p/samples_04.sgs --disorder " + tag + "/d/disorder.sgd --seed 5" + t +
                      o + "c"),
              0);
    ASSERT_EQ(cli.run("train --disorder " + tag + "/d/disorder.sgd --loss forward --data " + tag +
                      "/c/samples_04.sgs --updates 40 --eval-every 20 --eval-batch 300 --checkpoint-every 15 --seed 6" +
                      t + o + "tf"),
              0);
    ASSERT_EQ(cli.run("train --disorder " + tag + "/d/disorder.sgd --loss reverse --symmetrize --temp 0.5 --updates 30 "
                      "--eval-every 10 --eval-batch 300 --seed 7" + t + o + "tr"),
              0);
    const std::string flow = " --checkpoint " + tag + "/tf/model.ckpt --disorder " + tag + "/d/disorder.sgd";
    ASSERT_EQ(cli.run("analyze overlap --samples " + tag + "/p --temp 0.2 --pairs 2000" + t + o + "a"), 0);
    ASSERT_EQ(cli.run("analyze triangles" + flow + " --n-samples 300 --triples 500" + t + o + "a"), 0);
    ASSERT_EQ(cli.run("analyze magnetization" + flow + " --n-samples 300" + t + o + "a"), 0);
    ASSERT_EQ(cli.run("analyze free-energy" + flow + " --data " + tag + "/c/samples_04.sgs --n-samples 300" + t + o + "a"),
              0);
    ASSERT_EQ(cli.run("analyze layers" + flow + " --n-samples 200 --pairs 500 --triples 200 --bins 9" + t + o + "a"), 0);
  };
  pipeline("one", 1);
  pipeline("three", 3);
  const auto a = cli.hashes("one"), b = cli.hashes("three");
  ASSERT_GT(a.size(), 30u);
  // manifests name their inputs by path, which embeds the run directory
  for (const auto& [name, hash] : a) {
    ASSERT_TRUE(b.count(name)) << name;
    if (name.find("_manifest.json") == std::string::npos) {
      EXPECT_EQ(hash, b.at(name)) << name;
    }
  }
  pipeline("one", 3);  // rerun in place
  EXPECT_EQ(cli.hashes("one"), a);
}

}  // namespace
}  // namespace sgflow
