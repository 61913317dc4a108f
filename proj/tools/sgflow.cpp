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

// sgflow command-line driver: one pipeline stage per subcommand
// (gen-disorder, sample-pt, convert, train, analyze). Stages communicate
// through files only. Exit codes: 0 ok, 2 usage, 3 numeric failure, 4 I/O.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sgflow/report.hpp"
#include "sgflow/sgflow.hpp"

namespace {

using namespace sgflow;
namespace fs = std::filesystem;

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

// ---- provenance ------------------------------------------------------------

/// Resolved config plus content hashes of every input and output, written
/// beside the outputs as <command>_manifest.json.
struct Manifest {
  std::string command;
  fs::path out_dir;
  json config;
  json inputs = json::array();
  json outputs = json::array();
  json results = json::object();

  void input(const fs::path& p) { inputs.push_back({{"path", p.generic_string()}, {"sha256", io::file_sha256(p)}}); }

  template <class Data>
  void emit(const std::string& name, const Data& data) {
    io::write_file(out_dir / name, data);
    outputs.push_back({{"path", name}, {"sha256", sha256_hex(data)}});
  }

  void write() const {
    const json j = {{"command", command}, {"config", config}, {"inputs", inputs}, {"outputs", outputs}, {"results", results}};
    io::write_file(out_dir / (command + "_manifest.json"), j.dump(2) + "\n");
  }
};

// ---- option plumbing -------------------------------------------------------

/// Flags override the --config file; only flags that were actually given apply.
class Overrides {
 public:
  template <class T, class Set>
  CLI::Option* add(CLI::App* app, const std::string& name, const std::string& desc, Set set) {
    auto value = std::make_shared<T>();
    CLI::Option* o = app->add_option(name, *value, desc);
    fns_.push_back([o, value, set](ExperimentConfig& c) {
      if (o->count() > 0) set(c, *value);
    });
    return o;
  }

  template <class Set>
  CLI::Option* flag(CLI::App* app, const std::string& name, const std::string& desc, Set set) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* o = app->add_flag(name, *value, desc);
    fns_.push_back([o, value, set](ExperimentConfig& c) {
      if (o->count() > 0) set(c, *value);
    });
    return o;
  }

  void apply(ExperimentConfig& c) const {
    for (const auto& f : fns_) f(c);
  }

 private:
  std::vector<std::function<void(ExperimentConfig&)>> fns_;
};

struct Common {
  std::string config_path;
  std::string out_dir = ".";
  unsigned threads = default_threads();
  Overrides over;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "ExperimentConfig JSON; flags given explicitly take precedence");
    app->add_option("--out", out_dir, "output directory");
    app->add_option("--threads", threads, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  }

  ExperimentConfig resolve(Manifest& m, const std::string& command) const {
    ExperimentConfig c;
    if (!config_path.empty()) {
      const auto bytes = io::read_file(config_path);
      c = parse_experiment_config(std::string(bytes.begin(), bytes.end()));
      m.input(config_path);
    }
    over.apply(c);
    c.output_dir = ".";  // outputs sit beside the manifest
    c.validate();
    m.command = command;
    m.out_dir = out_dir;
    return c;
  }
};

void describe_disorder(ExperimentConfig& c, const io::DisorderFile& f) {
  c.disorder.n_spins = f.disorder.n_spins;
  c.disorder.scale = f.disorder.scale;
  c.disorder.seed = f.disorder.seed;
  c.disorder.epsilon = f.epsilon;
}

io::DisorderFile load_disorder_input(const std::string& path, Manifest& m) {
  if (path.empty()) throw InvalidArgument("--disorder is required");
  auto f = io::load_disorder(path);
  m.input(path);
  return f;
}

double beta_of(double temperature) {
  if (!(temperature > 0)) throw InvalidArgument("--temp must be positive");
  return 1.0 / temperature;
}

bool same_beta(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b)); }

void print_kv(const std::string& k, double v) { std::cout << k << " = " << report::num(v) << "\n"; }

// ---- gen-disorder -------------------------------------------------------

struct GenDisorder {
  Common common;

  void attach(CLI::App* app) {
    common.attach(app);
    common.over.add<int>(app, "--n", "number of spins", [](auto& c, int v) { c.disorder.n_spins = v; });
    common.over.add<double>(app, "--scale", "coupling scale J", [](auto& c, double v) { c.disorder.scale = v; });
    common.over.add<std::uint64_t>(app, "--seed", "disorder seed", [](auto& c, auto v) { c.disorder.seed = v; });
    common.over.add<double>(app, "--epsilon", "shift margin", [](auto& c, double v) { c.disorder.epsilon = v; });
  }

  int run() {
    Manifest m;
    const ExperimentConfig c = common.resolve(m, "gen-disorder");
    m.config = to_json(c);
    const auto d = draw_sk_disorder(c.disorder.n_spins, c.disorder.scale, c.disorder.seed);
    const auto sc = shift_coupling(d, c.disorder.epsilon);
    m.emit("disorder.sgd", io::encode_disorder(d, c.disorder.epsilon));
    m.results = {{"disorder_id", disorder_id(d)},
                 {"delta", sc.shift()},
                 {"lambda_min", sc.lambda_min()},
                 {"lambda_max", sc.lambda_max()}};
    m.write();
    print_kv("delta", sc.shift());
    print_kv("lambda_min", sc.lambda_min());
    print_kv("lambda_max", sc.lambda_max());
    std::cout << "wrote " << (fs::path(common.out_dir) / "disorder.sgd").string() << "\n";
    return 0;
  }
};

// ---- sample-pt ------------------------------------------------------------

std::string slot_file(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "samples_%02zu.sgs", k);
  return buf;
}

struct SamplePt {
  Common common;
  std::string disorder_path;

  void attach(CLI::App* app) {
    common.attach(app);
    app->add_option("--disorder", disorder_path, "disorder file")->required();
    common.over.add<int>(app, "--replicas", "number of temperatures", [](auto& c, int v) { c.ladder.replicas = v; });
    common.over.add<double>(app, "--t-min", "lowest temperature", [](auto& c, double v) { c.ladder.t_min = v; });
    common.over.add<double>(app, "--t-max", "highest temperature", [](auto& c, double v) { c.ladder.t_max = v; });
    common.over.add<std::vector<double>>(app, "--temps", "explicit temperatures (overrides the geometric ladder)",
                                         [](auto& c, const auto& v) { c.ladder.temperatures = v; });
    common.over.add<long>(app, "--burn-in", "burn-in sweeps (default 10 N)", [](auto& c, long v) { c.pt.burn_in = v; });
    common.over.add<long>(app, "--samples", "recorded samples per temperature", [](auto& c, long v) { c.pt.samples = v; });
    common.over.add<std::uint64_t>(app, "--seed", "sampler seed", [](auto& c, auto v) { c.pt.seed = v; });
    common.over.flag(app, "--emit-x", "attach continuous samples x ~ p(x|s)", [](auto& c, bool v) { c.pt.emit_x = v; });
  }

  int run() {
    Manifest m;
    ExperimentConfig c = common.resolve(m, "sample-pt");
    const auto f = load_disorder_input(disorder_path, m);
    describe_disorder(c, f);
    m.config = to_json(c);

    TemperatureLadder ladder = [&] {
      if (c.ladder.temperatures.empty()) return TemperatureLadder::geometric(c.ladder.t_min, c.ladder.t_max, c.ladder.replicas);
      std::vector<double> betas;
      for (double t : c.ladder.temperatures) betas.push_back(beta_of(t));
      std::sort(betas.begin(), betas.end());
      return TemperatureLadder(betas);
    }();
    PtOptions opt;
    opt.burn_in_sweeps = c.pt.burn_in < 0 ? 10L * f.disorder.n_spins : c.pt.burn_in;
    opt.n_samples = c.pt.samples;
    opt.seed = c.pt.seed;
    opt.threads = common.threads;
    PtResult res = run_pt(f.disorder, ladder, opt);

    const auto sc = shift_coupling(f.disorder, f.epsilon);
    json files = json::array();
    for (std::size_t k = 0; k < ladder.size(); ++k) {
      if (c.pt.emit_x) {
        Rng rng = derive_rng(c.pt.seed, {0x786b, k});
        build_continuous_dataset(res.samples[k], sc, rng);
      }
      m.emit(slot_file(k), io::encode_sampleset(res.samples[k]));
      files.push_back(slot_file(k));
    }
    std::vector<double> temps, rates;
    for (std::size_t k = 0; k < ladder.size(); ++k) temps.push_back(ladder.temperature(k));
    for (std::size_t p = 0; p + 1 < ladder.size(); ++p) rates.push_back(res.exchange.rate(p));
    const json summary = {{"disorder_id", disorder_id(f.disorder)},
                          {"N", f.disorder.n_spins},
                          {"temperatures", temps},
                          {"betas", ladder.betas()},
                          {"mean_energy", res.mean_energy},
                          {"exchange_acceptance", rates},
                          {"burn_in", opt.burn_in_sweeps},
                          {"samples", opt.n_samples},
                          {"files", files}};
    m.emit("pt_summary.json", summary.dump(2) + "\n");
    m.write();
    for (std::size_t k = 0; k < ladder.size(); ++k)
      std::cout << "T = " << report::num(temps[k]) << "  <H> = " << report::num(res.mean_energy[k]) << "\n";
    return 0;
  }
};

// ---- convert ----------------------------------------------------------------

struct Convert {
  Common common;
  std::string samples_path, disorder_path;

  void attach(CLI::App* app) {
    common.attach(app);
    app->add_option("--samples", samples_path, "spin sample file")->required();
    app->add_option("--disorder", disorder_path, "disorder file")->required();
    common.over.add<std::uint64_t>(app, "--seed", "conversion seed", [](auto& c, auto v) { c.pt.seed = v; });
  }

  int run() {
    Manifest m;
    ExperimentConfig c = common.resolve(m, "convert");
    const auto f = load_disorder_input(disorder_path, m);
    describe_disorder(c, f);
    m.config = to_json(c);
    SampleSet ss = io::load_sampleset(samples_path);
    m.input(samples_path);
    if (ss.disorder_id != disorder_id(f.disorder)) throw InvalidArgument("sample file belongs to a different instance");
    Rng rng = derive_rng(c.pt.seed, {0x636f});
    build_continuous_dataset(ss, shift_coupling(f.disorder, f.epsilon), rng);
    const std::string name = fs::path(samples_path).filename().string();
    m.emit(name, io::encode_sampleset(ss));
    m.write();
    std::cout << "wrote " << (fs::path(common.out_dir) / name).string() << " (" << ss.size() << " rows)\n";
    return 0;
  }
};

// ---- train ---------------------------------------------------------------

/// Concatenated x rows of the given sample files, converted on the fly when
/// a file holds spins only.
RowMatrix load_dataset(const std::vector<std::string>& paths, const DisorderRealization& d, const ShiftedCoupling& sc,
                       std::optional<double>& beta, std::uint64_t seed, Manifest& m) {
  std::vector<RowMatrix> parts;
  Eigen::Index rows = 0;
  for (std::size_t k = 0; k < paths.size(); ++k) {
    SampleSet ss = io::load_sampleset(paths[k]);
    m.input(paths[k]);
    if (ss.n_spins() != d.n_spins) throw InvalidArgument("data file " + paths[k] + ": N differs from the disorder file");
    if (ss.disorder_id != disorder_id(d)) throw InvalidArgument("data file " + paths[k] + " belongs to a different instance");
    if (!beta) beta = ss.beta;
    if (!same_beta(*beta, ss.beta)) throw InvalidArgument("data file " + paths[k] + " was sampled at another temperature");
    if (!ss.xs) {
      Rng rng = derive_rng(seed, {0x636f, k});
      build_continuous_dataset(ss, sc, rng);
    }
    rows += ss.size();
    parts.push_back(std::move(*ss.xs));
  }
  RowMatrix out(rows, d.n_spins);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

struct Train {
  Common common;
  std::string disorder_path;
  std::vector<std::string> data_paths;
  double temperature = 0;
  CLI::Option* temp_opt = nullptr;

  void attach(CLI::App* app) {
    common.attach(app);
    app->add_option("--disorder", disorder_path, "disorder file")->required();
    app->add_option("--data", data_paths, "sample files for forward training");
    temp_opt = app->add_option("--temp", temperature, "temperature T (beta = 1/T)");
    auto& o = common.over;
    o.add<std::string>(app, "--loss", "forward | reverse",
                       [](auto& c, const std::string& v) { c.train.loss_kind = loss_kind_from_string(v); });
    o.add<long>(app, "--updates", "minibatch updates", [](auto& c, long v) { c.train.n_updates = v; });
    o.add<double>(app, "--lr", "Adam learning rate", [](auto& c, double v) { c.train.learning_rate = v; });
    o.add<int>(app, "--batch", "minibatch size", [](auto& c, int v) { c.train.batch_size = v; });
    o.add<int>(app, "--layers", "coupling layers (even)", [](auto& c, int v) { c.flow_layers = v; });
    o.add<std::uint64_t>(app, "--seed", "training seed", [](auto& c, auto v) { c.train.seed = v; });
    o.flag(app, "--symmetrize", "x -> -x symmetrized reverse loss", [](auto& c, bool v) { c.train.symmetrize = v; });
    o.add<long>(app, "--eval-every", "snapshot cadence (0 disables)", [](auto& c, long v) { c.train.eval_every = v; });
    o.add<long>(app, "--eval-batch", "snapshot batch size", [](auto& c, long v) { c.train.eval_batch = v; });
    o.add<long>(app, "--checkpoint-every", "checkpoint cadence", [](auto& c, long v) { c.train.checkpoint_every = v; });
    o.add<double>(app, "--clip-norm", "gradient norm clip (0 disables)", [](auto& c, double v) { c.train.clip_norm = v; });
  }

  int run() {
    Manifest m;
    ExperimentConfig c = common.resolve(m, "train");
    const auto f = load_disorder_input(disorder_path, m);
    describe_disorder(c, f);
    const auto sc = shift_coupling(f.disorder, f.epsilon);

    std::optional<double> beta;
    if (temp_opt->count() > 0) beta = beta_of(temperature);
    std::optional<RowMatrix> data;
    if (c.train.loss_kind == LossKind::kForward) {
      if (data_paths.empty()) throw InvalidArgument("forward training requires --data");
      data = load_dataset(data_paths, f.disorder, sc, beta, c.train.seed, m);
    } else if (!data_paths.empty()) {
      throw InvalidArgument("reverse training takes no --data");
    }
    if (beta) c.train.beta = *beta;
    c.train.threads = common.threads;
    c.validate();
    m.config = to_json(c);

    FlowModel model = init_flow(f.disorder.n_spins, c.flow_layers, c.train.seed);
    auto meta = [&](long update) {
      return json{{"loss", to_string(c.train.loss_kind)},
                  {"beta", c.train.beta},
                  {"symmetrize", c.train.symmetrize},
                  {"updates", update},
                  {"seed", c.train.seed},
                  {"disorder_id", disorder_id(f.disorder)}};
    };
    TrainCallbacks cb;
    cb.on_checkpoint = [&](long u, const FlowModel& mm) {
      if (u >= c.train.n_updates) return;  // the final state is written as model.ckpt
      char buf[48];
      std::snprintf(buf, sizeof buf, "checkpoints/ckpt_%08ld.ckpt", u);
      m.emit(buf, io::encode_checkpoint(mm, meta(u)));
    };
    cb.on_snapshot = [](const LossSnapshot& s) {
      std::cout << "update " << s.update << "  loss " << report::num(s.loss) << " +- " << report::num(s.std_error) << "\n";
    };
    const LossTrace trace = train(model, c.train, sc, data, cb);
    m.emit("model.ckpt", io::encode_checkpoint(model, meta(c.train.n_updates)));
    m.emit("loss.csv", report::loss_csv(trace));
    m.emit("snapshots.csv", report::snapshot_csv(trace));
    if (!trace.snapshots.empty())
      m.results = {{"final_loss", trace.snapshots.back().loss}, {"final_std_error", trace.snapshots.back().std_error}};
    m.write();
    return 0;
  }
};

// ---- analyze -------------------------------------------------------------

struct SpinSource {
  SpinMatrix spins;
  double beta = 0;
  std::string tag;
};

/// Picks the sample file of a sample-pt output directory matching beta.
fs::path slot_for_beta(const fs::path& dir, double beta) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".sgs") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    const auto c = io::decode(io::read_file(p));
    if (c.header.value("kind", "") == "sampleset" && same_beta(c.header.value("beta", 0.0), beta)) return p;
  }
  throw InvalidArgument("no sample file at the requested temperature in " + dir.string());
}

struct Analyze {
  Common common;
  std::string samples_path, checkpoint_path, disorder_path, data_path, pt_summary_path, logz = "auto";
  double temperature = 0;
  CLI::Option* temp_opt = nullptr;
  CLI::Option* sym_opt = nullptr;
  bool symmetrize = false;

  void attach_shared(CLI::App* app) {
    common.attach(app);
    auto& o = common.over;
    o.add<std::uint64_t>(app, "--seed", "analysis seed", [](auto& c, auto v) { c.analysis.seed = v; });
    o.add<int>(app, "--bins", "overlap histogram bins", [](auto& c, int v) { c.analysis.bins = v; });
    o.add<long>(app, "--pairs", "random sample pairs", [](auto& c, long v) { c.analysis.pairs = v; });
    o.add<long>(app, "--triples", "random sample triples", [](auto& c, long v) { c.analysis.triples = v; });
    o.add<double>(app, "--tolerance", "triangle tolerance in distance units",
                  [](auto& c, double v) { c.analysis.tolerance = v; });
    o.add<long>(app, "--n-samples", "configurations drawn from a flow", [](auto& c, long v) { c.analysis.samples = v; });
    temp_opt = app->add_option("--temp", temperature, "temperature T");
    app->add_option("--samples", samples_path, "PT sample file, or a sample-pt output directory with --temp");
    app->add_option("--checkpoint", checkpoint_path, "flow checkpoint");
    app->add_option("--disorder", disorder_path, "disorder file (flow sources)");
  }

  /// Beta from --temp, falling back to the checkpoint's training temperature.
  double resolve_beta(const io::Checkpoint& ck) const {
    if (temp_opt->count() > 0) return beta_of(temperature);
    if (ck.training.contains("beta")) return ck.training["beta"].get<double>();
    throw InvalidArgument("--temp is required");
  }

  struct FlowInput {
    io::DisorderFile disorder;
    io::Checkpoint ck;
    double beta = 0;
  };

  FlowInput load_flow(Manifest& m) const {
    if (checkpoint_path.empty()) throw InvalidArgument("--checkpoint is required");
    FlowInput in{load_disorder_input(disorder_path, m), io::load_checkpoint(checkpoint_path), 0};
    m.input(checkpoint_path);
    if (in.ck.model.n_spins() != in.disorder.disorder.n_spins)
      throw InvalidArgument("checkpoint N differs from the disorder file");
    in.beta = resolve_beta(in.ck);
    return in;
  }

  SpinSource load_spins(const ExperimentConfig& c, Manifest& m) const {
    if (!samples_path.empty() && !checkpoint_path.empty())
      throw InvalidArgument("give either --samples or --checkpoint, not both");
    if (!samples_path.empty()) {
      fs::path p = samples_path;
      if (fs::is_directory(p)) {
        if (temp_opt->count() == 0) throw InvalidArgument("--temp is required with a sample directory");
        p = slot_for_beta(p, beta_of(temperature));
      }
      SampleSet ss = io::load_sampleset(p);
      m.input(p);
      if (temp_opt->count() > 0 && !same_beta(ss.beta, beta_of(temperature)))
        throw InvalidArgument("sample file temperature differs from --temp");
      return {std::move(ss.spins), ss.beta, "pt"};
    }
    const FlowInput in = load_flow(m);
    const auto sc = shift_coupling(in.disorder.disorder, in.disorder.epsilon);
    Rng rng = derive_rng(c.analysis.seed, {0x666c});
    const Matrix x = sample_flow(in.ck.model, c.analysis.samples, in.ck.model.n_layers(), rng);
    const std::string kind = in.ck.training.value("loss", "forward");
    return {discretize(x, sc, in.beta, rng), in.beta, "flow_" + kind + "_kl"};
  }

  int overlap() {
    Manifest m;
    const ExperimentConfig c = common.resolve(m, "analyze-overlap");
    m.config = to_json(c);
    const SpinSource src = load_spins(c, m);
    Rng rng = derive_rng(c.analysis.seed, {0x6f76});
    const auto h = overlap_histogram(src.spins, c.analysis.pairs, c.analysis.bins, rng, src.beta, src.tag);
    const json j = report::to_json(h);
    m.emit("overlap.csv", report::histogram_csv(h));
    m.emit("overlap.json", j.dump(2) + "\n");
    m.emit("overlap.svg", report::histogram_svg(h, "P(q), " + src.tag + ", T = " + report::num(1 / src.beta)));
    m.results = j["modality"];
    m.write();
    std::cout << j["modality"].dump() << "\n";
    return 0;
  }

  int triangles() {
    Manifest m;
    const ExperimentConfig c = common.resolve(m, "analyze-triangles");
    m.config = to_json(c);
    const SpinSource src = load_spins(c, m);
    Rng rng = derive_rng(c.analysis.seed, {0x7472});
    const auto t = triangle_stats(src.spins, c.analysis.triples, c.analysis.tolerance, rng);
    json j = report::to_json(t);
    j["source"] = src.tag;
    j["beta"] = src.beta;
    m.emit("triangles.json", j.dump(2) + "\n");
    m.emit("triangles.csv", report::triangle_csv(t));
    m.emit("triangles.svg", report::triangle_svg(t, "triangles, " + src.tag));
    m.results = j;
    m.write();
    std::cout << j.dump() << "\n";
    return 0;
  }

  int magnetization_cmd() {
    Manifest m;
    const ExperimentConfig c = common.resolve(m, "analyze-magnetization");
    m.config = to_json(c);
    const SpinSource src = load_spins(c, m);
    json j = report::to_json(magnetization(src.spins));
    j["source"] = src.tag;
    j["beta"] = src.beta;
    m.emit("magnetization.json", j.dump(2) + "\n");
    m.results = {{"M_over_N", j["M_over_N"]}, {"mean_abs_per_site", j["mean_abs_per_site"]}};
    m.write();
    std::cout << m.results.dump() << "\n";
    return 0;
  }

  LogZs resolve_log_z(const io::DisorderFile& f, double beta, Manifest& m) const {
    std::string method = logz;
    const int n = f.disorder.n_spins;
    if (method == "auto") {
      // replica symmetry is exact above T_crit = J; below it use the best available estimate
      if (1.0 / beta > f.disorder.scale) method = "rs";
      else if (n <= kMaxExactSpins) method = "exact";
      else method = "thermo";
    }
    if (method == "exact") return {enumerate_exact(f.disorder, beta).log_z_s, LogZMethod::kExact};
    if (method == "rs") return {-beta * replica_symmetric_free_energy(n, beta, f.disorder.scale), LogZMethod::kReplicaSymmetric};
    if (method == "thermo") {
      if (pt_summary_path.empty()) throw InvalidArgument("thermodynamic integration needs --pt-summary");
      const auto bytes = io::read_file(pt_summary_path);
      m.input(pt_summary_path);
      json s;
      try {
        s = json::parse(bytes.begin(), bytes.end());
      } catch (const json::exception&) {
        throw IoError("malformed PT summary " + pt_summary_path);
      }
      if (s.value("disorder_id", "") != disorder_id(f.disorder)) throw InvalidArgument("PT summary belongs to a different instance");
      const auto betas = s.at("betas").get<std::vector<double>>();
      const auto energies = s.at("mean_energy").get<std::vector<double>>();
      std::vector<std::pair<double, double>> pts;
      for (std::size_t k = 0; k < betas.size(); ++k) pts.emplace_back(betas[k], energies.at(k));
      return {log_z_s_thermo_integration(pts, beta, n), LogZMethod::kThermoIntegration};
    }
    throw InvalidArgument("--logz must be auto, exact, thermo or rs");
  }

  int free_energy() {
    Manifest m;
    const ExperimentConfig c = common.resolve(m, "analyze-free-energy");
    m.config = to_json(c);
    const FlowInput in = load_flow(m);
    const auto sc = shift_coupling(in.disorder.disorder, in.disorder.epsilon);
    RowMatrix data(0, in.disorder.disorder.n_spins);
    if (!data_path.empty()) {
      std::optional<double> b = in.beta;
      data = load_dataset({data_path}, in.disorder.disorder, sc, b, c.analysis.seed, m);
    }
    const LogZs lz = resolve_log_z(in.disorder, in.beta, m);
    KlReportOptions opt;
    opt.eval_samples = c.analysis.samples;
    opt.symmetrize = sym_opt->count() > 0 ? symmetrize : in.ck.training.value("symmetrize", false);
    Rng rng = derive_rng(c.analysis.seed, {0x6665});
    const auto r = kl_report(FlowDensity{in.ck.model}, sc, in.beta, lz, data, rng, opt);
    const json j = report::to_json(r);
    m.emit("free_energy.json", j.dump(2) + "\n");
    m.results = j;
    m.write();
    std::cout << j.dump(2) << "\n";
    return 0;
  }

  int layers() {
    Manifest m;
    const ExperimentConfig c = common.resolve(m, "analyze-layers");
    m.config = to_json(c);
    const FlowInput in = load_flow(m);
    const auto sc = shift_coupling(in.disorder.disorder, in.disorder.epsilon);
    LayerProbeOptions opt;
    opt.n_samples = c.analysis.samples;
    opt.n_pairs = c.analysis.pairs;
    opt.bins = c.analysis.bins;
    opt.n_triples = c.analysis.triples;
    opt.tolerance = c.analysis.tolerance;
    json all = json::array();
    for (int l = 0; l <= in.ck.model.n_layers(); ++l) {
      Rng rng = derive_rng(c.analysis.seed, {0x6c61, static_cast<std::uint64_t>(l)});
      const auto p = layer_probe(in.ck.model, l, sc, in.beta, rng, opt);
      char stem[32];
      std::snprintf(stem, sizeof stem, "layer_%02d", l);
      m.emit(std::string(stem) + "_overlap.csv", report::histogram_csv(p.histogram));
      m.emit(std::string(stem) + "_overlap.svg", report::histogram_svg(p.histogram, "P(q), layer " + std::to_string(l)));
      m.emit(std::string(stem) + "_triangles.csv", report::triangle_csv(p.triangles));
      json j = report::to_json(p.histogram);
      j["layer"] = l;
      j["triangles"] = report::to_json(p.triangles);
      all.push_back(j);
      std::cout << "layer " << l << ": " << j["modality"].dump() << "\n";
    }
    m.emit("layers.json", all.dump(2) + "\n");
    m.write();
    return 0;
  }
};

int run_guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidState& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const json::exception& e) {
    std::cerr << "i/o error: malformed metadata: " << e.what() << "\n";
    return kExitIo;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sgflow: normalizing flows for the Sherrington-Kirkpatrick spin glass"};
  app.require_subcommand(1);

  GenDisorder gen;
  gen.attach(app.add_subcommand("gen-disorder", "draw an SK instance and write it as a container file"));
  SamplePt pt;
  pt.attach(app.add_subcommand("sample-pt", "parallel-tempering samples, one file per temperature"));
  Convert conv;
  conv.attach(app.add_subcommand("convert", "attach continuous samples x ~ p(x|s) to a spin sample file"));
  Train tr;
  tr.attach(app.add_subcommand("train", "train a Real NVP flow by forward or reverse KL"));

  CLI::App* analyze = app.add_subcommand("analyze", "diagnostics of samples and trained flows");
  analyze->require_subcommand(1);
  Analyze a_overlap, a_tri, a_mag, a_free, a_layers;
  a_overlap.attach_shared(analyze->add_subcommand("overlap", "overlap histogram P(q)"));
  a_tri.attach_shared(analyze->add_subcommand("triangles", "ultrametric triangle statistics"));
  a_mag.attach_shared(analyze->add_subcommand("magnetization", "total and per-site magnetization"));
  CLI::App* fe = analyze->add_subcommand("free-energy", "free energies, entropy and KL estimates of a flow");
  a_free.attach_shared(fe);
  fe->add_option("--data", a_free.data_path, "PT sample file for the forward-direction estimates");
  fe->add_option("--logz", a_free.logz, "ln Z_s method: auto, exact, thermo or rs");
  fe->add_option("--pt-summary", a_free.pt_summary_path, "pt_summary.json for thermodynamic integration");
  a_free.sym_opt = fe->add_flag("--symmetrize", a_free.symmetrize, "use the x -> -x symmetrized density");
  a_layers.attach_shared(analyze->add_subcommand("layers", "overlap and triangle probes of every internal layer"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  auto chosen = [&](const char* name) { return app.got_subcommand(name); };
  auto sub = [&](const char* name) { return analyze->got_subcommand(name); };
  return run_guarded([&]() -> int {
    if (chosen("gen-disorder")) return gen.run();
    if (chosen("sample-pt")) return pt.run();
    if (chosen("convert")) return conv.run();
    if (chosen("train")) return tr.run();
    if (sub("overlap")) return a_overlap.overlap();
    if (sub("triangles")) return a_tri.triangles();
    if (sub("magnetization")) return a_mag.magnetization_cmd();
    if (sub("free-energy")) return a_free.free_energy();
    if (sub("layers")) return a_layers.layers();
    return kExitUsage;
  });
}
