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

#ifndef SGFLOW_IO_HPP
#define SGFLOW_IO_HPP

// Container files: an 8-byte magic "SGFLOW01", a little-endian uint64 header
// length, a compact JSON header, then a raw little-endian payload. The
// per-kind payload layouts are documented in docs/FORMATS.md.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "sgflow/common.hpp"
#include "sgflow/flow.hpp"
#include "sgflow/hash.hpp"
#include "sgflow/pt.hpp"
#include "sgflow/spinglass.hpp"

namespace sgflow::io {

static_assert(std::endian::native == std::endian::little, "payloads are written in host order; little-endian host required");

using json = nlohmann::json;

inline constexpr std::string_view kMagic = "SGFLOW01";
inline constexpr int kFormatVersion = 1;

using Bytes = std::vector<std::uint8_t>;

struct Container {
  json header;
  Bytes payload;
};

inline Bytes encode(const Container& c) {
  const std::string h = c.header.dump();
  Bytes out;
  out.reserve(kMagic.size() + 8 + h.size() + c.payload.size());
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  const std::uint64_t len = h.size();
  const auto* lp = reinterpret_cast<const std::uint8_t*>(&len);
  out.insert(out.end(), lp, lp + 8);
  out.insert(out.end(), h.begin(), h.end());
  out.insert(out.end(), c.payload.begin(), c.payload.end());
  return out;
}

inline Container decode(const Bytes& bytes) {
  if (bytes.size() < kMagic.size() + 8 || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
    throw IoError("not an sgflow container (bad magic)");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + kMagic.size(), 8);
  const std::size_t start = kMagic.size() + 8;
  if (len > bytes.size() - start) throw IoError("truncated container header");
  Container c;
  try {
    c.header = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                           bytes.begin() + static_cast<std::ptrdiff_t>(start + len));
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed container header: ") + e.what());
  }
  c.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start + len), bytes.end());
  return c;
}

inline Bytes read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& p, std::string_view data) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed for " + p.string());
}

inline void write_file(const std::filesystem::path& p, const Bytes& data) {
  write_file(p, std::string_view(reinterpret_cast<const char*>(data.data()), data.size()));
}

inline std::string file_sha256(const std::filesystem::path& p) { return sha256_hex(read_file(p)); }

namespace detail {

template <class T>
void append(Bytes& out, const T* data, std::size_t n) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(data);
  out.insert(out.end(), p, p + n * sizeof(T));
}

class Reader {
 public:
  explicit Reader(const Bytes& b) : bytes_(b) {}
  template <class T>
  void read(T* dst, std::size_t n) {
    const std::size_t len = n * sizeof(T);
    if (pos_ + len > bytes_.size()) throw IoError("truncated payload");
    std::memcpy(dst, bytes_.data() + pos_, len);
    pos_ += len;
  }
  void finish() const {
    if (pos_ != bytes_.size()) throw IoError("trailing bytes in payload");
  }

 private:
  const Bytes& bytes_;
  std::size_t pos_ = 0;
};

inline void expect_kind(const json& h, const std::string& kind) {
  if (!h.contains("kind") || h["kind"] != kind) throw IoError("container is not a " + kind + " file");
  if (h.value("version", 0) != kFormatVersion) throw IoError("unsupported " + kind + " format version");
}

template <class T>
T get(const json& h, const char* key) {
  try {
    return h.at(key).get<T>();
  } catch (const json::exception& e) {
    throw IoError(std::string("header field '") + key + "': " + e.what());
  }
}

}  // namespace detail

// ---- disorder -------------------------------------------------------------

struct DisorderFile {
  DisorderRealization disorder;
  double epsilon = 0.01;
};

inline Bytes encode_disorder(const DisorderRealization& d, double epsilon) {
  d.validate();
  Container c;
  c.header = {{"kind", "disorder"}, {"version", kFormatVersion}, {"N", d.n_spins}, {"scale", d.scale},
              {"seed", d.seed},     {"epsilon", epsilon},        {"format", "f64le"}};
  const RowMatrix j = d.couplings;
  detail::append(c.payload, j.data(), static_cast<std::size_t>(j.size()));
  detail::append(c.payload, d.fields.data(), static_cast<std::size_t>(d.fields.size()));
  return encode(c);
}

inline DisorderFile decode_disorder(const Bytes& bytes) {
  const Container c = decode(bytes);
  detail::expect_kind(c.header, "disorder");
  if (detail::get<std::string>(c.header, "format") != "f64le") throw IoError("disorder: unsupported payload format");
  DisorderFile f;
  auto& d = f.disorder;
  d.n_spins = detail::get<int>(c.header, "N");
  if (d.n_spins < 2) throw IoError("disorder: N must be >= 2");
  d.scale = detail::get<double>(c.header, "scale");
  d.seed = detail::get<std::uint64_t>(c.header, "seed");
  f.epsilon = detail::get<double>(c.header, "epsilon");
  detail::Reader r(c.payload);
  RowMatrix j(d.n_spins, d.n_spins);
  r.read(j.data(), static_cast<std::size_t>(j.size()));
  d.couplings = j;
  d.fields.resize(d.n_spins);
  r.read(d.fields.data(), static_cast<std::size_t>(d.n_spins));
  r.finish();
  try {
    d.validate();
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("disorder: ") + e.what());
  }
  return f;
}

inline void save_disorder(const std::filesystem::path& p, const DisorderRealization& d, double epsilon) {
  write_file(p, encode_disorder(d, epsilon));
}
inline DisorderFile load_disorder(const std::filesystem::path& p) { return decode_disorder(read_file(p)); }

// ---- sample sets ----------------------------------------------------------

inline Bytes encode_sampleset(const SampleSet& ss) {
  if (ss.xs && (ss.xs->rows() != ss.size() || ss.xs->cols() != ss.n_spins()))
    throw InvalidArgument("sampleset: xs shape differs from spins");
  Container c;
  c.header = {{"kind", "sampleset"},   {"version", kFormatVersion}, {"disorder_id", ss.disorder_id},
              {"beta", ss.beta},       {"M", ss.size()},            {"N", ss.n_spins()},
              {"has_xs", ss.xs.has_value()}, {"seed", ss.seed},     {"sweeps", ss.sweeps_per_sample},
              {"burn_in", ss.burn_in}, {"spins_format", "i8"},      {"xs_format", "f64le"}};
  detail::append(c.payload, ss.spins.data(), static_cast<std::size_t>(ss.spins.size()));
  if (ss.xs) detail::append(c.payload, ss.xs->data(), static_cast<std::size_t>(ss.xs->size()));
  return encode(c);
}

inline SampleSet decode_sampleset(const Bytes& bytes) {
  const Container c = decode(bytes);
  detail::expect_kind(c.header, "sampleset");
  SampleSet ss;
  ss.disorder_id = detail::get<std::string>(c.header, "disorder_id");
  ss.beta = detail::get<double>(c.header, "beta");
  const auto m = detail::get<Eigen::Index>(c.header, "M");
  const auto n = detail::get<Eigen::Index>(c.header, "N");
  if (m < 0 || n < 1) throw IoError("sampleset: bad shape");
  ss.seed = detail::get<std::uint64_t>(c.header, "seed");
  ss.sweeps_per_sample = detail::get<int>(c.header, "sweeps");
  ss.burn_in = detail::get<long>(c.header, "burn_in");
  detail::Reader r(c.payload);
  ss.spins.resize(m, n);
  r.read(ss.spins.data(), static_cast<std::size_t>(m * n));
  for (Eigen::Index k = 0; k < ss.spins.size(); ++k)
    if (ss.spins.data()[k] != 1 && ss.spins.data()[k] != -1) throw IoError("sampleset: spin entry not +-1");
  if (detail::get<bool>(c.header, "has_xs")) {
    RowMatrix xs(m, n);
    r.read(xs.data(), static_cast<std::size_t>(m * n));
    ss.xs = std::move(xs);
  }
  r.finish();
  return ss;
}

inline void save_sampleset(const std::filesystem::path& p, const SampleSet& ss) { write_file(p, encode_sampleset(ss)); }
inline SampleSet load_sampleset(const std::filesystem::path& p) { return decode_sampleset(read_file(p)); }

// ---- checkpoints ----------------------------------------------------------

inline std::string mask_bits(const Vector& mask) {
  std::string s;
  for (Eigen::Index i = 0; i < mask.size(); ++i) s.push_back(mask[i] != 0.0 ? '1' : '0');
  return s;
}

inline Vector mask_from_bits(const std::string& s) {
  Vector m(static_cast<Eigen::Index>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '0' && s[i] != '1') throw IoError("checkpoint: mask must be a bitstring");
    m[static_cast<Eigen::Index>(i)] = s[i] == '1' ? 1.0 : 0.0;
  }
  return m;
}

/// Weights are stored per layer (s_net then t_net), per dense layer the
/// out x in weight matrix row-major followed by the bias.
inline Bytes encode_checkpoint(const FlowModel& model, const json& training = json::object()) {
  Container c;
  json masks = json::array();
  for (const auto& l : model.layers()) masks.push_back(mask_bits(l.mask));
  const auto& first = model.layers().front();
  c.header = {{"kind", "checkpoint"},
              {"version", kFormatVersion},
              {"N", model.n_spins()},
              {"L", model.n_layers()},
              {"masks", masks},
              {"layer_dims", first.s_net.dims()},
              {"activations",
               {{"hidden", "leaky_relu"},
                {"slope", first.s_net.slope()},
                {"s_final", to_string(first.s_net.final_activation())},
                {"t_final", to_string(first.t_net.final_activation())}}},
              {"seed", model.seed()},
              {"format", "f64le"},
              {"training", training}};
  for (const auto* d : model.dense_blocks()) {
    const RowMatrix w = d->weight;
    detail::append(c.payload, w.data(), static_cast<std::size_t>(w.size()));
    detail::append(c.payload, d->bias.data(), static_cast<std::size_t>(d->bias.size()));
  }
  return encode(c);
}

struct Checkpoint {
  FlowModel model;
  json training;
};

inline Checkpoint decode_checkpoint(const Bytes& bytes) {
  const Container c = decode(bytes);
  detail::expect_kind(c.header, "checkpoint");
  const int n = detail::get<int>(c.header, "N");
  const int n_layers = detail::get<int>(c.header, "L");
  const auto masks = detail::get<std::vector<std::string>>(c.header, "masks");
  const auto dims = detail::get<std::vector<int>>(c.header, "layer_dims");
  const json& act = c.header.at("activations");
  const double slope = detail::get<double>(act, "slope");
  const Activation s_final = activation_from_string(detail::get<std::string>(act, "s_final"));
  const Activation t_final = activation_from_string(detail::get<std::string>(act, "t_final"));
  if (static_cast<int>(masks.size()) != n_layers) throw IoError("checkpoint: mask count differs from L");
  if (dims.size() < 2 || dims.front() != n || dims.back() != n) throw IoError("checkpoint: layer_dims inconsistent with N");

  std::vector<CouplingLayer> layers;
  for (int l = 0; l < n_layers; ++l) {
    CouplingLayer layer;
    layer.mask = mask_from_bits(masks[static_cast<std::size_t>(l)]);
    layer.s_net = Mlp::zeros(dims, s_final, slope);
    layer.t_net = Mlp::zeros(dims, t_final, slope);
    layers.push_back(std::move(layer));
  }
  Checkpoint ck;
  try {
    ck.model = FlowModel(n, std::move(layers), detail::get<std::uint64_t>(c.header, "seed"));
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  detail::Reader r(c.payload);
  for (auto* d : ck.model.dense_blocks()) {
    RowMatrix w(d->weight.rows(), d->weight.cols());
    r.read(w.data(), static_cast<std::size_t>(w.size()));
    d->weight = w;
    r.read(d->bias.data(), static_cast<std::size_t>(d->bias.size()));
  }
  r.finish();
  ck.training = c.header.value("training", json::object());
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& p, const FlowModel& m, const json& training = json::object()) {
  write_file(p, encode_checkpoint(m, training));
}
inline Checkpoint load_checkpoint(const std::filesystem::path& p) { return decode_checkpoint(read_file(p)); }

}  // namespace sgflow::io

#endif  // SGFLOW_IO_HPP
