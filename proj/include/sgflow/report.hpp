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

#ifndef SGFLOW_REPORT_HPP
#define SGFLOW_REPORT_HPP

// CSV, JSON and SVG renderings of analysis results. CSV and JSON are the
// canonical outputs; SVG is a convenience view with fixed axes.

#include <algorithm>
#include <cstdio>
#include <string>

#include "json.hpp"

#include "sgflow/analytics.hpp"
#include "sgflow/trainer.hpp"

namespace sgflow::report {

using json = nlohmann::json;

/// Shortest round-trip decimal form, locale independent.
inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string histogram_csv(const OverlapHistogram& h) {
  std::string s = "bin_lo,bin_hi,center,count\n";
  for (std::size_t k = 0; k < h.bins(); ++k)
    s += num(h.bin_edges[k]) + "," + num(h.bin_edges[k + 1]) + "," + num(h.center(k)) + "," +
         std::to_string(h.counts[k]) + "\n";
  return s;
}

inline json to_json(const Modality& m) {
  return {{"bimodal", m.bimodal},        {"unimodal_at_zero", m.unimodal_at_zero},
          {"q_mode", m.q_mode},          {"q_neg", m.q_neg},
          {"q_pos", m.q_pos},            {"peak_neg", m.peak_neg},
          {"peak_pos", m.peak_pos},      {"center", m.center}};
}

inline json to_json(const OverlapHistogram& h) {
  return {{"source", h.source}, {"beta", h.beta}, {"n_pairs", h.n_pairs}, {"bins", h.bins()},
          {"counts", h.counts}, {"modality", to_json(analyze_modality(h))}};
}

inline json to_json(const TriangleStats& t) {
  return {{"n_triples", t.n_triples},
          {"tolerance", t.tolerance},
          {"equilateral", t.equilateral()},
          {"acute_isosceles", t.isosceles()},
          {"other", t.other()}};
}

inline std::string triangle_csv(const TriangleStats& t) {
  std::string s = "dmax_minus_dmid,dmid_minus_dmin\n";
  for (const auto& [a, b] : t.raw_points) s += num(a) + "," + num(b) + "\n";
  return s;
}

inline json to_json(const Estimate& e) { return {{"mean", e.mean}, {"std_error", e.std_error}}; }

inline json to_json(const FreeEnergyReport& r) {
  json j = {{"beta", r.beta},
            {"log_z_s", {{"value", r.log_z_s.value}, {"method", to_string(r.log_z_s.method)}}},
            {"log_z_x", r.log_z_x},
            {"helmholtz_x", r.helmholtz_x},
            {"gibbs_x", to_json(r.gibbs_x)},
            {"reverse_loss", to_json(r.reverse_loss)},
            {"reverse_kl", to_json(r.reverse_kl)},
            {"reverse_kl_negative", r.reverse_kl_negative}};
  if (r.forward_loss.std_error > 0 || r.forward_loss.mean != 0) {
    j["forward_loss"] = to_json(r.forward_loss);
    j["shannon_entropy_x"] = to_json(r.shannon_entropy_x);
    j["forward_kl"] = to_json(r.forward_kl);
    j["forward_kl_negative"] = r.forward_kl_negative;
  }
  return j;
}

inline json to_json(const Magnetization& m) {
  return {{"M", m.total},
          {"M_over_N", m.total / static_cast<double>(m.per_site.size())},
          {"mean_abs_per_site", m.mean_abs_per_site()},
          {"per_site", std::vector<double>(m.per_site.begin(), m.per_site.end())}};
}

inline std::string loss_csv(const LossTrace& t) {
  std::string s = "update,loss\n";
  for (std::size_t k = 0; k < t.losses.size(); ++k) s += std::to_string(k + 1) + "," + num(t.losses[k]) + "\n";
  return s;
}

/// Wall-clock time is left out so reruns stay byte-identical.
inline std::string snapshot_csv(const LossTrace& t) {
  std::string s = "update,loss,std_error\n";
  for (const auto& p : t.snapshots) s += std::to_string(p.update) + "," + num(p.loss) + "," + num(p.std_error) + "\n";
  return s;
}

namespace detail {

constexpr double kW = 480, kH = 320, kPad = 40;

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string svg_open(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kW) + "\" height=\"" + fmt(kH) +
         "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         "<text x=\"" + fmt(kW / 2) + "\" y=\"16\" text-anchor=\"middle\">" + title + "</text>\n";
}

inline std::string axes(const std::string& x0, const std::string& x1, const std::string& xlabel) {
  const double b = kH - kPad;
  return "<line x1=\"" + fmt(kPad) + "\" y1=\"" + fmt(b) + "\" x2=\"" + fmt(kW - kPad) + "\" y2=\"" + fmt(b) +
         "\" stroke=\"black\"/>\n<line x1=\"" + fmt(kPad) + "\" y1=\"" + fmt(kPad) + "\" x2=\"" + fmt(kPad) +
         "\" y2=\"" + fmt(b) + "\" stroke=\"black\"/>\n<text x=\"" + fmt(kPad) + "\" y=\"" + fmt(b + 14) +
         "\" text-anchor=\"middle\">" + x0 + "</text>\n<text x=\"" + fmt(kW - kPad) + "\" y=\"" + fmt(b + 14) +
         "\" text-anchor=\"middle\">" + x1 + "</text>\n<text x=\"" + fmt(kW / 2) + "\" y=\"" + fmt(kH - 8) +
         "\" text-anchor=\"middle\">" + xlabel + "</text>\n";
}

}  // namespace detail

/// Bar chart over q in [-1, 1], heights normalized to the tallest bin.
inline std::string histogram_svg(const OverlapHistogram& h, const std::string& title) {
  using namespace detail;
  std::string s = svg_open(title) + axes("-1", "1", "q");
  const long peak = std::max<long>(1, *std::max_element(h.counts.begin(), h.counts.end()));
  const double span = kW - 2 * kPad, height = kH - 2 * kPad;
  for (std::size_t k = 0; k < h.bins(); ++k) {
    const double x = kPad + span * (h.bin_edges[k] + 1) / 2, w = span * (h.bin_edges[k + 1] - h.bin_edges[k]) / 2;
    const double bh = height * static_cast<double>(h.counts[k]) / static_cast<double>(peak);
    s += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(kH - kPad - bh) + "\" width=\"" + fmt(w) + "\" height=\"" + fmt(bh) +
         "\" fill=\"steelblue\"/>\n";
  }
  return s + "</svg>\n";
}

/// Scatter of (d_max - d_mid, d_mid - d_min) on [0, 0.5]^2.
inline std::string triangle_svg(const TriangleStats& t, const std::string& title) {
  using namespace detail;
  std::string s = svg_open(title) + axes("0", "0.5", "d_max - d_mid");
  const double span = kW - 2 * kPad, height = kH - 2 * kPad;
  for (const auto& [a, b] : t.raw_points) {
    const double x = kPad + span * std::min(a, 0.5) / 0.5, y = kH - kPad - height * std::min(b, 0.5) / 0.5;
    s += "<circle cx=\"" + fmt(x) + "\" cy=\"" + fmt(y) + "\" r=\"1.5\" fill=\"black\" fill-opacity=\"0.3\"/>\n";
  }
  return s + "</svg>\n";
}

}  // namespace sgflow::report

#endif  // SGFLOW_REPORT_HPP
