#pragma once

// File output: deterministic number formatting, CSV/JSON-lines writers,
// checkpoint files and the JSON weight dump.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"
#include "radaralloc/env.hpp"
#include "radaralloc/nn.hpp"
#include "radaralloc/signal.hpp"

namespace radaralloc::io {

namespace fs = std::filesystem;

/// Shortest round-trippable text for a double; NaN prints as an empty field.
inline std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  double back = 0;
  for (int prec = 6; prec < 17; ++prec) {
    char shorter[32];
    std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
    std::sscanf(shorter, "%lf", &back);
    if (back == v) return shorter;
  }
  return buf;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Spectra

/// bin_index, frequency_hz, magnitude (sqrt of the averaged power).
inline std::string spectrum_csv(const signal::PowerSpectrum& spec) {
  std::string out = "bin_index,frequency_hz,magnitude\n";
  for (std::size_t m = 0; m < spec.power.size(); ++m)
    out += std::to_string(m) + ',' + num(spec.frequency(static_cast<double>(m))) + ',' +
           num(std::sqrt(spec.power[m])) + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

template <class T>
void save_checkpoint(const fs::path& path, const nn::QNetwork<T>& net) {
  write_file(path, nn::serialize(net));
}

template <class T>
nn::QNetwork<T> load_checkpoint(const fs::path& path) {
  return nn::deserialize<T>(read_file(path));
}

/// Layer-keyed weights for inspection. Matrices are arrays of rows.
template <class T>
nlohmann::json weights_json(const nn::QNetwork<T>& net) {
  auto matrix = [](const auto& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(static_cast<double>(m(i, j)));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  auto vector = [](const auto& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(static_cast<double>(v(i)));
    return a;
  };
  const auto& s = net.shape();
  nlohmann::json j;
  j["shape"] = {{"input", s.input}, {"fcl", s.fcl}, {"lstm", s.lstm}, {"output", s.output}};
  j["fcl"] = {{"weight", matrix(net.fc_weight())}, {"bias", vector(net.fc_bias())}};
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < s.lstm.size(); ++l)
    layers.push_back({{"gate_order", "i,f,g,o"},
                      {"weight", matrix(net.lstm_weight(l))},
                      {"bias", vector(net.lstm_bias(l))}});
  j["lstm"] = std::move(layers);
  j["head"] = {{"weight", matrix(net.head_weight())}, {"bias", vector(net.head_bias())}};
  return j;
}

// ---------------------------------------------------------------------------
// Episode traces

/// Appends one JSON object per car for the step just taken.
inline void append_trace(std::string& out, const std::string& policy, long episode, int t,
                         std::span<const int> actions, const env::StepResult& r,
                         const traffic::ScenarioState& s) {
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const auto& c = s.cars[i];
    const auto& o = r.observations[i];
    nlohmann::ordered_json j;
    j["policy"] = policy;
    j["episode"] = episode;
    j["t"] = t;
    j["car_id"] = c.id;
    j["lane"] = c.lane;
    j["action"] = actions[i];
    j["eta"] = r.outcomes[i].eta;
    j["inr"] = r.outcomes[i].inr;
    j["reward"] = r.outcomes[i].reward;
    j["position"] = c.position;
    j["speed"] = c.speed;
    j["front_same_gap"] = o.front_same_gap;
    j["front_diff_gap"] = o.front_diff_gap;
    out += j.dump();
    out += '\n';
  }
}

}  // namespace radaralloc::io
