// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/dataspace/gamma.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "danas/common/error.hpp"

namespace danas::data {

template <typename T>
GammaState<T>::GammaState(std::vector<DataConfig> cfgs)
    : configs(std::move(cfgs)), gamma{"gamma", Tensor<T>(Shape{std::max<std::size_t>(configs.size(), 1)}, T{0})} {
  require(!configs.empty(), "GammaState: no data configs");
}

template <typename T>
void GammaState<T>::freeze(int epoch) {
  if (!frozen) {
    frozen = true;
    frozen_epoch = epoch;
  }
}

template <typename T>
void GammaState<T>::snapshot(int epoch) {
  history.push_back(GammaSnapshot{epoch, gamma_values(*this), gamma_weights(*this)});
}

template <typename T>
void GammaState<T>::note_gradient() {
  ++gradient_evaluations;
  if (frozen) {
    ++post_freeze_gradient_evaluations;
  }
}

std::vector<double> softmax_weights(std::span<const double> gamma) {
  require(!gamma.empty(), "softmax_weights: empty vector");
  const double top = *std::max_element(gamma.begin(), gamma.end());
  std::vector<double> w(gamma.size());
  double total = 0.0;
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    w[i] = std::exp(gamma[i] - top);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

bool double_rule(std::span<const double> values) {
  require(values.size() >= 2, "early stop needs at least two configs");
  double first = -INFINITY, second = -INFINITY;
  for (double v : values) {
    if (v > first) {
      second = first;
      first = v;
    } else if (v > second) {
      second = v;
    }
  }
  return first >= 2.0 * second;
}

std::size_t argmax_lowest(std::span<const double> values) {
  require(!values.empty(), "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

template <typename T>
std::vector<double> gamma_values(const GammaState<T>& g) {
  std::vector<double> out;
  for (T v : g.gamma.value.values()) out.push_back(static_cast<double>(v));
  return out;
}

template <typename T>
std::vector<double> gamma_weights(const GammaState<T>& g) {
  const std::vector<double> v = gamma_values(g);
  return softmax_weights(v);
}

template <typename T>
bool early_stop_check(const GammaState<T>& g, EarlyStopMode mode) {
  return mode == EarlyStopMode::kWeights ? double_rule(gamma_weights(g)) : double_rule(gamma_values(g));
}

template <typename T>
std::size_t select_index(const GammaState<T>& g) {
  // softmax is monotone, so argmax over weights and over gamma agree; weights are
  // used so exact ties in gamma stay exact.
  return argmax_lowest(gamma_weights(g));
}

template <typename T>
DataConfig select_config(const GammaState<T>& g) {
  return g.configs[select_index(g)];
}

std::vector<GammaRow> gamma_rows(std::span<const DataConfig> configs, std::span<const GammaSnapshot> history) {
  std::vector<GammaRow> rows;
  for (const GammaSnapshot& s : history) {
    require(s.gamma.size() == configs.size() && s.weights.size() == configs.size(),
            "gamma_rows: snapshot length does not match the config list");
    for (std::size_t d = 0; d < configs.size(); ++d) {
      rows.push_back(GammaRow{s.epoch, d, configs[d], s.gamma[d], s.weights[d]});
    }
  }
  return rows;
}

std::string format_gamma_csv(std::span<const GammaRow> rows) {
  std::string out = kGammaCsvHeader;
  out += '\n';
  for (const GammaRow& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{}\n", r.epoch, r.config_index, r.config.window, r.config.hop,
                       r.config.mels, r.gamma, r.weight);
  }
  return out;
}

namespace {

template <typename N>
N parse_field(std::string_view s, int line) {
  N v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError(fmt::format("gamma csv line {}: bad field '{}'", line, s));
  }
  return v;
}

}  // namespace

std::vector<GammaRow> parse_gamma_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kGammaCsvHeader) {
    throw FormatError("gamma csv: missing or unexpected header");
  }
  std::vector<GammaRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos; rest.remove_prefix(pos + 1)) {
      f.push_back(rest.substr(0, pos));
    }
    f.push_back(rest);
    if (f.size() != 7) {
      throw FormatError(fmt::format("gamma csv line {}: expected 7 fields, got {}", lineno, f.size()));
    }
    GammaRow r;
    r.epoch = parse_field<int>(f[0], lineno);
    r.config_index = parse_field<std::size_t>(f[1], lineno);
    r.config = DataConfig{parse_field<int>(f[2], lineno), parse_field<int>(f[3], lineno), parse_field<int>(f[4], lineno)};
    r.gamma = parse_field<double>(f[5], lineno);
    r.weight = parse_field<double>(f[6], lineno);
    rows.push_back(r);
  }
  return rows;
}

void write_gamma_csv(const std::filesystem::path& path, std::span<const GammaRow> rows) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << format_gamma_csv(rows);
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

std::vector<GammaRow> read_gamma_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_gamma_csv(ss.str());
}

#define DANAS_INSTANTIATE_GAMMA(T)                                             \
  template struct GammaState<T>;                                               \
  template std::vector<double> gamma_values<T>(const GammaState<T>&);          \
  template std::vector<double> gamma_weights<T>(const GammaState<T>&);         \
  template bool early_stop_check<T>(const GammaState<T>&, EarlyStopMode);      \
  template std::size_t select_index<T>(const GammaState<T>&);                  \
  template DataConfig select_config<T>(const GammaState<T>&);

DANAS_INSTANTIATE_GAMMA(float)
DANAS_INSTANTIATE_GAMMA(double)

}  // namespace danas::data
