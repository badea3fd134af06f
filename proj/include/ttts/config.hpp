// Copyright 2026 The ttts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ttts/acoustic_model.hpp"
#include "ttts/errors.hpp"
#include "ttts/predictors.hpp"
#include "ttts/triplet.hpp"

namespace ttts {

/// Everything a training run needs, stage flags included. Serialized as a
/// flat `key = value` text file (comments start with '#').
struct TrainConfig {
  int stage = 1;
  double lr = 1e-4;
  int batch_size = 16;
  double lambda_adv = 0.025;
  TripletWeights triplet_weights;  // alpha 1.0, beta 0.02
  std::vector<std::string> freeze_prefixes = {"embed.speaker", "embed.phoneme", "cp.",
                                              "sp."};
  long long max_steps = 1000;
  int convergence_window = 100;     // moving-average window (stage 2 stop rule)
  double convergence_floor = 0.01;  // minimum relative improvement per window
  std::uint64_t seed = 1;

  bool normalize_losses = true;             // false: raw per-utterance sums
  bool literal_stage2_fe_formula = false;   // FE stage 2 adds the triplet term twice
  bool triplet_teacher_forced_durations = false;
  bool dfe_in_triplet_synthesis = false;    // prosody transfer while constructing
  int triplet_cap = 4;                      // synthesized positives per batch

  AcousticConfig acoustic;
  PredictorConfig predictors;

  // CLI-facing paths (optional for library use)
  std::string corpus_dir;
  std::string out_dir;
  std::string init_checkpoint;

  void validate() const {
    if (stage != 1 && stage != 2) throw ConfigError("config: stage must be 1 or 2");
    if (!(lr > 0)) throw ConfigError("config: lr must be > 0");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (lambda_adv < 0) throw ConfigError("config: lambda_adv must be >= 0");
    if (max_steps < 0) throw ConfigError("config: max_steps must be >= 0");
    if (convergence_window < 1) throw ConfigError("config: convergence window >= 1");
    if (stage == 2 && freeze_prefixes.empty())
      throw ConfigError("config: stage 2 requires a nonempty freeze set");
    triplet_weights.validate();
    acoustic.validate();
    predictors.validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config: expected true/false for " + key);
}

inline std::vector<std::string> split_csv(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

inline TrainConfig parse_train_config(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);

    auto as_int = [&] { return std::stoll(value); };
    auto as_real = [&] { return std::stod(value); };
    auto as_bool = [&] { return detail::parse_bool(value, key); };

    if (key == "stage") c.stage = static_cast<int>(as_int());
    else if (key == "lr") c.lr = as_real();
    else if (key == "batch_size") c.batch_size = static_cast<int>(as_int());
    else if (key == "lambda_adv") c.lambda_adv = as_real();
    else if (key == "alpha") c.triplet_weights.alpha = as_real();
    else if (key == "beta") c.triplet_weights.beta = as_real();
    else if (key == "freeze_prefixes") c.freeze_prefixes = detail::split_csv(value);
    else if (key == "max_steps") c.max_steps = as_int();
    else if (key == "convergence_window") c.convergence_window = static_cast<int>(as_int());
    else if (key == "convergence_floor") c.convergence_floor = as_real();
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(as_int());
    else if (key == "normalize_losses") c.normalize_losses = as_bool();
    else if (key == "literal_stage2_fe_formula") c.literal_stage2_fe_formula = as_bool();
    else if (key == "triplet_teacher_forced_durations")
      c.triplet_teacher_forced_durations = as_bool();
    else if (key == "dfe_in_triplet_synthesis") c.dfe_in_triplet_synthesis = as_bool();
    else if (key == "triplet_cap") c.triplet_cap = static_cast<int>(as_int());
    else if (key == "corpus_dir") c.corpus_dir = value;
    else if (key == "out_dir") c.out_dir = value;
    else if (key == "init_checkpoint") c.init_checkpoint = value;
    else if (key == "fe_enabled" || key == "acoustic.fe_enabled")
      c.acoustic.fe_enabled = as_bool();
    else if (key == "acoustic.n_mels") c.acoustic.n_mels = static_cast<int>(as_int());
    else if (key == "acoustic.phoneme_emb_dim")
      c.acoustic.phoneme_emb_dim = static_cast<int>(as_int());
    else if (key == "acoustic.speaker_emb_dim")
      c.acoustic.speaker_emb_dim = static_cast<int>(as_int());
    else if (key == "acoustic.encoder_dim")
      c.acoustic.encoder_dim = static_cast<int>(as_int());
    else if (key == "acoustic.decoder_dim")
      c.acoustic.decoder_dim = static_cast<int>(as_int());
    else if (key == "acoustic.postnet_channels")
      c.acoustic.postnet_channels = static_cast<int>(as_int());
    else if (key == "acoustic.duration_hidden")
      c.acoustic.duration_hidden = static_cast<int>(as_int());
    else if (key == "acoustic.prosody_hidden")
      c.acoustic.prosody_hidden = static_cast<int>(as_int());
    else if (key == "acoustic.f0_bins") c.acoustic.f0_bins = static_cast<int>(as_int());
    else if (key == "acoustic.energy_bins")
      c.acoustic.energy_bins = static_cast<int>(as_int());
    else if (key == "acoustic.prosody_emb_dim")
      c.acoustic.prosody_emb_dim = static_cast<int>(as_int());
    else if (key == "acoustic.f0_min_hz") c.acoustic.f0_min_hz = as_real();
    else if (key == "acoustic.f0_max_hz") c.acoustic.f0_max_hz = as_real();
    else if (key == "acoustic.energy_min") c.acoustic.energy_min = as_real();
    else if (key == "acoustic.energy_max") c.acoustic.energy_max = as_real();
    else if (key == "acoustic.duration_log_domain")
      c.acoustic.duration_log_domain = as_bool();
    else if (key == "predictors.ref_channels")
      c.predictors.ref_channels = static_cast<int>(as_int());
    else if (key == "predictors.ref_hidden")
      c.predictors.ref_hidden = static_cast<int>(as_int());
    else if (key == "predictors.ctx_hidden")
      c.predictors.ctx_hidden = static_cast<int>(as_int());
    else
      throw ConfigError("config: unknown key: " + key);
  }
  return c;
}

inline std::string serialize_train_config(const TrainConfig& c) {
  std::ostringstream out;
  out.precision(17);
  auto b = [](bool v) { return v ? "true" : "false"; };
  out << "stage = " << c.stage << "\n";
  out << "lr = " << c.lr << "\n";
  out << "batch_size = " << c.batch_size << "\n";
  out << "lambda_adv = " << c.lambda_adv << "\n";
  out << "alpha = " << c.triplet_weights.alpha << "\n";
  out << "beta = " << c.triplet_weights.beta << "\n";
  out << "freeze_prefixes = ";
  for (std::size_t i = 0; i < c.freeze_prefixes.size(); ++i)
    out << (i ? "," : "") << c.freeze_prefixes[i];
  out << "\n";
  out << "max_steps = " << c.max_steps << "\n";
  out << "convergence_window = " << c.convergence_window << "\n";
  out << "convergence_floor = " << c.convergence_floor << "\n";
  out << "seed = " << c.seed << "\n";
  out << "normalize_losses = " << b(c.normalize_losses) << "\n";
  out << "literal_stage2_fe_formula = " << b(c.literal_stage2_fe_formula) << "\n";
  out << "triplet_teacher_forced_durations = " << b(c.triplet_teacher_forced_durations)
      << "\n";
  out << "dfe_in_triplet_synthesis = " << b(c.dfe_in_triplet_synthesis) << "\n";
  out << "triplet_cap = " << c.triplet_cap << "\n";
  if (!c.corpus_dir.empty()) out << "corpus_dir = " << c.corpus_dir << "\n";
  if (!c.out_dir.empty()) out << "out_dir = " << c.out_dir << "\n";
  if (!c.init_checkpoint.empty()) out << "init_checkpoint = " << c.init_checkpoint << "\n";
  out << "acoustic.n_mels = " << c.acoustic.n_mels << "\n";
  out << "acoustic.phoneme_emb_dim = " << c.acoustic.phoneme_emb_dim << "\n";
  out << "acoustic.speaker_emb_dim = " << c.acoustic.speaker_emb_dim << "\n";
  out << "acoustic.encoder_dim = " << c.acoustic.encoder_dim << "\n";
  out << "acoustic.decoder_dim = " << c.acoustic.decoder_dim << "\n";
  out << "acoustic.postnet_channels = " << c.acoustic.postnet_channels << "\n";
  out << "acoustic.duration_hidden = " << c.acoustic.duration_hidden << "\n";
  out << "acoustic.prosody_hidden = " << c.acoustic.prosody_hidden << "\n";
  out << "acoustic.fe_enabled = " << b(c.acoustic.fe_enabled) << "\n";
  out << "acoustic.f0_bins = " << c.acoustic.f0_bins << "\n";
  out << "acoustic.energy_bins = " << c.acoustic.energy_bins << "\n";
  out << "acoustic.prosody_emb_dim = " << c.acoustic.prosody_emb_dim << "\n";
  out << "acoustic.f0_min_hz = " << c.acoustic.f0_min_hz << "\n";
  out << "acoustic.f0_max_hz = " << c.acoustic.f0_max_hz << "\n";
  out << "acoustic.energy_min = " << c.acoustic.energy_min << "\n";
  out << "acoustic.energy_max = " << c.acoustic.energy_max << "\n";
  out << "acoustic.duration_log_domain = " << b(c.acoustic.duration_log_domain) << "\n";
  out << "predictors.ref_channels = " << c.predictors.ref_channels << "\n";
  out << "predictors.ref_hidden = " << c.predictors.ref_hidden << "\n";
  out << "predictors.ctx_hidden = " << c.predictors.ctx_hidden << "\n";
  return out.str();
}

inline TrainConfig read_train_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_train_config(ss.str());
}

inline void write_train_config(const std::filesystem::path& path, const TrainConfig& c) {
  std::ofstream f(path);
  if (!f) throw IoError("config: cannot write " + path.string());
  f << serialize_train_config(c);
}

}  // namespace ttts
