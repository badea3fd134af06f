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

// corpus.jsonl layout: one header record (registry + generator parameters)
// followed by one record per utterance. Mel matrices live in side files
// referenced by relative path.

#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ttts/corpus.hpp"
#include "ttts/errors.hpp"
#include "ttts/mel.hpp"

namespace ttts {

namespace detail {

inline nlohmann::json gen_params_json(const GeneratorParams& g) {
  return {{"n_mels", g.n_mels},
          {"noise_sigma", g.noise_sigma},
          {"min_phonemes", g.min_phonemes},
          {"max_phonemes", g.max_phonemes},
          {"min_base_duration", g.min_base_duration},
          {"max_base_duration", g.max_base_duration},
          {"duration_jitter", g.duration_jitter},
          {"f0_jitter_hz", g.f0_jitter_hz},
          {"energy_jitter", g.energy_jitter}};
}

inline GeneratorParams gen_params_from_json(const nlohmann::json& j) {
  GeneratorParams g;
  g.n_mels = j.at("n_mels");
  g.noise_sigma = j.at("noise_sigma");
  g.min_phonemes = j.at("min_phonemes");
  g.max_phonemes = j.at("max_phonemes");
  g.min_base_duration = j.at("min_base_duration");
  g.max_base_duration = j.at("max_base_duration");
  g.duration_jitter = j.at("duration_jitter");
  g.f0_jitter_hz = j.at("f0_jitter_hz");
  g.energy_jitter = j.at("energy_jitter");
  return g;
}

inline std::string mel_relpath(const std::string& utt_id) {
  return "mels/" + utt_id + ".mel";
}

}  // namespace detail

/// Line-delimited manifest text (mels referenced by relative path, not
/// inlined). Stable field order; identical manifests serialize to identical
/// bytes.
inline std::string serialize_manifest(const CorpusManifest& m) {
  std::ostringstream out;
  nlohmann::json header;
  header["type"] = "header";
  header["version"] = 1;
  header["seed"] = m.seed;
  header["generator"] = detail::gen_params_json(m.gen);
  auto phonemes = nlohmann::json::array();
  for (int i = 0; i < m.inventory.size(); ++i)
    phonemes.push_back({{"symbol", m.inventory.symbols[i]},
                        {"language", m.inventory.language_of[i]}});
  header["phonemes"] = phonemes;
  auto speakers = nlohmann::json::array();
  for (const auto& s : m.speakers)
    speakers.push_back({{"tag", s.tag},
                        {"native_language", s.native_language},
                        {"anchor", s.anchor}});
  header["speakers"] = speakers;
  out << header.dump() << "\n";

  for (const auto& u : m.utterances) {
    nlohmann::json rec;
    rec["type"] = "utterance";
    rec["utt_id"] = u.utt_id;
    rec["speaker"] = u.speaker;
    rec["language"] = u.language;
    rec["phonemes"] = u.phonemes;
    rec["durations"] = u.durations;
    rec["f0"] = u.f0;
    rec["energy"] = u.energy;
    rec["mel"] = detail::mel_relpath(u.utt_id);
    out << rec.dump() << "\n";
  }
  return out.str();
}

/// Parses manifest text; mels are left empty for the caller (or load_corpus)
/// to fill from the side files.
inline CorpusManifest parse_manifest(const std::string& text) {
  CorpusManifest m;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(std::string("manifest: bad record: ") + e.what());
    }
    const std::string type = j.at("type");
    if (type == "header") {
      have_header = true;
      m.seed = j.at("seed");
      m.gen = detail::gen_params_from_json(j.at("generator"));
      for (const auto& p : j.at("phonemes")) {
        m.inventory.symbols.push_back(p.at("symbol"));
        m.inventory.language_of.push_back(p.at("language"));
      }
      for (const auto& s : j.at("speakers")) {
        SpeakerInfo info{s.at("tag"), s.at("native_language"), s.at("anchor")};
        m.speakers.push_back(info);
        if (info.anchor) m.anchor_speaker_of[info.native_language] = info.tag;
      }
    } else if (type == "utterance") {
      if (!have_header) throw IoError("manifest: utterance before header");
      Utterance u;
      u.utt_id = j.at("utt_id");
      u.speaker = j.at("speaker");
      u.language = j.at("language");
      u.phonemes = j.at("phonemes").get<std::vector<int>>();
      u.durations = j.at("durations").get<std::vector<int>>();
      u.f0 = j.at("f0").get<std::vector<double>>();
      u.energy = j.at("energy").get<std::vector<double>>();
      m.utterances.push_back(std::move(u));
    } else {
      throw IoError("manifest: unknown record type: " + type);
    }
  }
  if (!have_header) throw IoError("manifest: missing header record");
  return m;
}

/// Writes DIR/corpus.jsonl plus DIR/mels/<utt_id>.mel.
inline void save_corpus(const CorpusManifest& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "mels");
  std::ofstream f(dir / "corpus.jsonl", std::ios::binary);
  if (!f) throw IoError("cannot write manifest in " + dir.string());
  f << serialize_manifest(m);
  for (const auto& u : m.utterances) write_mel(dir / detail::mel_relpath(u.utt_id), u.mel);
}

inline CorpusManifest load_corpus(const std::filesystem::path& dir) {
  std::ifstream f(dir / "corpus.jsonl", std::ios::binary);
  if (!f) throw IoError("cannot open manifest in " + dir.string());
  std::stringstream ss;
  ss << f.rdbuf();
  CorpusManifest m = parse_manifest(ss.str());
  for (auto& u : m.utterances) u.mel = read_mel(dir / detail::mel_relpath(u.utt_id));
  m.validate();
  return m;
}

}  // namespace ttts
