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

// Versioned binary container: magic + version, a JSON metadata blob (configs,
// registry, prosody statistics, run position), named float32 parameter
// payloads, optimizer moments, and a trailing content hash that guards the
// whole byte stream. Save -> load is bit-exact.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttts/acoustic_model.hpp"
#include "ttts/corpus.hpp"
#include "ttts/errors.hpp"
#include "ttts/mat.hpp"
#include "ttts/predictors.hpp"
#include "ttts/prosody.hpp"

namespace ttts {

struct Checkpoint {
  std::uint32_t version = 1;
  int stage = 1;
  std::int64_t step = 0;
  /// Master seed; together with `step` this is the complete random state
  /// (all per-step randomness is derived statelessly from them).
  std::uint64_t seed = 0;

  AcousticConfig acoustic;
  PredictorConfig predictors;
  PhonemeInventory inventory;
  std::vector<SpeakerInfo> speakers;
  std::vector<SpeakerF0Stats> f0_stats;
  std::uint64_t registry_hash = 0;

  std::vector<double> triplet_history;  // recent windowed values (stage 2 stop rule)

  std::vector<std::pair<std::string, Mat<float>>> params;  // creation order

  std::int64_t adam_step = 0;
  std::map<std::string, std::pair<Mat<float>, Mat<float>>> adam;  // name -> (m, v)

  const Mat<float>* find_param(const std::string& name) const {
    for (const auto& [n, m] : params)
      if (n == name) return &m;
    return nullptr;
  }
};

namespace detail {

constexpr char kCkptMagic[4] = {'T', 'T', 'C', 'K'};
constexpr std::uint32_t kCkptVersion = 1;

class ByteWriter {
 public:
  void u32(std::uint32_t x) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t x) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
  }
  void i64(std::int64_t x) { u64(static_cast<std::uint64_t>(x)); }
  void f32(float x) {
    std::uint32_t bits;
    std::memcpy(&bits, &x, 4);
    u32(bits);
  }
  void f64(double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u64(s.size());
    buf_.append(s);
  }
  void mat(const Mat<float>& m) {
    u32(static_cast<std::uint32_t>(m.rows));
    u32(static_cast<std::uint32_t>(m.cols));
    for (float v : m.v) f32(v);
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string bytes) : buf_(std::move(bytes)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i)
      x |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[at_ + i])) << (8 * i);
    at_ += 4;
    return x;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i)
      x |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[at_ + i])) << (8 * i);
    at_ += 8;
    return x;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  float f32() {
    const std::uint32_t bits = u32();
    float x;
    std::memcpy(&x, &bits, 4);
    return x;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
  }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = buf_.substr(at_, n);
    at_ += n;
    return s;
  }
  Mat<float> mat() {
    const int r = static_cast<int>(u32());
    const int c = static_cast<int>(u32());
    Mat<float> m(r, c);
    for (auto& v : m.v) v = f32();
    return m;
  }
  std::size_t position() const { return at_; }
  std::size_t size() const { return buf_.size(); }
  const std::string& bytes() const { return buf_; }

 private:
  void need(std::uint64_t n) {
    if (at_ + n > buf_.size()) throw CheckpointError("checkpoint: truncated file");
  }
  std::string buf_;
  std::size_t at_ = 0;
};

inline std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline nlohmann::json checkpoint_meta_json(const Checkpoint& c) {
  nlohmann::json j;
  j["stage"] = c.stage;
  j["step"] = c.step;
  j["seed"] = c.seed;
  j["registry_hash"] = c.registry_hash;
  j["acoustic"] = {{"n_mels", c.acoustic.n_mels},
                   {"phoneme_emb_dim", c.acoustic.phoneme_emb_dim},
                   {"speaker_emb_dim", c.acoustic.speaker_emb_dim},
                   {"encoder_dim", c.acoustic.encoder_dim},
                   {"decoder_dim", c.acoustic.decoder_dim},
                   {"postnet_channels", c.acoustic.postnet_channels},
                   {"duration_hidden", c.acoustic.duration_hidden},
                   {"prosody_hidden", c.acoustic.prosody_hidden},
                   {"fe_enabled", c.acoustic.fe_enabled},
                   {"f0_bins", c.acoustic.f0_bins},
                   {"energy_bins", c.acoustic.energy_bins},
                   {"prosody_emb_dim", c.acoustic.prosody_emb_dim},
                   {"f0_min_hz", c.acoustic.f0_min_hz},
                   {"f0_max_hz", c.acoustic.f0_max_hz},
                   {"energy_min", c.acoustic.energy_min},
                   {"energy_max", c.acoustic.energy_max},
                   {"duration_log_domain", c.acoustic.duration_log_domain}};
  j["predictors"] = {{"ref_channels", c.predictors.ref_channels},
                     {"ref_hidden", c.predictors.ref_hidden},
                     {"ctx_hidden", c.predictors.ctx_hidden}};
  auto phonemes = nlohmann::json::array();
  for (int i = 0; i < c.inventory.size(); ++i)
    phonemes.push_back({{"symbol", c.inventory.symbols[i]},
                        {"language", c.inventory.language_of[i]}});
  j["phonemes"] = phonemes;
  auto speakers = nlohmann::json::array();
  for (const auto& s : c.speakers)
    speakers.push_back({{"tag", s.tag},
                        {"native_language", s.native_language},
                        {"anchor", s.anchor}});
  j["speakers"] = speakers;
  auto stats = nlohmann::json::array();
  for (const auto& s : c.f0_stats)
    stats.push_back({{"speaker", s.speaker}, {"mu", s.mu}, {"sigma", s.sigma}});
  j["f0_stats"] = stats;
  j["triplet_history"] = c.triplet_history;
  return j;
}

inline void checkpoint_meta_from_json(const nlohmann::json& j, Checkpoint& c) {
  c.stage = j.at("stage");
  c.step = j.at("step");
  c.seed = j.at("seed");
  c.registry_hash = j.at("registry_hash");
  const auto& a = j.at("acoustic");
  c.acoustic.n_mels = a.at("n_mels");
  c.acoustic.phoneme_emb_dim = a.at("phoneme_emb_dim");
  c.acoustic.speaker_emb_dim = a.at("speaker_emb_dim");
  c.acoustic.encoder_dim = a.at("encoder_dim");
  c.acoustic.decoder_dim = a.at("decoder_dim");
  c.acoustic.postnet_channels = a.at("postnet_channels");
  c.acoustic.duration_hidden = a.at("duration_hidden");
  c.acoustic.prosody_hidden = a.at("prosody_hidden");
  c.acoustic.fe_enabled = a.at("fe_enabled");
  c.acoustic.f0_bins = a.at("f0_bins");
  c.acoustic.energy_bins = a.at("energy_bins");
  c.acoustic.prosody_emb_dim = a.at("prosody_emb_dim");
  c.acoustic.f0_min_hz = a.at("f0_min_hz");
  c.acoustic.f0_max_hz = a.at("f0_max_hz");
  c.acoustic.energy_min = a.at("energy_min");
  c.acoustic.energy_max = a.at("energy_max");
  c.acoustic.duration_log_domain = a.at("duration_log_domain");
  const auto& p = j.at("predictors");
  c.predictors.ref_channels = p.at("ref_channels");
  c.predictors.ref_hidden = p.at("ref_hidden");
  c.predictors.ctx_hidden = p.at("ctx_hidden");
  for (const auto& ph : j.at("phonemes")) {
    c.inventory.symbols.push_back(ph.at("symbol"));
    c.inventory.language_of.push_back(ph.at("language"));
  }
  for (const auto& s : j.at("speakers"))
    c.speakers.push_back({s.at("tag"), s.at("native_language"), s.at("anchor")});
  for (const auto& s : j.at("f0_stats"))
    c.f0_stats.push_back({s.at("speaker"), s.at("mu"), s.at("sigma")});
  c.triplet_history = j.at("triplet_history").get<std::vector<double>>();
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& c) {
  detail::ByteWriter body;
  body.str(detail::checkpoint_meta_json(c).dump());
  body.u64(c.params.size());
  for (const auto& [name, m] : c.params) {
    body.str(name);
    body.mat(m);
  }
  body.i64(c.adam_step);
  body.u64(c.adam.size());
  for (const auto& [name, mv] : c.adam) {
    body.str(name);
    body.mat(mv.first);
    body.mat(mv.second);
  }

  std::string out(detail::kCkptMagic, 4);
  detail::ByteWriter head;
  head.u32(detail::kCkptVersion);
  out += head.bytes();
  out += body.bytes();
  const std::uint64_t hash = detail::fnv1a(out.data(), out.size());
  detail::ByteWriter tail;
  tail.u64(hash);
  out += tail.bytes();
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16) throw CheckpointError("checkpoint: truncated file");
  if (std::memcmp(bytes.data(), detail::kCkptMagic, 4) != 0)
    throw CheckpointError("checkpoint: bad magic");
  // verify the trailing hash over everything before it
  detail::ByteReader tail(bytes.substr(bytes.size() - 8));
  const std::uint64_t expect = tail.u64();
  const std::uint64_t actual = detail::fnv1a(bytes.data(), bytes.size() - 8);
  if (expect != actual) throw CheckpointError("checkpoint: content hash mismatch");

  detail::ByteReader r(bytes.substr(4, bytes.size() - 12));
  const std::uint32_t version = r.u32();
  if (version != detail::kCkptVersion)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint c;
  c.version = version;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  detail::checkpoint_meta_from_json(meta, c);

  const std::uint64_t n_params = r.u64();
  for (std::uint64_t i = 0; i < n_params; ++i) {
    std::string name = r.str();
    c.params.emplace_back(std::move(name), r.mat());
  }
  c.adam_step = r.i64();
  const std::uint64_t n_adam = r.u64();
  for (std::uint64_t i = 0; i < n_adam; ++i) {
    std::string name = r.str();
    Mat<float> m = r.mat();
    Mat<float> v = r.mat();
    c.adam.emplace(std::move(name), std::make_pair(std::move(m), std::move(v)));
  }
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open for write: " + path.string());
  const std::string bytes = serialize_checkpoint(c);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("checkpoint: write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open: " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace ttts
