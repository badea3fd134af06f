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

// Line-delimited training log: one run-header record followed by one record
// per step. Identical runs serialize to identical bytes.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttts/config.hpp"
#include "ttts/errors.hpp"
#include "ttts/triplet.hpp"

namespace ttts {

/// Per-step loss terms. `total` is the configured combination of the terms
/// (assembled in double, so it reconstructs from the logged terms exactly).
struct LossReport {
  std::int64_t step = 0;
  int stage = 1;
  double recon = 0, dur = 0, res = 0;
  double recon_ling = 0, recon_spk = 0, adv = 0;
  double f0 = 0, energy = 0;
  double triplet_content = 0, triplet_speaker = 0, triplet = 0;
  double total = 0;
  int triplet_pairs = 0;
  int triplet_skips = 0;
  std::uint64_t degenerate_norms = 0;
  std::vector<TripletPairRecord> triplets;
};

inline nlohmann::json loss_report_json(const LossReport& r) {
  nlohmann::json j;
  j["type"] = "step";
  j["step"] = r.step;
  j["stage"] = r.stage;
  j["recon"] = r.recon;
  j["dur"] = r.dur;
  j["res"] = r.res;
  j["recon_ling"] = r.recon_ling;
  j["recon_spk"] = r.recon_spk;
  j["adv"] = r.adv;
  j["f0"] = r.f0;
  j["energy"] = r.energy;
  j["triplet_content"] = r.triplet_content;
  j["triplet_speaker"] = r.triplet_speaker;
  j["triplet"] = r.triplet;
  j["total"] = r.total;
  j["triplet_pairs"] = r.triplet_pairs;
  j["triplet_skips"] = r.triplet_skips;
  j["degenerate_norms"] = r.degenerate_norms;
  auto arr = nlohmann::json::array();
  for (const auto& t : r.triplets)
    arr.push_back({{"utt_id", t.utt_id},
                   {"anchor_speaker", t.anchor_speaker},
                   {"positive_speaker", t.positive_speaker},
                   {"negative_speaker", t.negative_speaker},
                   {"language", t.language},
                   {"content_term", t.content_term},
                   {"speaker_term", t.speaker_term}});
  j["triplets"] = arr;
  return j;
}

inline LossReport loss_report_from_json(const nlohmann::json& j) {
  LossReport r;
  r.step = j.at("step");
  r.stage = j.at("stage");
  r.recon = j.at("recon");
  r.dur = j.at("dur");
  r.res = j.at("res");
  r.recon_ling = j.at("recon_ling");
  r.recon_spk = j.at("recon_spk");
  r.adv = j.at("adv");
  r.f0 = j.at("f0");
  r.energy = j.at("energy");
  r.triplet_content = j.at("triplet_content");
  r.triplet_speaker = j.at("triplet_speaker");
  r.triplet = j.at("triplet");
  r.total = j.at("total");
  r.triplet_pairs = j.at("triplet_pairs");
  r.triplet_skips = j.at("triplet_skips");
  r.degenerate_norms = j.at("degenerate_norms");
  for (const auto& t : j.at("triplets")) {
    TripletPairRecord rec;
    rec.utt_id = t.at("utt_id");
    rec.anchor_speaker = t.at("anchor_speaker");
    rec.positive_speaker = t.at("positive_speaker");
    rec.negative_speaker = t.at("negative_speaker");
    rec.language = t.at("language");
    rec.content_term = t.at("content_term");
    rec.speaker_term = t.at("speaker_term");
    r.triplets.push_back(std::move(rec));
  }
  return r;
}

inline nlohmann::json run_header_json(const TrainConfig& cfg) {
  return {{"type", "run"},
          {"stage", cfg.stage},
          {"seed", cfg.seed},
          {"lr", cfg.lr},
          {"batch_size", cfg.batch_size},
          {"lambda_adv", cfg.lambda_adv},
          {"alpha", cfg.triplet_weights.alpha},
          {"beta", cfg.triplet_weights.beta},
          {"fe_enabled", cfg.acoustic.fe_enabled},
          {"normalize_losses", cfg.normalize_losses},
          {"literal_stage2_fe_formula", cfg.literal_stage2_fe_formula},
          {"max_steps", cfg.max_steps}};
}

struct LossLog {
  nlohmann::json header;
  std::vector<LossReport> steps;
};

inline std::string serialize_loss_log(const LossLog& log) {
  std::ostringstream out;
  out << log.header.dump() << "\n";
  for (const auto& r : log.steps) out << loss_report_json(r).dump() << "\n";
  return out.str();
}

inline LossLog parse_loss_log(const std::string& text) {
  LossLog log;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(std::string("loss log: bad record: ") + e.what());
    }
    if (j.at("type") == "run")
      log.header = j;
    else if (j.at("type") == "step")
      log.steps.push_back(loss_report_from_json(j));
    else
      throw IoError("loss log: unknown record type");
  }
  return log;
}

inline LossLog read_loss_log(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("loss log: cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_loss_log(ss.str());
}

/// Appends records as they arrive; flushes per line so logs survive aborts.
class LossLogWriter {
 public:
  LossLogWriter(const std::filesystem::path& path, const TrainConfig& cfg)
      : out_(path) {
    if (!out_) throw IoError("loss log: cannot write " + path.string());
    out_ << run_header_json(cfg).dump() << "\n";
    out_.flush();
  }

  void write(const LossReport& r) {
    out_ << loss_report_json(r).dump() << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace ttts
