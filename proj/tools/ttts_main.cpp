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

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "ttts/checkpoint.hpp"
#include "ttts/config.hpp"
#include "ttts/corpus.hpp"
#include "ttts/corpus_io.hpp"
#include "ttts/eval.hpp"
#include "ttts/loss_log.hpp"
#include "ttts/trainer.hpp"

namespace fs = std::filesystem;
using namespace ttts;

namespace {

int cmd_corpus_generate(std::uint64_t seed, const std::string& out_dir,
                        int utts_per_speaker, int n_mels, double noise_sigma) {
  GeneratorParams gp;
  gp.n_mels = n_mels;
  gp.noise_sigma = noise_sigma;
  auto manifest = generate_toy_corpus(utts_per_speaker, PhonemeInventory::toy_default(),
                                      toy_speakers(), seed, gp);
  save_corpus(manifest, out_dir);
  std::printf("wrote %zu utterances (%zu speakers, %zu phonemes) to %s\n",
              manifest.utterances.size(), manifest.speakers.size(),
              static_cast<std::size_t>(manifest.inventory.size()), out_dir.c_str());
  return 0;
}

int cmd_train(int stage, const std::string& config_path, const std::string& init_path,
              const std::string& corpus_override) {
  TrainConfig cfg = read_train_config(config_path);
  cfg.stage = stage;
  if (!init_path.empty()) cfg.init_checkpoint = init_path;
  if (!corpus_override.empty()) cfg.corpus_dir = corpus_override;
  if (cfg.corpus_dir.empty())
    throw ConfigError("train: corpus_dir missing (config key or --corpus)");
  if (cfg.out_dir.empty()) throw ConfigError("train: out_dir missing from config");
  cfg.validate();

  auto manifest = load_corpus(cfg.corpus_dir);
  fs::create_directories(cfg.out_dir);
  const fs::path ckpt_path =
      fs::path(cfg.out_dir) / ("stage" + std::to_string(stage) + ".ckpt");
  const fs::path log_path =
      fs::path(cfg.out_dir) / ("stage" + std::to_string(stage) + "_log.jsonl");

  std::optional<Trainer<float>> trainer;
  if (!cfg.init_checkpoint.empty()) {
    auto init = load_checkpoint(cfg.init_checkpoint);
    trainer.emplace(manifest, cfg, init);
  } else {
    trainer.emplace(manifest, cfg);
  }

  LossLogWriter log(log_path, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  trainer->run([&](const LossReport& r) {
    log.write(r);
    if (r.step % 50 == 0 || r.step + 1 == cfg.max_steps) {
      std::printf("step %6lld  total %.5f  recon %.5f  triplet %.5f\n",
                  static_cast<long long>(r.step), r.total, r.recon, r.triplet);
      std::fflush(stdout);
    }
  });
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_checkpoint(ckpt_path, trainer->make_checkpoint());
  std::printf("stage %d done: %lld steps in %.1fs%s -> %s\n", stage,
              static_cast<long long>(trainer->current_step()), secs,
              trainer->converged() ? " (converged)" : "", ckpt_path.c_str());
  return 0;
}

std::vector<int> parse_phonemes(const PhonemeInventory& inv, const std::string& text) {
  std::vector<int> out;
  std::istringstream ss(text);
  std::string sym;
  while (ss >> sym) {
    bool found = false;
    for (int i = 0; i < inv.size(); ++i)
      if (inv.symbols[i] == sym) {
        out.push_back(i);
        found = true;
        break;
      }
    if (!found) throw VocabularyError("unknown phoneme symbol: " + sym);
  }
  if (out.empty()) throw InputError("empty phoneme sequence");
  return out;
}

int cmd_synth(const std::string& ckpt_path, const std::string& speaker,
              const std::string& language, const std::string& phonemes,
              const std::string& system, const std::string& anchor,
              const std::string& out_path) {
  auto ck = load_checkpoint(ckpt_path);
  ModelBundle<float> bundle(ck);
  SynthRequest req;
  req.phonemes = parse_phonemes(bundle.inventory(), phonemes);
  req.speaker = speaker;
  req.language = language;
  req.system = parse_synth_system(system);
  req.anchor_override = anchor;
  auto [mel, meta] = run_synthesis(bundle, req);
  write_mel(out_path, mel);
  std::ofstream mf(out_path + ".json");
  if (!mf) throw IoError("cannot write metadata next to " + out_path);
  mf << synth_meta_json(meta).dump(2) << "\n";
  std::printf("wrote %d frames x %d mels to %s (+ .json metadata)\n", mel.num_frames(),
              mel.n_mels(), out_path.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& corpus_dir,
             const std::string& split, const std::string& system, std::uint64_t seed,
             const std::string& out_path) {
  auto ck = load_checkpoint(ckpt_path);
  ModelBundle<float> bundle(ck);
  auto manifest = load_corpus(corpus_dir);
  EvalOptions opt;
  opt.seed = seed;
  opt.system = parse_synth_system(system);
  auto report = evaluate(bundle, manifest, parse_eval_split(split), opt);
  std::fputs(eval_report_table(report).c_str(), stdout);
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    if (!f) throw IoError("cannot write " + out_path);
    nlohmann::json header = {{"type", "eval"},
                             {"split", split},
                             {"system", system},
                             {"seed", seed},
                             {"mean_content_distance", report.mean_content_distance},
                             {"std_content_distance", report.std_content_distance},
                             {"mean_speaker_similarity", report.mean_speaker_similarity},
                             {"std_speaker_similarity", report.std_speaker_similarity},
                             {"mean_mel_l1", report.mean_mel_l1}};
    if (report.mean_wer) header["mean_wer"] = *report.mean_wer;
    f << header.dump() << "\n";
    for (const auto& row : report.rows) f << eval_row_json(row).dump() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"duration-based cross-lingual TTS trainer with triplet fine-tuning"};
  app.require_subcommand(1);

  // corpus generate
  auto* corpus = app.add_subcommand("corpus", "synthetic corpus tools");
  corpus->require_subcommand(1);
  auto* generate = corpus->add_subcommand("generate", "write a seeded toy corpus");
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  int gen_utts = 200;
  int gen_mels = 80;
  double gen_noise = 0.05;
  generate->add_option("--seed", gen_seed, "generator seed");
  generate->add_option("--out", gen_out, "output directory")->required();
  generate->add_option("--utts-per-speaker", gen_utts, "utterances per speaker");
  generate->add_option("--n-mels", gen_mels, "mel bins");
  generate->add_option("--noise", gen_noise, "frame noise sigma");

  // train
  auto* train = app.add_subcommand("train", "run one training stage");
  int train_stage = 1;
  std::string train_config, train_init, train_corpus;
  train->add_option("--stage", train_stage, "1 or 2")->required();
  train->add_option("--config", train_config, "key = value config file")->required();
  train->add_option("--init", train_init, "initial checkpoint (required for stage 2)");
  train->add_option("--corpus", train_corpus, "corpus directory (overrides config)");

  // synth
  auto* synth = app.add_subcommand("synth", "synthesize a mel from phonemes");
  std::string sy_ckpt, sy_speaker, sy_language, sy_phonemes, sy_anchor, sy_out;
  std::string sy_system = "base";
  synth->add_option("--checkpoint", sy_ckpt)->required();
  synth->add_option("--speaker", sy_speaker)->required();
  synth->add_option("--language", sy_language, "language of the text")->required();
  synth->add_option("--phonemes", sy_phonemes, "space-separated symbols")->required();
  synth->add_option("--system", sy_system, "base|base_fe|base_fe_dfe");
  synth->add_option("--anchor", sy_anchor, "transfer anchor (default: language anchor)");
  synth->add_option("--out", sy_out, "output .mel path")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "objective metrics on held-out texts");
  std::string ev_ckpt, ev_corpus, ev_out;
  std::string ev_split = "inter_lan";
  std::string ev_system = "base";
  std::uint64_t ev_seed = 0;
  eval_cmd->add_option("--checkpoint", ev_ckpt)->required();
  eval_cmd->add_option("--corpus", ev_corpus)->required();
  eval_cmd->add_option("--split", ev_split, "inter_lan|intra_lan");
  eval_cmd->add_option("--system", ev_system, "base|base_fe|base_fe_dfe");
  eval_cmd->add_option("--seed", ev_seed);
  eval_cmd->add_option("--out", ev_out, "machine-readable report path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed())
      return cmd_corpus_generate(gen_seed, gen_out, gen_utts, gen_mels, gen_noise);
    if (train->parsed())
      return cmd_train(train_stage, train_config, train_init, train_corpus);
    if (synth->parsed())
      return cmd_synth(sy_ckpt, sy_speaker, sy_language, sy_phonemes, sy_system,
                       sy_anchor, sy_out);
    if (eval_cmd->parsed())
      return cmd_eval(ev_ckpt, ev_corpus, ev_split, ev_system, ev_seed, ev_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
