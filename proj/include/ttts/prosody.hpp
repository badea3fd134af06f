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

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ttts/errors.hpp"

namespace ttts {

/// Per-speaker f0 distribution over its training utterances.
struct SpeakerF0Stats {
  std::string speaker;
  double mu = 0.0;     // Hz
  double sigma = 1.0;  // Hz

  void validate() const {
    if (!(sigma > 0.0)) throw StatsError("f0 stats: sigma must be > 0 for " + speaker);
  }
};

enum class F0Adaptation { kNone, kLinear };

/// Inference-time prosody transfer: the named anchor speaker's embedding is
/// substituted into the duration / f0 / energy predictors while the decoder
/// keeps the target speaker's embedding.
struct ProsodyTransferSpec {
  std::string anchor_speaker;
  bool transfer_duration = false;
  bool transfer_f0 = false;
  bool transfer_energy = false;
  F0Adaptation f0_adaptation = F0Adaptation::kNone;
  /// Map f0 statistics (and hence the adaptation) in log-Hz instead of Hz.
  bool adapt_in_log_domain = false;

  void validate() const {
    if (anchor_speaker.empty()) throw ConfigError("transfer: anchor speaker required");
    if (!transfer_duration && !transfer_f0 && !transfer_energy)
      throw ConfigError("transfer: at least one transfer flag must be set");
  }
};

/// Mean/variance matching: f0' = (f0 - src.mu)/src.sigma * tgt.sigma + tgt.mu.
/// Computed in double regardless of the model scalar.
inline std::vector<double> adapt_f0_linear(std::span<const double> f0,
                                           const SpeakerF0Stats& src,
                                           const SpeakerF0Stats& tgt,
                                           bool log_domain = false) {
  src.validate();
  tgt.validate();
  std::vector<double> out(f0.begin(), f0.end());
  for (auto& v : out) {
    if (log_domain) {
      if (!(v > 0.0)) throw StatsError("f0 adaptation: log domain needs positive f0");
      v = std::exp((std::log(v) - std::log(src.mu)) / src.sigma * tgt.sigma +
                   std::log(tgt.mu));
    } else {
      v = (v - src.mu) / src.sigma * tgt.sigma + tgt.mu;
    }
  }
  return out;
}

/// Uniform quantization into [0, bins): monotone, out-of-range values clamp
/// to the edge bins.
inline int quantize_prosody(double value, double lo, double hi, int bins) {
  if (bins < 2) throw ConfigError("quantize: bins must be >= 2");
  if (!(lo < hi)) throw ConfigError("quantize: empty range");
  const double unit = (value - lo) / (hi - lo);
  const int bin = static_cast<int>(std::floor(unit * bins));
  return std::clamp(bin, 0, bins - 1);
}

}  // namespace ttts
