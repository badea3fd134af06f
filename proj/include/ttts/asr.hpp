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

#include <algorithm>
#include <cctype>
#include <chrono>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "ttts/errors.hpp"
#include "ttts/mel.hpp"

namespace ttts {

/// Contract for an external transcription service. Implementations submit the
/// features, poll until a transcript is ready, and return it; transient
/// failures surface as AsrError and are retried by the caller. No vendor
/// binding lives in the core: evaluation treats a registered client as
/// optional and reports the word-error column as absent without one.
class AsrClient {
 public:
  struct Request {
    const MelSpectrogram* features = nullptr;
    std::string language;
  };

  virtual ~AsrClient() = default;

  /// Returns the raw transcript. Throws AsrError on transient failure.
  virtual std::string transcribe(const Request& request) = 0;
};

/// Lowercases, strips everything but alphanumerics/underscores, and collapses
/// whitespace, so hypothesis and reference tokenize identically.
inline std::string normalize_transcript(std::string_view text) {
  std::string out;
  bool in_space = true;
  for (char ch : text) {
    const unsigned char u = static_cast<unsigned char>(ch);
    if (std::isalnum(u) || ch == '_') {
      out.push_back(static_cast<char>(std::tolower(u)));
      in_space = false;
    } else if (!in_space && !out.empty()) {
      out.push_back(' ');
      in_space = true;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream ss{std::string(text)};
  std::string w;
  while (ss >> w) words.push_back(w);
  return words;
}

/// Word-level edit distance divided by the reference word count.
inline double word_error_rate(std::string_view reference, std::string_view hypothesis) {
  const auto ref = split_words(normalize_transcript(reference));
  const auto hyp = split_words(normalize_transcript(hypothesis));
  if (ref.empty()) throw InputError("word_error_rate: empty reference");
  std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[hyp.size()]) / static_cast<double>(ref.size());
}

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{100};
  double backoff_multiplier = 2.0;
};

/// Calls the client under the retry budget with exponential backoff. Returns
/// nullopt once the budget is exhausted; never throws (an unavailable service
/// must not crash an evaluation). `sleeper` is injectable for tests.
inline std::optional<std::string> transcribe_with_retries(
    AsrClient& client, const AsrClient::Request& request,
    const RetryPolicy& policy = {},
    const std::function<void(std::chrono::milliseconds)>& sleeper = nullptr) {
  std::chrono::milliseconds wait = policy.initial_backoff;
  for (int attempt = 0; attempt < policy.max_attempts; ++attempt) {
    try {
      return client.transcribe(request);
    } catch (const AsrError&) {
      if (attempt + 1 >= policy.max_attempts) break;
      if (sleeper)
        sleeper(wait);
      else
        std::this_thread::sleep_for(wait);
      wait = std::chrono::milliseconds(
          static_cast<long long>(wait.count() * policy.backoff_multiplier));
    }
  }
  return std::nullopt;
}

}  // namespace ttts
