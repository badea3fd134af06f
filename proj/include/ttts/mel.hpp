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
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include "ttts/errors.hpp"
#include "ttts/mat.hpp"

namespace ttts {

/// Acoustic feature matrix: frames x n_mels, 10 ms hop.
struct MelSpectrogram {
  Mat<float> frames;
  float frame_shift_ms = 10.0f;
  float frame_length_ms = 42.7f;

  int num_frames() const { return frames.rows; }
  int n_mels() const { return frames.cols; }

  const float* frame(int t) const {
    return frames.data() + static_cast<std::size_t>(t) * frames.cols;
  }

  void validate() const {
    if (frames.cols <= 0) throw InputError("mel: n_mels must be positive");
    if (frames.rows < 1) throw InputError("mel: at least one frame required");
    if (!frames.all_finite()) throw InputError("mel: non-finite entries");
  }
};

/// Frame count of an utterance `seconds` long at the given hop.
inline int frames_for_seconds(double seconds, double frame_shift_ms = 10.0) {
  return static_cast<int>(std::lround(seconds * 1000.0 / frame_shift_ms));
}

/// Contiguous frame range [begin, begin + frames) of a mel.
struct SegmentSpan {
  int begin = 0;
  int frames = 0;
};

/// Partitions a frame axis of `total_frames` by `durations`.
/// Every duration must be >= 1 and the durations must sum to the frame count.
inline std::vector<SegmentSpan> segment_spans(int total_frames,
                                              std::span<const int> durations) {
  std::vector<SegmentSpan> out;
  out.reserve(durations.size());
  long long sum = 0;
  int begin = 0;
  for (int d : durations) {
    if (d < 1) throw AlignmentError("segment: zero or negative duration");
    out.push_back({begin, d});
    begin += d;
    sum += d;
  }
  if (sum != total_frames)
    throw AlignmentError("segment: durations sum to " + std::to_string(sum) +
                         " but mel has " + std::to_string(total_frames) + " frames");
  return out;
}

/// Splits M into per-phoneme segments ordered and non-overlapping; the
/// concatenation of the result covers M exactly.
inline std::vector<SegmentSpan> segment_mel(const MelSpectrogram& mel,
                                            std::span<const int> durations) {
  return segment_spans(mel.num_frames(), durations);
}

// ---- binary container ----------------------------------------------------------
//
// 16-byte header: magic "TMEL", u32 version, u32 frames, u32 n_mels (all
// little-endian), followed by frames*n_mels float32 values, frame-major.

namespace detail {
constexpr std::uint32_t kMelMagic = 0x4c454d54u;  // "TMEL"
constexpr std::uint32_t kMelVersion = 1;

inline void put_u32(std::string& buf, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
}  // namespace detail

inline std::string serialize_mel(const MelSpectrogram& mel) {
  std::string buf;
  buf.reserve(16 + mel.frames.size() * sizeof(float));
  detail::put_u32(buf, detail::kMelMagic);
  detail::put_u32(buf, detail::kMelVersion);
  detail::put_u32(buf, static_cast<std::uint32_t>(mel.num_frames()));
  detail::put_u32(buf, static_cast<std::uint32_t>(mel.n_mels()));
  for (float v : mel.frames.v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    detail::put_u32(buf, bits);
  }
  return buf;
}

inline MelSpectrogram deserialize_mel(std::span<const unsigned char> bytes) {
  if (bytes.size() < 16) throw IoError("mel: truncated header");
  if (detail::get_u32(bytes.data()) != detail::kMelMagic)
    throw IoError("mel: bad magic");
  if (detail::get_u32(bytes.data() + 4) != detail::kMelVersion)
    throw IoError("mel: unsupported version");
  const std::uint32_t frames = detail::get_u32(bytes.data() + 8);
  const std::uint32_t mels = detail::get_u32(bytes.data() + 12);
  const std::size_t want = 16 + static_cast<std::size_t>(frames) * mels * 4;
  if (bytes.size() != want) throw IoError("mel: payload size mismatch");
  MelSpectrogram mel;
  mel.frames = Mat<float>(static_cast<int>(frames), static_cast<int>(mels));
  for (std::size_t i = 0; i < mel.frames.size(); ++i) {
    const std::uint32_t bits = detail::get_u32(bytes.data() + 16 + 4 * i);
    std::memcpy(&mel.frames.v[i], &bits, 4);
  }
  return mel;
}

inline void write_mel(const std::filesystem::path& path, const MelSpectrogram& mel) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("mel: cannot open for write: " + path.string());
  const std::string buf = serialize_mel(mel);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("mel: write failed: " + path.string());
}

inline MelSpectrogram read_mel(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("mel: cannot open: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  return deserialize_mel(bytes);
}

}  // namespace ttts
