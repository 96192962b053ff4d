#pragma once

#include <string>
#include <vector>

namespace prosody_mi::wav {

struct Audio {
  int sample_rate_hz = 0;
  std::vector<double> samples;  // mono, full scale in [-1, 1]

  double duration_s() const {
    return sample_rate_hz > 0
               ? static_cast<double>(samples.size()) / sample_rate_hz
               : 0.0;
  }
};

// Reads mono PCM WAV: 16-bit integer or 32-bit IEEE float.
Audio read(const std::string& path);

// Writes mono 16-bit PCM; samples are clipped to [-1, 1].
void write_pcm16(const std::string& path, const Audio& audio);

}  // namespace prosody_mi::wav
