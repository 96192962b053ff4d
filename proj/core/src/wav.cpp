#include "prosody_mi/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "prosody_mi/error.hpp"

namespace prosody_mi::wav {
namespace {

std::uint32_t u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 |
         static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

}  // namespace

Audio read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw ParseError(path, 0, "not a RIFF/WAVE file");
  }

  int format = 0;
  int channels = 0;
  int bits = 0;
  Audio audio;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::size_t size = u32(chunk + 4);
    if (pos + 8 + size > bytes.size()) {
      throw ParseError(path, 0, "truncated chunk");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0 && size >= 16) {
      format = u16(chunk + 8);
      channels = u16(chunk + 10);
      audio.sample_rate_hz = static_cast<int>(u32(chunk + 12));
      bits = u16(chunk + 22);
      if (format == 0xFFFE && size >= 40) format = u16(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = size;
    }
    pos += 8 + size + (size & 1);
  }
  if (data == nullptr || format == 0) {
    throw ParseError(path, 0, "missing fmt or data chunk");
  }
  if (channels != 1) {
    throw ParseError(path, 0, fmt::format("expected mono, found {} channels",
                                          channels));
  }
  if (format == 1 && bits == 16) {
    audio.samples.resize(data_size / 2);
    for (std::size_t i = 0; i < audio.samples.size(); ++i) {
      const auto raw = static_cast<std::int16_t>(u16(data + 2 * i));
      audio.samples[i] = raw / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    audio.samples.resize(data_size / 4);
    for (std::size_t i = 0; i < audio.samples.size(); ++i) {
      const std::uint32_t raw = u32(data + 4 * i);
      float v;
      std::memcpy(&v, &raw, sizeof(v));
      audio.samples[i] = v;
    }
  } else {
    throw ParseError(path, 0,
                     fmt::format("unsupported encoding (format {}, {} bits)",
                                 format, bits));
  }
  return audio;
}

void write_pcm16(const std::string& path, const Audio& audio) {
  const auto n = static_cast<std::uint32_t>(audio.samples.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  put_u32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(audio.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(audio.sample_rate_hz) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, 2 * n);
  for (const double s : audio.samples) {
    const double clipped = std::clamp(s, -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(
        std::lround(std::clamp(clipped * 32768.0, -32768.0, 32767.0)));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write " + path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("write failed: " + path);
}

}  // namespace prosody_mi::wav
