#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "svc/common.hpp"
#include "svc/dsp.hpp"

// Minimal 16-bit PCM mono WAV reader/writer.

namespace svc::dsp {

namespace {

void put_u32(std::string& s, uint32_t v) { s.append(reinterpret_cast<const char*>(&v), 4); }
void put_u16(std::string& s, uint16_t v) { s.append(reinterpret_cast<const char*>(&v), 2); }

uint32_t get_u32(const char* p) {
  uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}
uint16_t get_u16(const char* p) {
  uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}

}  // namespace

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  w.validate();
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t data_bytes = n * 2;
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<uint32_t>(w.sample_rate));
  put_u32(out, static_cast<uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (float s : w.samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    const int16_t q = static_cast<int16_t>(std::lrintf(c * 32767.0f));
    out.append(reinterpret_cast<const char*>(&q), 2);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), "io_error", "cannot write wav: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(f.good(), "io_error", "wav write failed: " + path.string());
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "io_error", "cannot read wav: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  require(bytes.size() >= 44 && bytes.compare(0, 4, "RIFF") == 0 &&
              bytes.compare(8, 4, "WAVE") == 0,
          "bad_wav", "not a RIFF/WAVE file: " + path.string());
  size_t pos = 12;
  int sample_rate = 0;
  int bits = 0, channels = 0;
  Waveform w;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const uint32_t size = get_u32(bytes.data() + pos + 4);
    pos += 8;
    if (id == "fmt ") {
      require(size >= 16, "bad_wav", "short fmt chunk");
      require(get_u16(bytes.data() + pos) == 1, "bad_wav", "only PCM supported");
      channels = get_u16(bytes.data() + pos + 2);
      sample_rate = static_cast<int>(get_u32(bytes.data() + pos + 4));
      bits = get_u16(bytes.data() + pos + 14);
    } else if (id == "data") {
      require(channels == 1 && bits == 16, "bad_wav", "expected 16-bit mono PCM");
      const size_t count = std::min<size_t>(size, bytes.size() - pos) / 2;
      w.samples.resize(count);
      for (size_t i = 0; i < count; ++i) {
        int16_t q;
        std::memcpy(&q, bytes.data() + pos + i * 2, 2);
        w.samples[i] = static_cast<float>(q) / 32767.0f;
      }
      pos += size;
      continue;
    }
    pos += size + (size & 1);
  }
  require(sample_rate > 0 && !w.samples.empty(), "bad_wav", "missing fmt or data chunk");
  w.sample_rate = sample_rate;
  return w;
}

}  // namespace svc::dsp
