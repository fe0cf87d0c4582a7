#include "mmtts/plot.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "mmtts/errors.hpp"

namespace mmtts {

namespace {

void push_u32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(static_cast<uint8_t>((x >> 24) & 0xff));
  v.push_back(static_cast<uint8_t>((x >> 16) & 0xff));
  v.push_back(static_cast<uint8_t>((x >> 8) & 0xff));
  v.push_back(static_cast<uint8_t>(x & 0xff));
}

void write_chunk(std::ofstream& out, const char type[4], const std::vector<uint8_t>& data) {
  std::vector<uint8_t> buf;
  push_u32(buf, static_cast<uint32_t>(data.size()));
  buf.insert(buf.end(), type, type + 4);
  buf.insert(buf.end(), data.begin(), data.end());
  uint32_t crc = static_cast<uint32_t>(
      crc32(0L, buf.data() + 4, static_cast<uInt>(4 + data.size())));
  push_u32(buf, crc);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

// Dark blue through magenta to yellow.
void colormap(double v, uint8_t* rgb) {
  v = std::min(1.0, std::max(0.0, v));
  rgb[0] = static_cast<uint8_t>(std::lround(255.0 * std::min(1.0, 2.4 * v * v)));
  rgb[1] = static_cast<uint8_t>(std::lround(255.0 * std::max(0.0, 1.8 * v - 0.8)));
  rgb[2] = static_cast<uint8_t>(std::lround(255.0 * (0.25 + 0.75 * std::sin(3.1416 * v))));
}

}  // namespace

void plot_mel_png(const MelSpectrogram& mel, const std::string& out_path, int pixels_per_frame) {
  if (mel.frames.rows() < 1 || pixels_per_frame < 1)
    throw InvalidInputError("plot_mel_png: empty mel or bad scale");
  int t_len = mel.frames.rows();
  int n_mels = mel.frames.cols();
  int width = t_len * pixels_per_frame;
  int height = n_mels * pixels_per_frame;

  double lo = mel.frames.data()[0], hi = lo;
  for (int64_t i = 0; i < mel.frames.numel(); ++i) {
    lo = std::min(lo, mel.frames.data()[i]);
    hi = std::max(hi, mel.frames.data()[i]);
  }
  double range = (hi > lo) ? (hi - lo) : 1.0;

  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(height) * (1 + 3 * width));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // no scanline filter
    int m = n_mels - 1 - y / pixels_per_frame;
    for (int x = 0; x < width; ++x) {
      int t = x / pixels_per_frame;
      double v = (mel.frames.at(t, m) - lo) / range;
      uint8_t rgb[3];
      colormap(v, rgb);
      raw.insert(raw.end(), rgb, rgb + 3);
    }
  }

  uLongf comp_cap = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> comp(comp_cap);
  if (compress2(comp.data(), &comp_cap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("plot_mel_png: deflate failed");
  comp.resize(comp_cap);

  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image: " + out_path);
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<uint8_t> ihdr;
  push_u32(ihdr, static_cast<uint32_t>(width));
  push_u32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  write_chunk(out, "IHDR", ihdr);
  write_chunk(out, "IDAT", comp);
  write_chunk(out, "IEND", {});
  if (!out) throw IoError("failed writing image: " + out_path);
}

}  // namespace mmtts
