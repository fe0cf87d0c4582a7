#include "mmtts/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "mmtts/errors.hpp"

namespace mmtts {

namespace {

constexpr char kMagic[8] = {'M', 'M', 'T', 'T', 'S', 'C', 'K', '1'};

void write_u64(std::ostream& out, uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw IoError("checkpoint truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, 8);
  write_u64(out, ckpt.config_text.size());
  out.write(ckpt.config_text.data(), static_cast<std::streamsize>(ckpt.config_text.size()));
  write_u64(out, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, t.ndim());
    for (int d = 0; d < t.ndim(); ++d) write_u64(out, static_cast<uint64_t>(t.dim(d)));
    static_assert(sizeof(double) == 8);
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * 8));
  }
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("not a checkpoint file: " + path);
  Checkpoint ckpt;
  uint64_t cfg_len = read_u64(in);
  ckpt.config_text.resize(cfg_len);
  in.read(ckpt.config_text.data(), static_cast<std::streamsize>(cfg_len));
  uint64_t n_tensors = read_u64(in);
  for (uint64_t i = 0; i < n_tensors; ++i) {
    uint64_t name_len = read_u64(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    uint64_t ndim = read_u64(in);
    if (ndim < 1 || ndim > 3) throw IoError("checkpoint tensor '" + name + "' has bad rank");
    std::vector<int> shape;
    for (uint64_t d = 0; d < ndim; ++d) shape.push_back(static_cast<int>(read_u64(in)));
    Tensor t = Tensor::zeros(shape);
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * 8));
    if (!in) throw IoError("checkpoint truncated in tensor '" + name + "'");
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  return ckpt;
}

}  // namespace mmtts
