#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "ifg/netcore.hpp"

namespace ifg::nn {

namespace {

constexpr char kMagic[4] = {'I', 'F', 'G', 'K'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

void put_f64(std::ostream& os, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, 2);
    put_u32(os, static_cast<std::uint32_t>(p.value.rows()));
    put_u32(os, static_cast<std::uint32_t>(p.value.cols()));
    for (Index i = 0; i < p.value.size(); ++i) put_f64(os, p.value.data()[i]);
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::map<std::string, Matrix> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  }
  const auto version = get_u32(is);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = get_u32(is);
  std::map<std::string, Matrix> out;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto len = get_u32(is);
    if (len > (1u << 16)) throw std::runtime_error("checkpoint: implausible name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw std::runtime_error("checkpoint: truncated file");
    const auto rank = get_u32(is);
    if (rank < 1 || rank > 2) throw std::runtime_error("checkpoint: tensor '" + name + "' has unsupported rank");
    const auto rows = rank == 2 ? get_u32(is) : 1u;
    const auto cols = get_u32(is);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = get_f64(is);
    if (!out.emplace(std::move(name), std::move(m)).second) throw std::runtime_error("checkpoint: duplicate tensor");
  }
  return out;
}

void load_checkpoint(const std::filesystem::path& path, ParamStore& params) {
  auto tensors = read_checkpoint(path);
  if (tensors.size() != params.size()) throw std::runtime_error("checkpoint: tensor count does not match model");
  for (auto& [name, p] : params) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
    if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols()) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    }
    p.value = std::move(it->second);
  }
}

}  // namespace ifg::nn
