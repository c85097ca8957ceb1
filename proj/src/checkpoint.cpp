#include "gic/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "gic/error.hpp"

namespace gic {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError(std::string("truncated checkpoint: ") + what);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, std::span<const NamedParameter> params) {
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<unsigned char>(out, kCheckpointVersion);
  for (const auto& p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, p.value->rows());
    put<std::uint64_t>(out, p.value->cols());
    out.write(reinterpret_cast<const char*>(p.value->storage().data()),
              static_cast<std::streamsize>(p.value->size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing checkpoint");
}

void write_checkpoint(const std::filesystem::path& path, std::span<const NamedParameter> params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  write_checkpoint(out, params);
}

std::vector<CheckpointEntry> read_checkpoint(std::istream& in) {
  char magic[4] = {};
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError("not a GIC checkpoint (bad magic)");
  }
  const auto version = get<unsigned char>(in, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<CheckpointEntry> out;
  while (in.peek() != std::char_traits<char>::eof()) {
    CheckpointEntry e;
    const auto len = get<std::uint32_t>(in, "name length");
    e.name.resize(len);
    if (!in.read(e.name.data(), len)) throw FormatError("truncated checkpoint: name");
    const auto rank = get<std::uint32_t>(in, "rank");
    if (rank != 2) throw FormatError("entry '" + e.name + "' has unsupported rank " + std::to_string(rank));
    const auto rows = get<std::uint64_t>(in, "dims");
    const auto cols = get<std::uint64_t>(in, "dims");
    std::vector<double> data(rows * cols);
    if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)))) {
      throw FormatError("truncated checkpoint: payload of '" + e.name + "'");
    }
    e.value = ad::Tensor(ad::Shape{rows, cols}, std::move(data));
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  return read_checkpoint(in);
}

void restore_parameters(std::span<const NamedParameter> params, const std::vector<CheckpointEntry>& entries) {
  std::unordered_map<std::string, const ad::Tensor*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e.value;
  for (const auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("checkpoint lacks parameter '" + p.name + "'");
    if (it->second->shape() != p.value->shape()) {
      throw FormatError("parameter '" + p.name + "' has shape " + it->second->shape().str() + " in checkpoint, " +
                        p.value->shape().str() + " in network");
    }
    *p.value = *it->second;
  }
}

}  // namespace gic
