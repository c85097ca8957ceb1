#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gic/autodiff.hpp"
#include "gic/params.hpp"

namespace gic {

inline constexpr char kCheckpointMagic[4] = {'G', 'I', 'C', '1'};
inline constexpr unsigned char kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  ad::Tensor value;
};

/// Layout: magic "GIC1", version byte, then per entry u32 name length, name
/// bytes, u32 rank, rank x u64 dims, little-endian float64 payload. All
/// integers are little-endian.
void write_checkpoint(std::ostream& out, std::span<const NamedParameter> params);
void write_checkpoint(const std::filesystem::path& path, std::span<const NamedParameter> params);
std::vector<CheckpointEntry> read_checkpoint(std::istream& in);
std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path);

/// Copies entries into params by name. Missing names or shape mismatches
/// throw FormatError.
void restore_parameters(std::span<const NamedParameter> params, const std::vector<CheckpointEntry>& entries);

}  // namespace gic
