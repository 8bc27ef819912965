#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "comet/network.hpp"
#include "comet/prototypes.hpp"
#include "comet/tensor.hpp"

namespace comet::io {

/// Writes `bytes` to a sibling temp file and renames it into place, so
/// readers never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

std::string read_file(const std::filesystem::path& path);

/// Flat container of named 64-bit-integer and tensor entries with a fixed
/// little-endian binary layout. Tensor payloads are raw IEEE-754 bytes, so a
/// load reproduces every stored double bit for bit.
struct Archive {
  std::map<std::string, std::int64_t> ints;
  std::map<std::string, num::Tensor> tensors;

  std::string serialize() const;
  static Archive deserialize(const std::string& bytes);

  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);
};

/// Source-training artifact: the trained model plus its frozen source
/// prototype bank.
struct Checkpoint {
  model::ComposedModel model;
  proto::PrototypeBank bank;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace comet::io
