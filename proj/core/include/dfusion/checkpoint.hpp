#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dfusion/tensor.hpp"

namespace dfusion {

/// Named tensors stored in the "DIFZ" container:
///   magic "DIFZ" | version u32 | entry count u32 |
///   per entry: name length u32 | UTF-8 name | rank u32 | dims u32 x rank | float32 payload
/// All integers and floats little-endian. Values are rounded to float32 on write.
class Checkpoint {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  struct Entry {
    std::string name;
    Tensor value;
  };

  Checkpoint() = default;
  explicit Checkpoint(std::uint32_t version) : version_(version) {}

  std::uint32_t version() const noexcept { return version_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  /// Appends an entry; names must be unique.
  void add(std::string name, Tensor value);
  bool contains(const std::string& name) const { return find(name) != nullptr; }
  const Tensor* find(const std::string& name) const;
  /// Throws std::invalid_argument naming the missing entry.
  const Tensor& get(const std::string& name) const;

  std::vector<std::uint8_t> encode() const;
  static Checkpoint decode(std::span<const std::uint8_t> bytes);

 private:
  std::uint32_t version_ = kFormatVersion;
  std::vector<Entry> entries_;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Throws IoError on unreadable or malformed files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dfusion
