#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dfusion {

struct ManifestEntry {
  std::string id;
  std::filesystem::path visible;
  std::filesystem::path infrared;
};

/// Text form: optional "# split: <tag>" and "# seed: <n>" header comments, then
/// one pair per line as id<TAB>visible<TAB>infrared. Relative paths are
/// resolved against the manifest's directory on load.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::string split = "train";
  std::optional<std::uint64_t> seed;

  /// Throws std::invalid_argument on duplicate ids.
  void validate() const;
};

std::string format_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir = {});

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
/// Parses and checks that every referenced file exists (IoError naming the path otherwise).
DatasetManifest load_manifest(const std::filesystem::path& path);

/// MSRS-style folder: <root>/vi/<name>.png paired with <root>/ir/<name>.png, ids
/// taken from file stems in sorted order.
DatasetManifest scan_pair_folder(const std::filesystem::path& root, const std::string& split = "test");

/// Loads a manifest file, or scans a directory laid out as vi/ and ir/.
DatasetManifest open_dataset(const std::filesystem::path& path);

/// Thermal mask written next to synthetic pairs: <manifest dir>/masks/<id>.png.
std::filesystem::path thermal_mask_path(const std::filesystem::path& dataset_dir, const std::string& id);

}  // namespace dfusion
