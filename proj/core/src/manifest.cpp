#include "dfusion/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dfusion/errors.hpp"

namespace fs = std::filesystem;

namespace dfusion {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

void DatasetManifest::validate() const {
  std::set<std::string> seen;
  for (const ManifestEntry& e : entries) {
    if (e.id.empty()) throw std::invalid_argument("manifest: empty pair id");
    if (!seen.insert(e.id).second) throw std::invalid_argument("manifest: duplicate pair id '" + e.id + "'");
  }
}

std::string format_manifest(const DatasetManifest& manifest) {
  std::ostringstream os;
  os << "# split: " << manifest.split << '\n';
  if (manifest.seed) os << "# seed: " << *manifest.seed << '\n';
  for (const ManifestEntry& e : manifest.entries) {
    os << e.id << '\t' << e.visible.generic_string() << '\t' << e.infrared.generic_string() << '\n';
  }
  return os.str();
}

DatasetManifest parse_manifest(const std::string& text, const fs::path& base_dir) {
  DatasetManifest manifest;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    if (stripped.front() == '#') {
      const std::string body = trim(stripped.substr(1));
      if (body.rfind("split:", 0) == 0) manifest.split = trim(body.substr(6));
      if (body.rfind("seed:", 0) == 0) manifest.seed = std::stoull(trim(body.substr(5)));
      continue;
    }
    std::vector<std::string> fields;
    std::istringstream cols(line);
    std::string field;
    while (std::getline(cols, field, '\t')) fields.push_back(field);
    if (fields.size() != 3) {
      throw std::invalid_argument("manifest line " + std::to_string(line_no) + ": expected id<TAB>visible<TAB>infrared");
    }
    manifest.entries.push_back({fields[0], resolve(base_dir, fields[1]), resolve(base_dir, fields[2])});
  }
  manifest.validate();
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  out << format_manifest(manifest);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read manifest '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  DatasetManifest manifest = parse_manifest(text.str(), path.parent_path());
  for (const ManifestEntry& e : manifest.entries) {
    for (const fs::path& p : {e.visible, e.infrared}) {
      if (!fs::exists(p)) throw IoError("manifest '" + path.string() + "' references missing file '" + p.string() + "'");
    }
  }
  return manifest;
}

DatasetManifest scan_pair_folder(const fs::path& root, const std::string& split) {
  const fs::path vi = root / "vi", ir = root / "ir";
  if (!fs::is_directory(vi) || !fs::is_directory(ir)) {
    throw IoError("'" + root.string() + "' has no vi/ and ir/ subdirectories");
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(vi)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  DatasetManifest manifest;
  manifest.split = split;
  for (const fs::path& v : files) {
    const fs::path i = ir / v.filename();
    if (!fs::exists(i)) throw IoError("no infrared image '" + i.string() + "' for '" + v.string() + "'");
    manifest.entries.push_back({v.stem().string(), v, i});
  }
  manifest.validate();
  return manifest;
}

DatasetManifest open_dataset(const fs::path& path) {
  if (fs::is_directory(path)) {
    if (fs::exists(path / "manifest.tsv")) return load_manifest(path / "manifest.tsv");
    return scan_pair_folder(path);
  }
  return load_manifest(path);
}

fs::path thermal_mask_path(const fs::path& dataset_dir, const std::string& id) {
  return dataset_dir / "masks" / (id + ".png");
}

}  // namespace dfusion
