#include "dfusion/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "dfusion/errors.hpp"

namespace dfusion {

namespace {

constexpr char kMagic[4] = {'D', 'I', 'F', 'Z'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("checkpoint: truncated data");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("Checkpoint: duplicate entry '" + name + "'");
  if (value.empty()) throw std::invalid_argument("Checkpoint: entry '" + name + "' is empty");
  entries_.push_back(Entry{std::move(name), std::move(value)});
}

const Tensor* Checkpoint::find(const std::string& name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
  return it == entries_.end() ? nullptr : &it->value;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  if (const Tensor* t = find(name)) return *t;
  throw std::invalid_argument("Checkpoint: missing entry '" + name + "'");
}

std::vector<std::uint8_t> Checkpoint::encode() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, version_);
  put_u32(out, static_cast<std::uint32_t>(entries_.size()));
  for (const Entry& e : entries_) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put_u32(out, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t d : e.value.dims()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : e.value.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Checkpoint Checkpoint::decode(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  if (in.text(4) != std::string(kMagic, 4)) throw IoError("checkpoint: bad magic bytes");
  Checkpoint ckpt(in.u32());
  const std::uint32_t count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = in.text(in.u32());
    const std::uint32_t rank = in.u32();
    if (rank == 0) throw IoError("checkpoint: entry '" + name + "' has rank 0");
    std::vector<std::size_t> dims(rank);
    std::size_t n = 1;
    for (auto& d : dims) {
      d = in.u32();
      if (d == 0) throw IoError("checkpoint: entry '" + name + "' has a zero dimension");
      n *= d;
    }
    std::vector<double> data(n);
    for (double& v : data) v = static_cast<double>(std::bit_cast<float>(in.u32()));
    if (ckpt.contains(name)) throw IoError("checkpoint: duplicate entry '" + name + "'");
    ckpt.entries_.push_back(Entry{std::move(name), Tensor(std::move(dims), std::move(data))});
  }
  if (!in.done()) throw IoError("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = checkpoint.encode();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return Checkpoint::decode(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace dfusion
