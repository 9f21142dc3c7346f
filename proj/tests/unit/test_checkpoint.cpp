#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "dfusion/checkpoint.hpp"
#include "dfusion/errors.hpp"

using namespace dfusion;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "dfusion_checkpoint_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Checkpoint, HeaderLayout) {
  Checkpoint c;
  c.add("w", Tensor({2}, std::vector<double>{1.0, -2.0}));
  const auto bytes = c.encode();
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "DIFZ");
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  EXPECT_EQ(bytes[8], 1);  // entry count
  // name length 1, "w", rank 1, dim 2, two float32 values.
  EXPECT_EQ(bytes.size(), 12u + 4 + 1 + 4 + 4 + 8);
  float last;
  std::memcpy(&last, bytes.data() + bytes.size() - 4, 4);
  EXPECT_EQ(last, -2.0f);
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  Checkpoint c;
  c.add("a", Tensor({2, 3}, std::vector<double>{0.1, 0.2, 0.3, -4, 5e-3, 6}));
  c.add("b.c", Tensor::scalar(7.0));
  const auto bytes = c.encode();
  const Checkpoint d = Checkpoint::decode(bytes);
  EXPECT_EQ(d.encode(), bytes);
  EXPECT_EQ(d.get("b.c").item(), 7.0);
  EXPECT_EQ(d.get("a").dims(), (std::vector<std::size_t>{2, 3}));
  EXPECT_FLOAT_EQ(static_cast<float>(d.get("a")[0]), 0.1f);

  const auto path = temp_file("rt.difz");
  save_checkpoint(c, path);
  EXPECT_EQ(load_checkpoint(path).encode(), bytes);
}

TEST(Checkpoint, Errors) {
  Checkpoint c;
  c.add("x", Tensor({1}));
  EXPECT_THROW(c.add("x", Tensor({1})), std::invalid_argument);
  EXPECT_THROW(c.get("missing"), std::invalid_argument);

  auto bytes = c.encode();
  bytes[0] = 'X';
  EXPECT_THROW(Checkpoint::decode(bytes), IoError);
  auto truncated = c.encode();
  truncated.resize(truncated.size() - 2);
  EXPECT_THROW(Checkpoint::decode(truncated), IoError);

  const auto path = temp_file("garbage.difz");
  std::ofstream(path) << "not a checkpoint";
  try {
    load_checkpoint(path);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("garbage.difz"), std::string::npos);
  }
  EXPECT_THROW(load_checkpoint(temp_file("absent.difz")), IoError);
}
