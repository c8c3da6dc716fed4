#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "fraclab/snapshot.hpp"

using namespace fraclab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("fraclab_snapshot_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  fs::create_directories(dir);
  return dir / name;
}

} // namespace

TEST(Snapshot, RoundTripAtSinglePrecision) {
  const TorusGrid g(2, 16, 5.0);
  const auto f = make_initial_data(RandomBand{3, 0.5, 2.5}, g);
  const auto base = scratch("rt");
  write_snapshot(base, f, 0.25, "node_0001");
  EXPECT_EQ(fs::file_size(base.string() + ".bin"), g.size() * 8);
  const auto s = read_snapshot(base);
  EXPECT_EQ(s.field.grid(), g);
  EXPECT_EQ(s.time, 0.25);
  EXPECT_EQ(s.tag, "node_0001");
  for (std::size_t i = 0; i < g.size(); ++i) {
    const cplx a = f.values()[i], b = s.field.values()[i];
    ASSERT_EQ(b.real(), static_cast<double>(static_cast<float>(a.real())));
    ASSERT_EQ(b.imag(), static_cast<double>(static_cast<float>(a.imag())));
  }
}

TEST(Snapshot, LittleEndianFloatPairs) {
  const TorusGrid g(1, 16, 1.0);
  std::vector<cplx> v(g.size());
  v[0] = {1.0, -2.0};
  const auto base = scratch("le");
  write_snapshot(base, SpectralField(g, v), 0.0, "x");
  std::ifstream in(base.string() + ".bin", std::ios::binary);
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  const unsigned char one[4] = {0x00, 0x00, 0x80, 0x3f};
  const unsigned char minus_two[4] = {0x00, 0x00, 0x00, 0xc0};
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(bytes[i], one[i]);
    EXPECT_EQ(bytes[4 + i], minus_two[i]);
  }
}

TEST(Snapshot, SidecarFields) {
  const TorusGrid g(3, 16, 2.0);
  const auto base = scratch("side");
  write_snapshot(base, SpectralField::zeros(g), 1.5, "final");
  std::ifstream js(base.string() + ".json");
  const auto side = nlohmann::json::parse(js);
  EXPECT_EQ(side.at("d"), 3);
  EXPECT_EQ(side.at("n"), 16);
  EXPECT_EQ(side.at("L"), 2.0);
  EXPECT_EQ(side.at("time"), 1.5);
  EXPECT_EQ(side.at("tag"), "final");
}

TEST(Snapshot, TruncatedBinaryRejected) {
  const TorusGrid g(1, 16, 1.0);
  const auto base = scratch("trunc");
  write_snapshot(base, SpectralField::zeros(g), 0.0, "t");
  fs::resize_file(base.string() + ".bin", 8 * 15);
  EXPECT_THROW(read_snapshot(base), ShapeError);
  EXPECT_THROW(read_snapshot(scratch("missing")), Error);
}
