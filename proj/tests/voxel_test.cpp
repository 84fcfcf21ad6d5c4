#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "b2s/common/random.hpp"
#include "b2s/voxel/grid.hpp"
#include "b2s/voxel/grid_io.hpp"
#include "b2s/voxel/metrics.hpp"

namespace b2s {
namespace {

GridSpec small_spec(std::uint32_t h = 4, std::uint32_t w = 5, std::uint32_t z = 3) {
  return GridSpec{h, w, z, 0.5f, {-1.0f, -1.25f, -0.5f}};
}

SemanticGrid random_semantic(Rng& rng, const GridSpec& spec, std::uint8_t k, double free_p = 0.5) {
  SemanticGrid g(spec, k);
  for (std::size_t i = 0; i < spec.count(); ++i)
    g.set(i, rng.uniform() < free_p ? 0 : static_cast<std::uint8_t>(rng.integer(1, k)));
  return g;
}

BinaryGrid random_binary(Rng& rng, const GridSpec& spec, double p = 0.3) {
  BinaryGrid g(spec);
  for (std::size_t i = 0; i < spec.count(); ++i) g.set(i, rng.uniform() < p);
  return g;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "b2s_voxel_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

TEST(GridSpecTest, LinearIndexOrder) {
  const auto spec = small_spec();
  std::size_t expected = 0;
  for (std::uint32_t h = 0; h < spec.dims_h; ++h)
    for (std::uint32_t w = 0; w < spec.dims_w; ++w)
      for (std::uint32_t z = 0; z < spec.dims_z; ++z) {
        EXPECT_EQ(spec.index(h, w, z), expected);
        EXPECT_EQ(spec.coord(expected), (VoxelCoord{h, w, z}));
        ++expected;
      }
}

TEST(GridSpecTest, RejectsNonPositiveDims) {
  EXPECT_THROW(BinaryGrid(GridSpec{0, 1, 1, 0.5f, {}}), Error);
  EXPECT_THROW(BinaryGrid(GridSpec{1, 1, 1, 0.0f, {}}), Error);
}

TEST(GridSpecTest, LocateCenterRoundTrip) {
  const auto spec = small_spec();
  for (std::size_t i = 0; i < spec.count(); ++i) {
    const auto c = spec.coord(i);
    auto located = spec.locate(spec.center(c));
    ASSERT_TRUE(located.has_value());
    EXPECT_EQ(*located, c);
  }
  EXPECT_FALSE(spec.locate({100.0, 0.0, 0.0}).has_value());
}

TEST(BinaryFromSemanticTest, AllFreeGivesZeroBits) {
  SemanticGrid sem(small_spec(), 4);
  EXPECT_EQ(binary_from_semantic(sem).count(), 0u);
}

TEST(BinaryFromSemanticTest, SingleVehicleVoxel) {
  SemanticGrid sem(small_spec(), 4);
  sem.set(VoxelCoord{2, 3, 1}, 3);
  const auto bin = binary_from_semantic(sem);
  EXPECT_EQ(bin.count(), 1u);
  EXPECT_TRUE(bin.get(VoxelCoord{2, 3, 1}));
  EXPECT_EQ(bin.spec(), sem.spec());
}

TEST(BinaryFromSemanticTest, MatchesPerVoxelScan) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto sem = random_semantic(rng, small_spec(6, 7, 5), 4);
    const auto bin = binary_from_semantic(sem);
    for (std::uint32_t h = 0; h < 6; ++h)
      for (std::uint32_t w = 0; w < 7; ++w)
        for (std::uint32_t z = 0; z < 5; ++z)
          EXPECT_EQ(bin.get(VoxelCoord{h, w, z}), sem.at(VoxelCoord{h, w, z}) != 0);
  }
}

TEST(BinaryFromSemanticTest, ClampedLabelsReproduceBits) {
  Rng rng(5);
  const auto bits = random_binary(rng, small_spec());
  SemanticGrid sem(bits.spec(), 1);
  for (std::size_t i = 0; i < bits.size(); ++i) sem.set(i, bits.get(i) ? 1 : 0);
  EXPECT_EQ(binary_from_semantic(sem), bits);
}

TEST(GridIouTest, Examples) {
  const auto spec = small_spec();
  BinaryGrid a(spec), b(spec);
  EXPECT_DOUBLE_EQ(grid_iou(a, b), 1.0);  // double-empty convention

  a.set(0);
  a.set(7);
  EXPECT_DOUBLE_EQ(grid_iou(a, a), 1.0);

  b.set(1);
  b.set(9);
  EXPECT_DOUBLE_EQ(grid_iou(a, b), 0.0);

  // a = {v1, v2}, b = {v1, v2, v3, v4}: |a&b| = 2, |a|b| = 4.
  BinaryGrid c(spec);
  for (std::size_t i : {0, 7, 1, 9}) c.set(i);
  EXPECT_DOUBLE_EQ(grid_iou(a, c), 0.5);
}

TEST(GridIouTest, SpecMismatchThrows) {
  BinaryGrid a(small_spec()), b(small_spec(4, 5, 4));
  try {
    (void)grid_iou(a, b);
    FAIL() << "expected spec mismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::spec_mismatch);
  }
}

TEST(GridIouTest, SymmetricAndOneIffEqual) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_binary(rng, small_spec(2, 2, 2), 0.4);
    const auto b = random_binary(rng, small_spec(2, 2, 2), 0.4);
    EXPECT_DOUBLE_EQ(grid_iou(a, b), grid_iou(b, a));
    EXPECT_EQ(grid_iou(a, b) == 1.0, a == b);
  }
}

TEST(SemanticScoresTest, PerfectPrediction) {
  Rng rng(2);
  const auto gt = random_semantic(rng, small_spec(), 4, 0.2);
  const auto s = semantic_scores(gt, gt);
  EXPECT_DOUBLE_EQ(s.miou, 1.0);
  EXPECT_DOUBLE_EQ(s.binary_iou, 1.0);
  for (const auto& c : s.per_class) {
    if (c) {
      EXPECT_DOUBLE_EQ(*c, 1.0);
    }
  }
}

TEST(SemanticScoresTest, AllFreePrediction) {
  Rng rng(4);
  const auto gt = random_semantic(rng, small_spec(), 4, 0.2);
  SemanticGrid pred(gt.spec(), 4);
  const auto s = semantic_scores(pred, gt);
  EXPECT_DOUBLE_EQ(s.miou, 0.0);
  EXPECT_DOUBLE_EQ(s.binary_iou, 0.0);
}

TEST(SemanticScoresTest, HandFilledConfusion) {
  // 2x2x1 grid, K = 3. gt = [1,2,3,0], pred = [1,3,3,0].
  // Confusion: (1,1)=1, (2,3)=1, (3,3)=1, (0,0)=1.
  // IoU_1 = 1/1, IoU_2 = 0/(0+0+1), IoU_3 = 1/(1+1+0); mIoU = 1.5/3.
  const GridSpec spec{2, 2, 1, 1.0f, {}};
  const SemanticGrid gt(spec, 3, {1, 2, 3, 0});
  const SemanticGrid pred(spec, 3, {1, 3, 3, 0});
  ConfusionTable t(3);
  t.accumulate(pred, gt);
  EXPECT_EQ(t.at(1, 1), 1u);
  EXPECT_EQ(t.at(2, 3), 1u);
  EXPECT_EQ(t.at(3, 3), 1u);
  EXPECT_EQ(t.at(0, 0), 1u);
  EXPECT_EQ(t.total(), 4u);

  const auto s = semantic_scores(pred, gt);
  ASSERT_EQ(s.per_class.size(), 3u);
  EXPECT_DOUBLE_EQ(*s.per_class[0], 1.0);
  EXPECT_DOUBLE_EQ(*s.per_class[1], 0.0);
  EXPECT_DOUBLE_EQ(*s.per_class[2], 0.5);
  EXPECT_DOUBLE_EQ(s.miou, 0.5);
  EXPECT_DOUBLE_EQ(s.binary_iou, 1.0);
}

TEST(SemanticScoresTest, AbsentClassesExcludedFromMean) {
  const GridSpec spec{1, 1, 2, 1.0f, {}};
  const SemanticGrid gt(spec, 4, {1, 0});
  const SemanticGrid pred(spec, 4, {1, 0});
  const auto s = semantic_scores(pred, gt);
  EXPECT_TRUE(s.per_class[0].has_value());
  EXPECT_FALSE(s.per_class[1].has_value());
  EXPECT_DOUBLE_EQ(s.miou, 1.0);
}

TEST(SemanticScoresTest, KMismatchThrows) {
  const GridSpec spec{1, 1, 2, 1.0f, {}};
  EXPECT_THROW(semantic_scores(SemanticGrid(spec, 3), SemanticGrid(spec, 4)), Error);
}

TEST(SemanticGridTest, RejectsLabelAboveK) {
  SemanticGrid g(small_spec(), 2);
  EXPECT_THROW(g.set(0, 3), Error);
}

TEST(MaskTest, ScatterOfGatherIsIdentityOnMask) {
  Rng rng(8);
  const auto spec = small_spec(5, 5, 4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto mask = random_binary(rng, spec, rng.uniform());
    std::vector<int> values(spec.count());
    for (auto& v : values) v = static_cast<int>(rng.integer(1, 1000));
    const auto packed = gather_masked<int>(values, mask);
    EXPECT_EQ(packed.size(), mask.count());
    const auto back = scatter_masked<int>(packed, mask, 0);
    for (std::size_t i = 0; i < spec.count(); ++i)
      EXPECT_EQ(back[i], mask.get(i) ? values[i] : 0);
    EXPECT_EQ(gather_masked<int>(back, mask), packed);
  }
}

TEST(DownsampleTest, AnyOccupiedPooling) {
  const GridSpec fine{4, 4, 2, 0.5f, {}};
  const GridSpec coarse{2, 2, 2, 1.0f, {}};
  BinaryGrid g(fine);
  g.set(VoxelCoord{3, 0, 1});
  const auto d = downsample_any(g, coarse);
  EXPECT_EQ(d.count(), 1u);
  EXPECT_TRUE(d.get(VoxelCoord{1, 0, 1}));
}

TEST(GridIoTest, BinaryRoundTripBitwise) {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = random_binary(rng, small_spec(3, 7, 3));  // 63 voxels, padded last byte
    const auto path = temp_path("bin.b2so");
    save_grid(g, path);
    const auto back = load_binary_grid(path);
    EXPECT_EQ(back, g);
    EXPECT_EQ(encode_grid(back), io::read_file(path));
  }
}

TEST(GridIoTest, SemanticRoundTrip) {
  Rng rng(22);
  const auto g = random_semantic(rng, small_spec(), 4);
  const auto path = temp_path("sem.b2so");
  save_grid(g, path);
  EXPECT_EQ(load_semantic_grid(path, 4), g);
}

TEST(GridIoTest, HeaderLayout) {
  BinaryGrid g(GridSpec{1, 1, 9, 0.5f, {1.0f, 2.0f, 3.0f}});
  g.set(0);
  g.set(8);
  const auto bytes = encode_grid(g);
  ASSERT_EQ(bytes.size(), 4u + 2 + 1 + 12 + 4 + 12 + 2);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "B2SO");
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 0);  // kind = binary
  EXPECT_EQ(bytes[7 + 8], 9);  // Z
  EXPECT_EQ(bytes[bytes.size() - 2], 0x01);  // LSB-first
  EXPECT_EQ(bytes[bytes.size() - 1], 0x01);
}

ErrorKind decode_error(const io::Bytes& bytes) {
  try {
    (void)decode_grid(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode succeeded unexpectedly";
  return ErrorKind::io;
}

TEST(GridIoTest, DistinctErrors) {
  Rng rng(23);
  const auto good = encode_grid(random_binary(rng, small_spec()));

  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(decode_error(bad_magic), ErrorKind::bad_magic);

  auto bad_version = good;
  bad_version[4] = 9;
  EXPECT_EQ(decode_error(bad_version), ErrorKind::version_mismatch);

  auto truncated = good;
  truncated.pop_back();
  EXPECT_EQ(decode_error(truncated), ErrorKind::truncated);
}

}  // namespace
}  // namespace b2s
