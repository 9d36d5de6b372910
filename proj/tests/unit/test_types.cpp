#include <gtest/gtest.h>

#include "ffm/tensor.hpp"
#include "ffm/types.hpp"

using namespace ffm;

TEST(ActionGrid, DefaultIsTwentyByThirtyTwoOverTheWorkingImage) {
  const ActionGrid g;
  EXPECT_EQ(g.size(), 640);
  EXPECT_EQ(g.cell_w(), 16.0);
  EXPECT_EQ(g.cell_h(), 16.0);
  EXPECT_EQ(g.center(), (Fixation{256, 160}));
}

TEST(ActionGrid, RejectsNonDividingShapes) {
  EXPECT_THROW(ActionGrid(7, 32, 320, 512), std::invalid_argument);
  EXPECT_THROW(ActionGrid(0, 32, 320, 512), std::invalid_argument);
  EXPECT_NO_THROW(ActionGrid(40, 64, 80, 128));
}

TEST(ActionGrid, CellCentresRoundTrip) {
  const ActionGrid g;
  for (int a = 0; a < g.size(); ++a) EXPECT_EQ(fixation_to_action(action_to_fixation(a, g), g), a);
}

TEST(ActionGrid, HalfOpenCells) {
  const ActionGrid g;
  EXPECT_EQ(fixation_to_action({0, 0}, g), 0);
  EXPECT_EQ(fixation_to_action({15.999, 15.999}, g), 0);
  EXPECT_EQ(fixation_to_action({16, 0}, g), 1);
  EXPECT_EQ(fixation_to_action({0, 16}, g), 32);
  EXPECT_EQ(fixation_to_action({511.9, 319.9}, g), 639);
  EXPECT_EQ(fixation_to_action({256, 160}, g), 10 * 32 + 16);
}

TEST(ActionGrid, OutOfBoundsNamesTheCoordinate) {
  const ActionGrid g;
  try {
    fixation_to_action({512, 3}, g);
    FAIL();
  } catch (const std::out_of_range& e) {
    EXPECT_NE(std::string(e.what()).find("x=512"), std::string::npos);
  }
  EXPECT_THROW(fixation_to_action({3, -0.5}, g), std::out_of_range);
  EXPECT_THROW(action_to_fixation(640, g), std::out_of_range);
  EXPECT_THROW(action_to_fixation(-1, g), std::out_of_range);
}

TEST(BBox, HalfOpenContainment) {
  const BBox b{10, 20, 5, 5};
  EXPECT_TRUE(b.contains({10, 20}));
  EXPECT_TRUE(b.contains({14.99, 24.99}));
  EXPECT_FALSE(b.contains({15, 22}));
  EXPECT_FALSE(b.contains({12, 25}));
}

TEST(Scanpath, CountsNewFixations) {
  Scanpath s;
  EXPECT_EQ(s.new_fixations(), 0u);
  s.fixations = {{1, 1}, {2, 2}, {3, 3}};
  EXPECT_EQ(s.new_fixations(), 2u);
}

TEST(Split, ParsesAliases) {
  EXPECT_EQ(parse_split("val"), Split::kValid);
  EXPECT_EQ(parse_split("validation"), Split::kValid);
  EXPECT_EQ(parse_split("test"), Split::kTest);
  EXPECT_FALSE(parse_split("dev").has_value());
  EXPECT_STREQ(to_string(Split::kValid), "valid");
}

TEST(Tasks, EighteenInHeadOrder) {
  const auto& t = default_tasks();
  ASSERT_EQ(t.size(), 18u);
  EXPECT_EQ(t.front(), "bottle");
  EXPECT_EQ(t.back(), "tv");
}

TEST(Tensor, ShapeAndAccess) {
  Tensor<float> t({2, 3, 4}, 1.5f);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(shape_string(t.shape()), "(2,3,4)");
  t.at(1, 2, 3) = 7;
  EXPECT_EQ(t[23], 7.0f);
  EXPECT_EQ(t.channel(1)[11], 7.0f);
  EXPECT_TRUE(t.all_finite());
  t[0] = std::numeric_limits<float>::infinity();
  EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, StorageIsCacheLineAligned) {
  for (std::size_t n : {1u, 3u, 17u, 1000u}) {
    const Tensor<float> t({n});
    EXPECT_EQ(reinterpret_cast<std::uintptr_t>(t.data()) % 64, 0u);
  }
}

TEST(Tensor, CastPreservesShape) {
  Tensor<double> t({2, 2});
  t[3] = 0.25;
  const auto f = t.cast<float>();
  EXPECT_EQ(f.shape(), t.shape());
  EXPECT_EQ(f[3], 0.25f);
}
