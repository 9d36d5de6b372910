#include <gtest/gtest.h>

#include "ffm/png_io.hpp"
#include "test_support.hpp"

using namespace ffm;

TEST(Png, RgbRoundTrip) {
  const auto dir = ffm::testing::temp_dir("png_rgb");
  Raster r{7, 5, 3, {}};
  for (int i = 0; i < 7 * 5 * 3; ++i) r.pixels.push_back(static_cast<std::uint8_t>(i * 7));
  write_png(dir / "a.png", r);
  const auto back = read_png(dir / "a.png", 3);
  EXPECT_EQ(back.width, 7);
  EXPECT_EQ(back.height, 5);
  EXPECT_EQ(back.pixels, r.pixels);
}

TEST(Png, LabelMapKeepsExactValues) {
  const auto dir = ffm::testing::temp_dir("png_label");
  Raster r{81, 1, 1, {}};
  for (int k = 0; k <= 80; ++k) r.pixels.push_back(static_cast<std::uint8_t>(k));
  write_png(dir / "l.png", r);
  const auto back = read_label_map(dir / "l.png");
  for (int k = 0; k <= 80; ++k) EXPECT_EQ(back.at(k, 0), k);
}

TEST(Png, TensorConversionScalesToUnitRange) {
  Raster r{2, 1, 3, {0, 128, 255, 255, 0, 51}};
  const auto t = raster_to_tensor(r);
  EXPECT_EQ(t.shape(), (Shape{3, 1, 2}));
  EXPECT_FLOAT_EQ(t.at(2, 0, 0), 1.0f);
  EXPECT_FLOAT_EQ(t.at(1, 0, 0), 128 / 255.0f);
  EXPECT_FLOAT_EQ(t.at(2, 0, 1), 0.2f);
  EXPECT_EQ(tensor_to_raster(t).pixels, r.pixels);
}

TEST(Png, TensorToRasterClamps) {
  Tensor<float> t({1, 1, 2});
  t[0] = -3;
  t[1] = 9;
  const auto r = tensor_to_raster(t);
  EXPECT_EQ(r.pixels[0], 0);
  EXPECT_EQ(r.pixels[1], 255);
}

TEST(Png, MissingOrCorruptFileIsADataError) {
  const auto dir = ffm::testing::temp_dir("png_bad");
  EXPECT_THROW(read_png(dir / "none.png", 3), DataError);
  std::ofstream(dir / "junk.png") << "not a png";
  EXPECT_THROW(read_png(dir / "junk.png", 3), DataError);
}
