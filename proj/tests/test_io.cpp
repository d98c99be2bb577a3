#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "gramgan/io.hpp"
#include "tiny_model.hpp"

using namespace gramgan;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Png, RoundTripIsByteIdentical) {
  const auto dir = testutil::temp_dir("png");
  const Tensor img = testutil::stripes(13, 21);
  write_png(dir + "/a.png", img);
  const Tensor back = read_png(dir + "/a.png");
  ASSERT_EQ(back.shape_string(), img.shape_string());
  for (std::size_t i = 0; i < img.data.size(); ++i)
    EXPECT_EQ(quantize(back.data[i]), quantize(img.data[i]));
  write_png(dir + "/b.png", back);
  EXPECT_EQ(slurp(dir + "/a.png"), slurp(dir + "/b.png"));
}

TEST(Png, ClampsOnExport) {
  EXPECT_EQ(quantize(-0.5f), 0);
  EXPECT_EQ(quantize(1.5f), 255);
  EXPECT_EQ(quantize(0.5f), 128);
  const auto dir = testutil::temp_dir("png_clamp");
  Tensor img(1, 3, 2, 2, Real(2));
  write_png(dir + "/c.png", img);
  for (Real v : read_png(dir + "/c.png").data) EXPECT_EQ(v, 1.0f);
}

TEST(Png, UnreadableFileThrows) {
  const auto dir = testutil::temp_dir("png_bad");
  std::ofstream(dir + "/x.png") << "not a png";
  EXPECT_THROW(read_png(dir + "/x.png"), IoError);
  EXPECT_THROW(read_png(dir + "/missing.png"), IoError);
}

TEST(Image, CropAndConcat) {
  const Tensor img = testutil::stripes(8, 10);
  const Tensor c = crop(img, 2, 3, 4);
  EXPECT_EQ(c.h, 4);
  EXPECT_EQ(c.data[0], img.data[2 * 10 + 3]);
  EXPECT_THROW(crop(img, 6, 0, 4), std::invalid_argument);
  const Tensor cat = hconcat({c, c});
  EXPECT_EQ(cat.w, 8);
  EXPECT_EQ(cat.data[4], c.data[0]);
}

TEST(Points, ParsesCommentsAndBlanks) {
  const auto pts = parse_points("# header\n0 0 0\n\n1.5 -2 3e-1  # trailing\n");
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_FLOAT_EQ(pts[1].x, 1.5f);
  EXPECT_FLOAT_EQ(pts[1].z, 0.3f);
}

TEST(Points, ErrorsNameTheLine) {
  try {
    parse_points("0 0 0\n1 2\n");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_points("1 2 3 4\n"), IoError);
  EXPECT_THROW(parse_points("1 nan 3\n"), IoError);
}

TEST(Volume, RoundTripAndValidation) {
  const auto dir = testutil::temp_dir("volume");
  VolumeHeader h;
  h.dims = {3, 2, 2};
  h.extent = {1.5f, 1, 1};
  h.origin = {0.25f, 0, 0};
  {
    VolumeWriter w(dir + "/v.ggvx", h);
    std::vector<Real> slab(3 * 2 * 3);
    for (int z = 0; z < 2; ++z) {
      for (std::size_t i = 0; i < slab.size(); ++i) slab[i] = Real(z * 100 + i);
      w.write_slab(slab);
    }
    w.close();
  }
  const Volume v = read_volume(dir + "/v.ggvx");
  EXPECT_EQ(v.header.dims, h.dims);
  ASSERT_EQ(v.rgb.size(), 36u);
  EXPECT_EQ(v.rgb[18], 100.0f);
  const Vec3 p = h.voxel_position(2, 1, 0);
  EXPECT_FLOAT_EQ(p.x, 1.25f);
  EXPECT_FLOAT_EQ(p.y, 0.5f);

  {
    VolumeWriter w(dir + "/short.ggvx", h);
    w.write_slab(std::vector<Real>(18));
    EXPECT_THROW(w.close(), IoError);
  }
  const std::string bytes = slurp(dir + "/v.ggvx");
  std::ofstream(dir + "/cut.ggvx", std::ios::binary) << bytes.substr(0, bytes.size() - 4);
  EXPECT_THROW(read_volume(dir + "/cut.ggvx"), IoError);
}
