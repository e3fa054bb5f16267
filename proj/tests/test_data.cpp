// Raw image format, flips/resize, and the dataset manifest round-trip.

#include <gtest/gtest.h>

#include <filesystem>

#include "uwf/data.hpp"

using namespace uwf;

namespace {
std::filesystem::path temp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("uwf_test_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}
}  // namespace

TEST(RawImage, RoundTripIsExact) {
  auto dir = temp_dir("raw");
  Image img(5, 7, 2);
  Rng rng(1);
  for (auto& v : img.pix) v = static_cast<float>(rng.normal());
  write_raw_image(dir / "a.raw", img);
  Image back = read_raw_image(dir / "a.raw");
  EXPECT_EQ(back.h, 5);
  EXPECT_EQ(back.w, 7);
  EXPECT_EQ(back.c, 2);
  EXPECT_EQ(back.pix, img.pix);
}

TEST(RawImage, RejectsBadMagicAndTruncation) {
  auto dir = temp_dir("rawbad");
  {
    std::ofstream f(dir / "bad.raw", std::ios::binary);
    f << "NOPE1234";
  }
  EXPECT_THROW(read_raw_image(dir / "bad.raw"), FormatError);
  Image img(4, 4, 1);
  write_raw_image(dir / "t.raw", img);
  std::filesystem::resize_file(dir / "t.raw", 20);
  EXPECT_THROW(read_raw_image(dir / "t.raw"), FormatError);
  EXPECT_THROW(read_raw_image(dir / "missing.raw"), FormatError);
}

TEST(Flips, HflipIsInvolutionAndMirrors) {
  Image img(2, 3, 1);
  float k = 0;
  for (auto& v : img.pix) v = k++;
  Image f = hflip(img);
  EXPECT_EQ(f.at(0, 0, 0), img.at(0, 0, 2));
  EXPECT_EQ(f.at(0, 1, 1), img.at(0, 1, 1));
  Image ff = hflip(f);
  EXPECT_EQ(ff.pix, img.pix);
  Image vv = vflip(vflip(img));
  EXPECT_EQ(vv.pix, img.pix);
}

TEST(Resize, IdentityAndConstantPreservation) {
  Image img(6, 8, 2);
  for (auto& v : img.pix) v = 0.37f;
  Image same = bilinear_resize(img, 6, 8);
  EXPECT_EQ(same.pix, img.pix);
  Image up = bilinear_resize(img, 13, 11);
  for (float v : up.pix) EXPECT_NEAR(v, 0.37f, 1e-6f);
}

TEST(Resize, LinearRampIsReproduced) {
  // bilinear resampling of a linear function stays linear
  Image img(4, 16, 1);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 16; ++j) img.at(0, i, j) = static_cast<float>(j);
  Image down = bilinear_resize(img, 4, 8);
  for (int j = 1; j < 7; ++j)
    EXPECT_NEAR(down.at(0, 2, j), 2.0f * j + 0.5f, 1e-5f);
}

TEST(Manifest, RoundTripPreservesRecords) {
  auto dir = temp_dir("manifest");
  std::filesystem::create_directories(dir / "images");
  Dataset ds;
  ds.dir = dir;
  for (int i = 0; i < 3; ++i) {
    ImageSample s;
    s.patient_id = "P0000" + std::to_string(i / 2);
    s.age = 60.5 + i;
    s.sex = i % 2 ? Sex::Male : Sex::Female;
    s.eye = i % 2 ? Eye::Right : Eye::Left;
    s.labels.fill(0.0);
    s.labels[0] = s.labels[1 + i] = 1.0;
    s.path = "images/im" + std::to_string(i) + ".raw";
    s.pixels = Image(4, 6, 2);
    write_raw_image(dir / s.path, s.pixels);
    ds.samples.push_back(s);
  }
  ds.index_patients();
  write_manifest(ds, {7, 99, "gen"});

  Dataset back = load_dataset(dir);
  ASSERT_EQ(back.samples.size(), 3u);
  EXPECT_EQ(back.samples[1].patient_id, "P00000");
  EXPECT_EQ(back.samples[1].eye, Eye::Right);
  EXPECT_DOUBLE_EQ(back.samples[2].age, 62.5);
  EXPECT_DOUBLE_EQ(back.samples[2].labels[3], 1.0);
  EXPECT_EQ(back.patients.size(), 2u);
  EXPECT_EQ(back.patients.at("P00000").eyes.size(), 2u);
  EXPECT_EQ(back.samples[0].pixels.h, 4);
}

TEST(Manifest, MissingManifestIsStageDependencyError) {
  auto dir = temp_dir("nomanifest");
  EXPECT_THROW(load_dataset(dir), StageDependencyError);
}
