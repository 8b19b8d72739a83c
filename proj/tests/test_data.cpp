#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mipan/data.hpp"
#include "mipan/nn.hpp"
#include "test_util.hpp"

using namespace mipan;

namespace {

struct TempDir {
  std::string path;
  explicit TempDir(std::string p) : path(std::move(p)) {}
  ~TempDir() { std::filesystem::remove_all(path); }
};

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(bool(is));
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = double(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> high_pass(const double* p, std::size_t H, std::size_t W) {
  Tensor<double> img(Shape{1, 1, H, W});
  std::copy(p, p + H * W, img.data());
  Tensor<double> lo = gaussian_blur(img, 1.0, 7);
  std::vector<double> out(H * W);
  for (std::size_t i = 0; i < H * W; ++i) out[i] = p[i] - lo[i];
  return out;
}

}  // namespace

TEST_CASE("scene synthesis is seeded, distinct across seeds, and bounded") {
  auto a = synth_scene(42, 32, 32, 4);
  auto b = synth_scene(42, 32, 32, 4);
  CHECK(testutil::max_abs_diff(a, b) == 0.0);

  auto c = synth_scene(43, 32, 32, 4);
  CHECK(testutil::max_abs_diff(a, c) > 0.01);

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto s = synth_scene(seed, 16, 16, 3);
    double lo = 1e9, hi = -1e9;
    for (std::size_t i = 0; i < s.size(); ++i) {
      lo = std::min(lo, s[i]);
      hi = std::max(hi, s[i]);
    }
    CHECK(lo >= 0.0);
    CHECK(hi <= 1.0);
  }

  CHECK_THROWS_AS(synth_scene(1, 30, 32, 4), std::invalid_argument);
  CHECK_THROWS_AS(synth_scene(1, 32, 32, 0), std::invalid_argument);
}

TEST_CASE("degrading a constant scene keeps it constant") {
  Tensor<double> gt(Shape{3, 16, 16});
  gt.fill(0.6);
  auto [pan, lms] = wald_degrade(gt);
  for (std::size_t i = 0; i < pan.size(); ++i) CHECK(pan[i] == doctest::Approx(0.6).epsilon(1e-14));
  for (std::size_t i = 0; i < lms.size(); ++i) CHECK(lms[i] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(lms.shape() == Shape({3, 4, 4}));
}

TEST_CASE("the published downsampler reproduces lms bit for bit") {
  auto gt = synth_scene(7, 32, 32, 4);
  auto [pan, lms] = wald_degrade(gt);
  CHECK(testutil::max_abs_diff(wald_downsample(gt), lms) == 0.0);
}

TEST_CASE("decimation samples the blurred image at stride four, offset zero") {
  auto gt = synth_scene(9, 32, 32, 2);
  auto [pan, lms] = wald_degrade(gt);
  Tensor<double> gt4(Shape{1, 2, 32, 32});
  std::copy(gt.data(), gt.data() + gt.size(), gt4.data());
  Tensor<double> blurred = gaussian_blur(gt4, 1.0, 7);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x)
        CHECK(lms[{c, y, x}] == blurred[{0, c, 4 * y, 4 * x}]);
}

TEST_CASE("blur keeps the scene mean and pan tracks the detail") {
  auto gt = synth_scene(11, 64, 64, 4);
  auto [pan, lms] = wald_degrade(gt);

  // the blur step keeps the mean; decimation then resamples it with an
  // aliasing error near 1e-2, so the end-to-end bound is the looser one
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto s = synth_scene(seed, 64, 64, 4);
    Tensor<double> s4(Shape{1, 4, 64, 64});
    std::copy(s.data(), s.data() + s.size(), s4.data());
    Tensor<double> blurred = gaussian_blur(s4, 1.0, 7);
    auto low = wald_downsample(s);
    double mg = 0, mb = 0, ml = 0;
    for (std::size_t i = 0; i < s.size(); ++i) mg += s[i];
    for (std::size_t i = 0; i < blurred.size(); ++i) mb += blurred[i];
    for (std::size_t i = 0; i < low.size(); ++i) ml += low[i];
    mg /= double(s.size());
    mb /= double(blurred.size());
    ml /= double(low.size());
    CHECK(std::abs(mb - mg) < 1e-3);
    CHECK(std::abs(ml - mg) < 0.02);
  }

  auto hp_pan = high_pass(pan.data(), 64, 64);
  for (std::size_t c = 0; c < 4; ++c) {
    auto hp_band = high_pass(gt.data() + c * 64 * 64, 64, 64);
    CHECK(pearson(hp_pan, hp_band) > 0.5);
  }
}

TEST_CASE("tensor files round-trip bit-exactly at both precisions and all ranks") {
  TempDir dir("data_test_io");
  std::filesystem::create_directories(dir.path);
  auto g = testutil::rng(5);

  auto check_rt = [&](auto tag, Shape shape) {
    using T = decltype(tag);
    auto t = testutil::random_tensor<T>(shape, g);
    const std::string p = dir.path + "/t.mmtf";
    save_tensor(p, t);
    auto back = load_tensor<T>(p);
    REQUIRE(back.shape() == t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);
  };
  check_rt(float{}, {7});
  check_rt(float{}, {3, 5});
  check_rt(double{}, {2, 3, 4});
  check_rt(double{}, {2, 3, 4, 5});

  CHECK_THROWS_AS(save_tensor(dir.path + "/e.mmtf", Tensor<double>()), std::invalid_argument);
}

TEST_CASE("tensor loading distinguishes magic, version, dtype, and truncation faults") {
  TempDir dir("data_test_iofail");
  std::filesystem::create_directories(dir.path);
  auto g = testutil::rng(6);
  auto t = testutil::random_tensor<double>({3, 4}, g);
  const std::string good = dir.path + "/good.mmtf";
  save_tensor(good, t);
  const std::string bytes = slurp(good);

  auto write_variant = [&](const std::string& name, std::string content) {
    const std::string p = dir.path + "/" + name;
    std::ofstream os(p, std::ios::binary);
    os.write(content.data(), std::streamsize(content.size()));
    return p;
  };

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_WITH_AS(load_tensor<double>(write_variant("m.mmtf", bad_magic)).size(),
                       doctest::Contains("bad magic"), std::runtime_error);

  std::string bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_WITH_AS(load_tensor<double>(write_variant("v.mmtf", bad_version)).size(),
                       doctest::Contains("version"), std::runtime_error);

  CHECK_THROWS_WITH_AS(load_tensor<float>(good).size(), doctest::Contains("dtype"),
                       std::runtime_error);

  CHECK_THROWS_WITH_AS(
      load_tensor<double>(write_variant("t.mmtf", bytes.substr(0, bytes.size() / 2))).size(),
      doctest::Contains("truncated"), std::runtime_error);

  std::string zero_extent = bytes;
  for (int i = 0; i < 8; ++i) zero_extent[8 + i] = 0;  // first extent u64
  CHECK_THROWS_WITH_AS(load_tensor<double>(write_variant("z.mmtf", zero_extent)).size(),
                       doctest::Contains("empty extent"), std::runtime_error);
}

TEST_CASE("dataset building is deterministic and fully round-trips") {
  TempDir d1("data_test_ds1"), d2("data_test_ds2");
  auto m = build_dataset(d1.path, 8, 123, 32, 32, 4);
  CHECK(m.scenes.size() == 8);

  std::size_t files = 0;
  for (auto& e : std::filesystem::directory_iterator(d1.path))
    if (e.path().extension() == ".mmtf") ++files;
  CHECK(files == 24);

  std::size_t trains = 0, tests = 0;
  for (const auto& s : m.scenes) (s.split == "train" ? trains : tests)++;
  CHECK(trains == 6);
  CHECK(tests == 2);

  auto m2 = build_dataset(d2.path, 8, 123, 32, 32, 4);
  for (const auto& s : m.scenes)
    for (const char* part : {"_gt.mmtf", "_pan.mmtf", "_lms.mmtf"})
      CHECK(slurp(d1.path + "/" + s.id + part) == slurp(d2.path + "/" + s.id + part));

  auto loaded = load_manifest(d1.path);
  CHECK(loaded.seed == 123);
  CHECK(loaded.bands == 4);
  CHECK(loaded.height == 32);
  REQUIRE(loaded.scenes.size() == 8);
  CHECK(loaded.scenes[3].split == "test");

  Scene sc = load_scene(loaded, "scene_0002");
  CHECK(sc.gt.shape() == Shape({4, 32, 32}));
  CHECK(testutil::max_abs_diff(sc.gt, synth_scene(123 + 2, 32, 32, 4)) == 0.0);
  auto [pan, lms] = wald_degrade(sc.gt);
  CHECK(testutil::max_abs_diff(sc.pan, pan) == 0.0);
  CHECK(testutil::max_abs_diff(sc.lms, lms) == 0.0);
}

TEST_CASE("empty datasets and malformed manifests are handled") {
  TempDir d("data_test_ds0");
  auto m = build_dataset(d.path, 0, 9, 16, 16, 2);
  CHECK(m.scenes.empty());
  std::size_t files = 0;
  for (auto& e : std::filesystem::directory_iterator(d.path)) {
    (void)e;
    ++files;
  }
  CHECK(files == 1);  // manifest only
  CHECK(load_manifest(d.path).scenes.empty());

  auto write_manifest = [&](const std::string& body) {
    std::ofstream os(d.path + "/manifest.txt");
    os << body;
  };
  write_manifest("seed = 1\nwat = 2\n");
  CHECK_THROWS_WITH_AS(load_manifest(d.path), doctest::Contains("unknown key"),
                       std::runtime_error);
  write_manifest("scene = a,train\nscene = a,test\n");
  CHECK_THROWS_WITH_AS(load_manifest(d.path), doctest::Contains("duplicate"), std::runtime_error);
  write_manifest("scene = a,weird\n");
  CHECK_THROWS_WITH_AS(load_manifest(d.path), doctest::Contains("split"), std::runtime_error);
  CHECK_THROWS_AS(load_manifest("definitely_missing_dir"), std::runtime_error);
}
