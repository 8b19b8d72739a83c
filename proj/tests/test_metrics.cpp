#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "mipan/metrics.hpp"
#include "mipan/nn.hpp"
#include "test_util.hpp"

using namespace mipan;

namespace {

Tensor<double> constant_image(Shape s, double v) {
  Tensor<double> t(std::move(s));
  t.fill(v);
  return t;
}

}  // namespace

TEST_CASE("psnr sentinel, closed form, and noise monotonicity") {
  auto g = testutil::rng(101);
  auto x = testutil::random_tensor<double>({3, 16, 16}, g, 0.0, 1.0);
  CHECK(psnr(x, x) == std::numeric_limits<double>::infinity());

  Tensor<double> y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * 0.5 + 0.1;
  double mse = 0;
  for (std::size_t i = 0; i < y.size(); ++i) mse += (x[i] - y[i]) * (x[i] - y[i]);
  mse /= double(x.size());
  CHECK(psnr(x, y) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-12));

  // uniform 0.1 offset: MSE 0.01, exactly 20 dB
  auto a = constant_image({2, 8, 8}, 0.4);
  auto b = constant_image({2, 8, 8}, 0.5);
  CHECK(std::abs(psnr(a, b) - 20.0) < 1e-9);

  std::vector<double> scores;
  for (double amp : {0.01, 0.02, 0.04}) {
    Tensor<double> noisy = x;
    auto gn = testutil::rng(55);
    std::uniform_real_distribution<double> d{-amp, amp};
    for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += d(gn);
    scores.push_back(psnr(x, noisy));
  }
  CHECK(scores[0] > scores[1]);
  CHECK(scores[1] > scores[2]);

  Tensor<double> wrong({3, 8, 8});
  CHECK_THROWS_AS(psnr(x, wrong), std::invalid_argument);
}

TEST_CASE("ssim is one on identical images and matches the constant closed form") {
  auto g = testutil::rng(103);
  auto x = testutil::random_tensor<double>({2, 20, 24}, g, 0.0, 1.0);
  CHECK(std::abs(ssim(x, x) - 1.0) < 1e-9);

  // constants: every variance dies, only the luminance term remains
  const double m1 = 0.2, m2 = 0.7, c1 = 1e-4;
  auto a = constant_image({1, 16, 16}, m1);
  auto b = constant_image({1, 16, 16}, m2);
  const double expect = (2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
  CHECK(ssim(a, b) == doctest::Approx(expect).epsilon(1e-12));

  // opposing checkerboards anticorrelate
  Tensor<double> cb1({1, 16, 16}), cb2({1, 16, 16});
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < 16; ++c) {
      const double s = ((r + c) % 2) ? 1.0 : -1.0;
      cb1[{0, r, c}] = 0.5 + 0.4 * s;
      cb2[{0, r, c}] = 0.5 - 0.4 * s;
    }
  CHECK(ssim(cb1, cb2) < 0.0);

  Tensor<double> small({1, 10, 10});
  CHECK_THROWS_AS(ssim(small, small), std::invalid_argument);
}

TEST_CASE("sam scale invariance, right angles, and the per-pixel oracle") {
  auto g = testutil::rng(107);
  auto x = testutil::random_tensor<double>({4, 6, 6}, g, 0.1, 1.0);
  Tensor<double> x2 = x;
  for (std::size_t i = 0; i < x2.size(); ++i) x2[i] *= 2.0;
  CHECK(std::abs(sam(x, x2)) < 1e-9);

  Tensor<double> ex({2, 2, 2}), ey({2, 2, 2});
  for (std::size_t p = 0; p < 4; ++p) {
    ex.data()[p] = 1.0;      // band 0
    ex.data()[4 + p] = 0.0;  // band 1
    ey.data()[p] = 0.0;
    ey.data()[4 + p] = 1.0;
  }
  CHECK(sam(ex, ey) == doctest::Approx(3.14159265358979323846 / 2).epsilon(1e-12));

  auto y = testutil::random_tensor<double>({4, 6, 6}, g, 0.1, 1.0);
  double acc = 0;
  const std::size_t plane = 36;
  for (std::size_t p = 0; p < plane; ++p) {
    double dot = 0, nx = 0, ny = 0;
    for (std::size_t c = 0; c < 4; ++c) {
      dot += x[c * plane + p] * y[c * plane + p];
      nx += x[c * plane + p] * x[c * plane + p];
      ny += y[c * plane + p] * y[c * plane + p];
    }
    acc += std::acos(std::clamp(dot / std::sqrt(nx * ny), -1.0, 1.0));
  }
  CHECK(sam(x, y) == doctest::Approx(acc / double(plane)).epsilon(1e-10));

  // zero spectral vectors are skipped, never divided by
  Tensor<double> xz = x, yz = y;
  for (std::size_t c = 0; c < 4; ++c) xz[c * plane] = 0.0;
  CHECK(std::isfinite(sam(xz, yz)));
  CHECK_THROWS_AS(sam(Tensor<double>({2, 3, 3}), Tensor<double>({2, 3, 3})),
                  std::invalid_argument);
}

TEST_CASE("ergas closed form and oracle") {
  auto g = testutil::rng(109);
  auto x = testutil::random_tensor<double>({3, 8, 8}, g, 0.1, 1.0);
  CHECK(ergas(x, x) == 0.0);

  auto ref = constant_image({1, 8, 8}, 0.4);
  Tensor<double> off = ref;
  for (std::size_t i = 0; i < off.size(); ++i) off[i] += 0.04;
  CHECK(ergas(off, ref) == doctest::Approx(2.5).epsilon(1e-12));

  auto y = testutil::random_tensor<double>({3, 8, 8}, g, 0.1, 1.0);
  double acc = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    double mse = 0, mean = 0;
    for (std::size_t i = 0; i < 64; ++i) {
      const double d = x[c * 64 + i] - y[c * 64 + i];
      mse += d * d;
      mean += y[c * 64 + i];
    }
    acc += (mse / 64.0) / ((mean / 64.0) * (mean / 64.0));
  }
  CHECK(ergas(x, y) == doctest::Approx(25.0 * std::sqrt(acc / 3.0)).epsilon(1e-12));

  Tensor<double> zero_ref({1, 8, 8});
  CHECK_THROWS_AS(ergas(x.shape() == zero_ref.shape() ? x : off, zero_ref),
                  std::invalid_argument);
}

TEST_CASE("q index scores identity as one and opposition as negative") {
  auto g = testutil::rng(113);
  auto x = testutil::random_tensor<double>({40, 40}, g, 0.0, 1.0);
  CHECK(q_index(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  Tensor<double> inv = x;
  for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 - x[i];
  CHECK(q_index(x, inv) < 0.0);
  // identical constants: degenerate but perfect
  CHECK(q_index(constant_image({2, 2}, 0.3), constant_image({2, 2}, 0.3)) == 1.0);
}

TEST_CASE("qnr scores a spectrally and spatially consistent fusion near one") {
  auto g = testutil::rng(127);
  const std::size_t H = 64, r = 4;
  auto base = testutil::random_tensor<double>({1, 1, H, H}, g, 0.3, 0.7);
  const double gains[4] = {0.8, 1.1, 0.9, 1.2};

  Tensor<double> fused({4, H, H}), pan({1, H, H}), lms({4, H / r, H / r});
  std::copy(base.data(), base.data() + H * H, pan.data());
  for (std::size_t c = 0; c < 4; ++c) {
    Tensor<double> band({1, 1, H, H});
    for (std::size_t i = 0; i < H * H; ++i) {
      fused[c * H * H + i] = gains[c] * base[i];
      band[i] = fused[c * H * H + i];
    }
    Tensor<double> lo = decimate(gaussian_blur(band, 1.0, 7), r, 0);
    std::copy(lo.data(), lo.data() + lo.size(), lms.data() + c * (H / r) * (H / r));
  }

  auto ideal = qnr(fused, lms, pan, r);
  CHECK(ideal.qnr >= 0.99);
  CHECK(ideal.qnr == (1.0 - ideal.d_lambda) * (1.0 - ideal.d_s));

  // plain upsampling keeps the spectrum but loses the spatial detail
  Tensor<double> lms4({1, 4, H / r, H / r});
  std::copy(lms.data(), lms.data() + lms.size(), lms4.data());
  Tensor<double> up4 = upsample(lms4, r, Resample::bicubic);
  Tensor<double> up({4, H, H});
  std::copy(up4.data(), up4.data() + up4.size(), up.data());
  auto lazy = qnr(up, lms, pan, r);
  CHECK(lazy.d_s > ideal.d_s + 0.05);

  // bounds hold across random inputs
  for (int trial = 0; trial < 5; ++trial) {
    auto f = testutil::random_tensor<double>({3, 64, 64}, g, 0.0, 1.0);
    auto l = testutil::random_tensor<double>({3, 16, 16}, g, 0.0, 1.0);
    auto p = testutil::random_tensor<double>({1, 64, 64}, g, 0.0, 1.0);
    auto q = qnr(f, l, p, r);
    CHECK(q.d_lambda >= 0.0);
    CHECK(q.d_lambda <= 1.0);
    CHECK(q.d_s >= 0.0);
    CHECK(q.d_s <= 1.0);
  }

  Tensor<double> bad_lms({4, 15, 15});
  CHECK_THROWS_AS(qnr(fused, bad_lms, pan, r), std::invalid_argument);
  Tensor<double> bad_pan({1, 32, 32});
  CHECK_THROWS_AS(qnr(fused, lms, bad_pan, r), std::invalid_argument);
}

TEST_CASE("report emitters carry the four reference columns in order") {
  MetricsReport r;
  r.psnr = 31.25;
  r.ssim = 0.9321;
  r.sam = 0.0214;
  r.ergas = 2.417;
  const std::string csv = metrics_csv({{"scene0", r}});
  CHECK(csv.find("name,psnr,ssim,sam,ergas") == 0);
  CHECK(csv.find("scene0,31.25") != std::string::npos);

  const std::string table = metrics_table({{"scene0", r}});
  const auto p_psnr = table.find("PSNR");
  const auto p_ssim = table.find("SSIM");
  const auto p_sam = table.find("SAM");
  const auto p_ergas = table.find("ERGAS");
  CHECK(p_psnr != std::string::npos);
  CHECK(p_psnr < p_ssim);
  CHECK(p_ssim < p_sam);
  CHECK(p_sam < p_ergas);
  CHECK(table.find("31.25") != std::string::npos);
}
