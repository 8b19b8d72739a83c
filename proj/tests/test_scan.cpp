#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "mipan/scan.hpp"
#include "test_util.hpp"

using namespace mipan;

namespace {

template <typename T>
std::vector<ScanStep<T>> random_steps(std::size_t L, std::size_t C, std::size_t N,
                                      std::mt19937_64& g) {
  std::uniform_real_distribution<double> ua{0.05, 0.999};
  std::uniform_real_distribution<double> ub{-1.0, 1.0};
  std::vector<ScanStep<T>> steps;
  steps.reserve(L);
  for (std::size_t t = 0; t < L; ++t) {
    ScanStep<T> s{Tensor<T>({C, N}), Tensor<T>({C, N}), Tensor<T>({N}), Tensor<T>({C})};
    for (std::size_t i = 0; i < C * N; ++i) {
      s.a[i] = T(ua(g));
      s.b[i] = T(ub(g));
    }
    for (std::size_t n = 0; n < N; ++n) s.c[{n}] = T(ub(g));
    for (std::size_t c = 0; c < C; ++c) s.x[{c}] = T(ub(g));
    steps.push_back(std::move(s));
  }
  return steps;
}

// Closed form: h_t = sum_{s<=t} (prod_{r=s+1..t} a_r) b_s, evaluated by
// explicit products rather than the recurrence.
template <typename T>
Tensor<T> scan_closed_form(const std::vector<ScanStep<T>>& steps, const Tensor<T>& d_skip) {
  const std::size_t L = steps.size();
  const std::size_t C = steps[0].a.extent(0), N = steps[0].a.extent(1);
  Tensor<T> y({C, L});
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t c = 0; c < C; ++c) {
      T acc = T(0);
      for (std::size_t n = 0; n < N; ++n) {
        T h = T(0);
        for (std::size_t s = 0; s <= t; ++s) {
          T prod = steps[s].b[{c, n}];
          for (std::size_t r = s + 1; r <= t; ++r) prod *= steps[r].a[{c, n}];
          h += prod;
        }
        acc += steps[t].c[{n}] * h;
      }
      y[{c, t}] = acc + d_skip[c] * steps[t].x[{c}];
    }
  return y;
}

}  // namespace

TEST_CASE("discretize closed forms") {
  const std::size_t C = 3, N = 2;
  auto g = testutil::rng(71);
  auto p = make_ssm_params<double>(C, N, g);

  SUBCASE("unit step size with a zero state matrix gives a = 1/e") {
    p.a_log->value.fill(0.0);                         // A = -1 everywhere
    p.w_delta->value.fill(0.0);                       // pre-activation = bias
    p.b_delta->value.fill(std::log(std::exp(1.0) - 1.0));  // softplus -> 1
    Tensor<double> x({C});
    x.fill(0.5);
    auto s = discretize(x, p);
    for (std::size_t i = 0; i < C * N; ++i)
      CHECK(s.a[i] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  }

  SUBCASE("random token matches the scalar closed form per entry") {
    auto x = testutil::random_tensor<double>({C}, g);
    auto s = discretize(x, p);
    for (std::size_t c = 0; c < C; ++c) {
      double pre = p.b_delta->value[{c}];
      for (std::size_t ci = 0; ci < C; ++ci) pre += p.w_delta->value[{ci, c}] * x[{ci}];
      const double delta = std::log1p(std::exp(pre));
      for (std::size_t n = 0; n < N; ++n) {
        const double A = -std::exp(p.a_log->value[{c, n}]);
        double bv = 0, cvv = 0;
        for (std::size_t ci = 0; ci < C; ++ci) {
          bv += p.w_b->value[{ci, n}] * x[{ci}];
          cvv += p.w_c->value[{ci, n}] * x[{ci}];
        }
        CHECK(s.a[{c, n}] == doctest::Approx(std::exp(delta * A)).epsilon(1e-12));
        CHECK(s.b[{c, n}] == doctest::Approx(delta * bv * x[{c}]).epsilon(1e-12));
        CHECK(s.c[{n}] == doctest::Approx(cvv).epsilon(1e-12));
        CHECK(s.a[{c, n}] > 0.0);
        CHECK(s.a[{c, n}] <= 1.0);
      }
    }
  }
}

TEST_CASE("sequential scan degenerate regimes") {
  const std::size_t C = 2, N = 3, L = 5;
  auto g = testutil::rng(73);
  auto steps = random_steps<double>(L, C, N, g);
  Tensor<double> d({C});
  d.fill(0.25);

  SUBCASE("zero decay makes each output memoryless") {
    for (auto& s : steps) s.a.fill(0.0);
    auto y = scan_sequential(steps, d);
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t c = 0; c < C; ++c) {
        double want = 0.25 * steps[t].x[{c}];
        for (std::size_t n = 0; n < N; ++n) want += steps[t].c[{n}] * steps[t].b[{c, n}];
        CHECK(y[{c, t}] == doctest::Approx(want).epsilon(1e-12));
      }
  }

  SUBCASE("unit decay with constant drive accumulates linearly") {
    for (auto& s : steps) {
      s.a.fill(1.0);
      s.b.fill(0.5);
      s.c.fill(0.0);
      for (std::size_t n = 0; n < N; ++n) s.c[{n}] = n == 0 ? 1.0 : 0.0;
      s.b.fill(0.0);
      for (std::size_t c = 0; c < C; ++c) s.b[{c, 0}] = 0.5;
    }
    Tensor<double> d0({C});
    auto y = scan_sequential(steps, d0);
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t c = 0; c < C; ++c)
        CHECK(y[{c, t}] == doctest::Approx(0.5 * double(t + 1)).epsilon(1e-12));
  }

  SUBCASE("six random steps match the product-sum closed form") {
    auto s6 = random_steps<double>(6, C, N, g);
    auto y = scan_sequential(s6, d);
    auto want = scan_closed_form(s6, d);
    CHECK(testutil::max_abs_diff(y, want) < 1e-12);
  }
}

TEST_CASE("parallel scan agrees with the sequential scan") {
  const std::size_t C = 2, N = 4;
  Tensor<double> dd({C});
  dd.fill(0.5);
  Tensor<float> df({C});
  df.fill(0.5f);
  for (std::size_t L : {1, 2, 3, 5, 17, 256, 4096}) {
    const int seeds = L >= 256 ? 3 : 10;
    for (int s = 0; s < seeds; ++s) {
      auto g = testutil::rng(1000 + 31 * int(L) + s);
      auto steps = random_steps<double>(L, C, N, g);
      auto ys = scan_sequential(steps, dd);
      auto yp = scan_parallel(steps, dd);
      CHECK(testutil::max_abs_diff(ys, yp) < 1e-12);

      std::vector<ScanStep<float>> fsteps;
      for (auto& st : steps)
        fsteps.push_back({st.a.template cast<float>(), st.b.template cast<float>(),
                          st.c.template cast<float>(), st.x.template cast<float>()});
      auto fs = scan_sequential(fsteps, df);
      auto fp = scan_parallel(fsteps, df);
      CHECK(testutil::max_abs_diff(fs, fp) < 1e-5);
    }
  }
}

TEST_CASE("affine-map composition is associative") {
  auto g = testutil::rng(79);
  std::uniform_real_distribution<double> ua{0.05, 1.0};
  std::uniform_real_distribution<double> ub{-1.0, 1.0};
  for (int trial = 0; trial < 200; ++trial) {
    double a[3], b[3];
    for (int i = 0; i < 3; ++i) {
      a[i] = ua(g);
      b[i] = ub(g);
    }
    double a12, b12, a23, b23, l_a, l_b, r_a, r_b;
    detail::compose_into(&a[0], &b[0], &a[1], &b[1], &a12, &b12, 1);
    detail::compose_into(&a12, &b12, &a[2], &b[2], &l_a, &l_b, 1);
    detail::compose_into(&a[1], &b[1], &a[2], &b[2], &a23, &b23, 1);
    detail::compose_into(&a[0], &b[0], &a23, &b23, &r_a, &r_b, 1);
    CHECK(std::abs(l_a - r_a) < 1e-12);
    CHECK(std::abs(l_b - r_b) < 1e-12);
  }
}

TEST_CASE("packed scan equals discretize plus sequential scan") {
  const std::size_t B = 2, C = 4, N = 3, L = 11;
  auto g = testutil::rng(83);
  auto p = make_ssm_params<double>(C, N, g);
  auto x = testutil::random_tensor<double>({B, C, L}, g);
  auto y = ssm_scan(make_constant(x), p);
  REQUIRE(y->value.shape() == Shape({B, C, L}));
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<ScanStep<double>> steps;
    for (std::size_t t = 0; t < L; ++t) {
      Tensor<double> tok({C});
      for (std::size_t c = 0; c < C; ++c) tok[{c}] = x[{b, c, t}];
      steps.push_back(discretize(tok, p));
    }
    auto want = scan_sequential(steps, p.d_skip->value);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < L; ++t)
        CHECK(y->value[{b, c, t}] == doctest::Approx(want[{c, t}]).epsilon(1e-12));
  }
}

TEST_CASE("packed scan parallel flag changes nothing but the algorithm") {
  const std::size_t B = 2, C = 3, N = 4, L = 19;
  auto g = testutil::rng(89);
  auto p = make_ssm_params<double>(C, N, g);
  auto x = testutil::random_tensor<double>({B, C, L}, g);
  auto ys = ssm_scan(make_constant(x), p, false);
  auto yp = ssm_scan(make_constant(x), p, true);
  CHECK(testutil::max_abs_diff(ys->value, yp->value) < 1e-12);

  auto g2 = testutil::rng(89);
  auto pf = make_ssm_params<float>(C, N, g2);
  auto xf = testutil::random_tensor<float>({B, C, L}, g);
  auto yfs = ssm_scan(make_constant(xf), pf, false);
  auto yfp = ssm_scan(make_constant(xf), pf, true);
  CHECK(testutil::max_abs_diff(yfs->value, yfp->value) < 1e-5f);
}

TEST_CASE("packed scan rejects mismatched shapes") {
  auto g = testutil::rng(97);
  auto p = make_ssm_params<double>(4, 2, g);
  auto bad = make_constant(testutil::random_tensor<double>({1, 3, 5}, g));
  CHECK_THROWS_AS(ssm_scan(bad, p), std::invalid_argument);
  auto flat = make_constant(testutil::random_tensor<double>({4, 5}, g));
  CHECK_THROWS_AS(ssm_scan(flat, p), std::invalid_argument);
}

TEST_CASE("packed scan gradients match finite differences") {
  const std::size_t B = 1, C = 3, N = 4, L = 6;
  auto g = testutil::rng(101);
  auto p = make_ssm_params<double>(C, N, g);
  auto x = make_param(testutil::random_tensor<double>({B, C, L}, g, -1.0, 1.0));
  std::vector<NodePtr<double>> leaves = {x};
  for (auto& l : p.leaves()) leaves.push_back(l);
  auto loss = [&] { return sum_all(silu(ssm_scan(x, p))); };
  CHECK(testutil::max_grad_rel_err<double>(leaves, loss) < 1e-4);
}

TEST_CASE("zero upstream gradient leaves parameters untouched") {
  const std::size_t B = 1, C = 2, N = 2, L = 4;
  auto g = testutil::rng(103);
  auto p = make_ssm_params<double>(C, N, g);
  auto x = make_param(testutil::random_tensor<double>({B, C, L}, g));
  auto loss = scale(sum_all(ssm_scan(x, p)), 0.0);
  backward(loss);
  for (auto& l : p.leaves())
    for (std::size_t i = 0; i < l->grad.size(); ++i) CHECK(l->grad[i] == 0.0);
}

TEST_CASE("bounded inputs never produce non-finite scan outputs") {
  const std::size_t C = 4, N = 4, L = 16;
  auto g = testutil::rng(107);
  auto p = make_ssm_params<float>(C, N, g);
  std::uniform_real_distribution<double> u{-3.0, 3.0};
  for (int seq = 0; seq < 10000; ++seq) {
    Tensor<float> x({1, C, L});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = float(u(g));
    auto y = ssm_scan(make_constant(x), p);
    CHECK(y->value.all_finite());
  }
}
