#include "doctest.h"

#include "mipan/tensor.hpp"

using namespace mipan;

TEST_SUITE("tensor") {

TEST_CASE("construction and indexing") {
  Tensor<double> t({2, 3, 4});
  CHECK(t.rank() == 3);
  CHECK(t.size() == 24);
  CHECK(t.extent(1) == 3);
  t.at({1, 2, 3}) = 7.5;
  CHECK(t[23] == 7.5);
  CHECK(t.at({0, 0, 0}) == 0.0);

  auto f = Tensor<float>::full({2, 2}, 1.5f);
  CHECK(f[0] == 1.5f);
  CHECK(f[3] == 1.5f);
}

TEST_CASE("from data and validation") {
  auto t = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  CHECK(t.at({1, 0}) == 3.0);
  CHECK_THROWS_AS(Tensor<double>::from({2, 2}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor<double>({2, 0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor<double>(Shape{}), std::invalid_argument);
  CHECK_THROWS_AS(t.at({2, 0}), std::invalid_argument);
}

TEST_CASE("finiteness and cast") {
  auto t = Tensor<float>::from({3}, {1.f, 2.f, 3.f});
  CHECK(t.all_finite());
  t[1] = std::numeric_limits<float>::infinity();
  CHECK_FALSE(t.all_finite());

  auto d = Tensor<float>::from({2}, {0.5f, -1.25f}).cast<double>();
  CHECK(d[0] == 0.5);
  CHECK(d[1] == -1.25);
}

}  // TEST_SUITE
