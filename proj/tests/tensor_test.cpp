#include <doctest.h>
#include <cmath>
#include <vector>

#include "fedora/errors.hpp"
#include "fedora/tensor.hpp"

using namespace fedora;

TEST_CASE("tensor construction validates shape and finiteness") {
  DenseTensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t(1, 2) == 6.0);

  const std::vector<std::size_t> shape22{2, 2};
  const std::vector<double> three{1, 2, 3};
  CHECK_THROWS_AS(DenseTensor(shape22, three), DimensionError);
  const std::vector<std::size_t> shape12{1, 2};
  const std::vector<double> with_nan{1.0, std::nan("")};
  CHECK_THROWS_AS(DenseTensor(shape12, with_nan), ValidationError);

  DenseTensor z({3, 4});
  for (double v : z.values()) CHECK(v == 0.0);
}

TEST_CASE("matmul agrees with a hand-computed product") {
  DenseTensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  DenseTensor b({3, 2}, {7, 8, 9, 10, 11, 12});
  DenseTensor c = matmul(a, b);
  CHECK(c(0, 0) == doctest::Approx(58));
  CHECK(c(0, 1) == doctest::Approx(64));
  CHECK(c(1, 0) == doctest::Approx(139));
  CHECK(c(1, 1) == doctest::Approx(154));

  CHECK_THROWS_AS(matmul(a, a), DimensionError);
}

TEST_CASE("transposed products match explicit transposes") {
  DenseTensor a({3, 2}, {1, 4, 2, 5, 3, 6});
  DenseTensor b({3, 2}, {7, 10, 8, 11, 9, 12});
  // a^T b == matmul(transpose(a), b)
  DenseTensor at({2, 3}, {1, 2, 3, 4, 5, 6});
  DenseTensor expect = matmul(at, b);
  DenseTensor got = matmul_ta(a, b);
  REQUIRE(got.same_shape(expect));
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(expect[i]));

  // a b^T with matching inner dims
  DenseTensor x({2, 2}, {1, 2, 3, 4});
  DenseTensor y({3, 2}, {5, 6, 7, 8, 9, 10});
  DenseTensor got2 = matmul_tb(x, y);  // (2x2)(2x3) = 2x3
  CHECK(got2(0, 0) == doctest::Approx(1 * 5 + 2 * 6));
  CHECK(got2(1, 2) == doctest::Approx(3 * 9 + 4 * 10));
}

TEST_CASE("hconcat and hslice round-trip") {
  DenseTensor a({2, 2}, {1, 2, 3, 4});
  DenseTensor b({2, 1}, {5, 6});
  DenseTensor cat = hconcat({&a, &b});
  CHECK(cat.cols() == 3);
  CHECK(cat(0, 2) == 5.0);
  CHECK(cat(1, 2) == 6.0);

  DenseTensor left = hslice(cat, 0, 2);
  DenseTensor right = hslice(cat, 2, 3);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(left[i] == a[i]);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(right[i] == b[i]);

  CHECK_THROWS_AS(hslice(cat, 2, 5), DimensionError);
}
