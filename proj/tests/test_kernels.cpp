#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mixalign/kernels.hpp"
#include "mixalign/random.hpp"
#include "mixalign/tensor.hpp"
#include "test_util.hpp"

using namespace mixalign;
using kernels::KernelTable;
using kernels::Trans;

namespace {

std::vector<double> draw(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

// SIMD variants differ from the reference only by reassociation and FMA.
void expect_close(const std::vector<double>& a, const std::vector<double>& b, double scale) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12 * scale) << "at " << i;
}

class KernelEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    simd = kernels::avx2_table();
    if (simd == nullptr) GTEST_SKIP() << "no AVX2/FMA on this host";
  }
  const KernelTable& ref = kernels::scalar_table();
  const KernelTable* simd = nullptr;
};

}  // namespace

TEST_F(KernelEquivalence, ElementwiseAcrossTailLengths) {
  Rng rng(11);
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 15u, 16u, 17u, 63u, 1000u}) {
    const auto a = draw(n, rng);
    auto b = draw(n, rng);
    for (double& x : b) x = x >= 0 ? x + 0.5 : x - 0.5;
    using Fn = void (*)(std::size_t, const double*, const double*, double*);
    for (auto pick : {+[](const KernelTable& t) -> Fn { return t.add; }, +[](const KernelTable& t) -> Fn { return t.sub; },
                      +[](const KernelTable& t) -> Fn { return t.mul; }, +[](const KernelTable& t) -> Fn { return t.div; }}) {
      std::vector<double> r1(n), r2(n);
      pick(ref)(n, a.data(), b.data(), r1.data());
      pick(*simd)(n, a.data(), b.data(), r2.data());
      EXPECT_EQ(r1, r2) << "n=" << n;  // single rounding per lane: bitwise
    }
    std::vector<double> s1(n), s2(n);
    ref.scale(n, a.data(), -1.7, s1.data());
    simd->scale(n, a.data(), -1.7, s2.data());
    EXPECT_EQ(s1, s2);
    ref.relu(n, a.data(), s1.data());
    simd->relu(n, a.data(), s2.data());
    EXPECT_EQ(s1, s2);

    std::vector<double> g1(n, 0.25), g2(n, 0.25);
    ref.relu_backward(n, a.data(), b.data(), g1.data());
    simd->relu_backward(n, a.data(), b.data(), g2.data());
    EXPECT_EQ(g1, g2);

    std::vector<double> y1 = b, y2 = b;
    ref.axpy(n, 0.3, a.data(), y1.data());
    simd->axpy(n, 0.3, a.data(), y2.data());
    expect_close(y1, y2, 4.0);

    EXPECT_NEAR(ref.sum(n, a.data()), simd->sum(n, a.data()), 1e-12 * static_cast<double>(n + 1));
    EXPECT_NEAR(ref.dot(n, a.data(), b.data()), simd->dot(n, a.data(), b.data()), 1e-12 * static_cast<double>(n + 1) * 4);
  }
}

TEST_F(KernelEquivalence, GemmAllTransposesAndOddSizes) {
  Rng rng(5);
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {8, 8, 8}, {13, 9, 17}, {32, 33, 31}, {4, 150, 27}};
  for (const auto& s : shapes) {
    const std::size_t m = s[0], n = s[1], k = s[2];
    for (Trans ta : {Trans::No, Trans::Yes}) {
      for (Trans tb : {Trans::No, Trans::Yes}) {
        const auto a = draw(m * k, rng);
        const auto b = draw(k * n, rng);
        const auto c0 = draw(m * n, rng);
        const std::size_t lda = ta == Trans::No ? k : m;
        const std::size_t ldb = tb == Trans::No ? n : k;
        for (double beta : {0.0, 1.0, 0.5}) {
          auto c1 = c0, c2 = c0;
          ref.gemm(ta, tb, m, n, k, 1.3, a.data(), lda, b.data(), ldb, beta, c1.data(), n);
          simd->gemm(ta, tb, m, n, k, 1.3, a.data(), lda, b.data(), ldb, beta, c2.data(), n);
          expect_close(c1, c2, 8.0 * static_cast<double>(k));
        }
      }
    }
  }
}

TEST_F(KernelEquivalence, ConvForwardBackwardAgreeAcrossTables) {
  Rng rng(3);
  const Tensor x0 = testutil::random_tensor({2, 3, 9, 9}, rng);
  const Tensor w0 = testutil::random_tensor({5, 3, 3, 3}, rng);
  auto run = [&](const KernelTable& table) {
    kernels::set_active(table);
    Tensor x = x0.clone().set_requires_grad(true);
    Tensor w = w0.clone().set_requires_grad(true);
    Tensor y = conv2d(relu(x), w, {1, 1});
    sum(y * y).backward();
    std::vector<double> out(y.data().begin(), y.data().end());
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  const KernelTable& before = kernels::active();
  const auto r1 = run(ref);
  const auto r2 = run(*simd);
  kernels::set_active(before);
  expect_close(r1, r2, 1e3);
}

TEST(KernelDispatch, ActiveTableIsOneOfTheKnownVariants) {
  const auto name = kernels::active().name;
  EXPECT_TRUE(name == kernels::scalar_table().name || (kernels::avx2_table() != nullptr && name == kernels::avx2_table()->name));
}
