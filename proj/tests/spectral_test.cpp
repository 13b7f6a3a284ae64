// Copyright 2026 The antismooth Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "antismooth/linalg.hpp"
#include "antismooth/spectral.hpp"
#include "support.hpp"

namespace antismooth {
namespace {

using testing::dft_mask_filter;
using testing::max_abs_diff;

TEST(DcComponent, ConstantColumnIsFixed) {
  const Matrix c(5, 1, 2.75);
  EXPECT_LT(max_abs_diff(dc_component(c), c), 1e-15);
}

TEST(DcComponent, MeanProjection) {
  const Matrix d = dc_component(Matrix{{1}, {2}, {3}, {4}});
  for (double v : d.data()) EXPECT_DOUBLE_EQ(v, 2.5);
}

TEST(DcComponent, MatchesDftMaskOracle) {
  Rng r = Rng::keyed(1, "dc_oracle");
  const Matrix x = Matrix::random_normal(16, 4, r);
  EXPECT_LT(max_abs_diff(dc_component(x), dft_mask_filter(x, testing::dc_mask(16))), 1e-10);
}

TEST(HcComponent, ConstantMatrixGivesZero) {
  EXPECT_EQ(frobenius_norm(hc_component(Matrix(4, 3, -1.5))), 0.0);
}

TEST(HcComponent, MeanFreeSignalUnchanged) {
  const Matrix z{{1}, {-1}};
  EXPECT_LT(max_abs_diff(hc_component(z), z), 1e-15);
}

TEST(HcComponent, MatchesDftMaskOracle) {
  Rng r = Rng::keyed(2, "hc_oracle");
  const Matrix x = Matrix::random_normal(16, 4, r);
  EXPECT_LT(max_abs_diff(hc_component(x), dft_mask_filter(x, testing::hc_mask(16))), 1e-10);
}

TEST(Split, OracleEquivalenceAcrossSizes) {
  Rng r = Rng::keyed(3, "sizes");
  for (std::size_t n : {2u, 4u, 8u, 16u})
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix x = Matrix::random_normal(n, 1 + r.below(6), r, 3.0);
      const SpectralSplit s = split(x);
      EXPECT_LT(max_abs_diff(s.dc, dft_mask_filter(x, testing::dc_mask(n))), 1e-10);
      EXPECT_LT(max_abs_diff(s.hc, dft_mask_filter(x, testing::hc_mask(n))), 1e-10);
    }
}

TEST(Split, ZeroMatrix) {
  const SpectralSplit s = split(Matrix(3, 2));
  EXPECT_EQ(frobenius_norm(s.dc), 0.0);
  EXPECT_EQ(frobenius_norm(s.hc), 0.0);
  EXPECT_EQ(s.source_norm, 0.0);
}

TEST(Split, PureDcInput) {
  const Matrix x = matmul(testing::ones(5, 1), Matrix{{1.0, -2.0, 0.5}});
  const SpectralSplit s = split(x);
  EXPECT_LT(max_abs_diff(s.dc, x), 1e-15);
  EXPECT_LT(frobenius_norm(s.hc), 1e-15);
}

// Type invariants over random generated inputs.
TEST(Split, InvariantsHoldOnRandomInputs) {
  Rng r = Rng::keyed(4, "split_props");
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + r.below(20), d = 1 + r.below(10);
    const Matrix x = Matrix::random_normal(n, d, r, r.uniform(0.01, 100.0));
    const SpectralSplit s = split(x);
    EXPECT_LT(max_abs_diff(s.dc + s.hc, x), 1e-12 * std::max(1.0, max_abs(x)));
    for (std::size_t i = 1; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) EXPECT_EQ(s.dc(i, j), s.dc(0, j));
    const Matrix col_sums = column_means(s.hc);
    for (double v : col_sums.data()) EXPECT_LT(std::abs(v) * static_cast<double>(n), 1e-10 * std::max(1.0, max_abs(x)));
    const double dn = frobenius_norm(s.dc), hn = frobenius_norm(s.hc);
    EXPECT_NEAR(dn * dn + hn * hn, s.source_norm * s.source_norm, 1e-9 * std::max(1.0, s.source_norm * s.source_norm));
  }
}

TEST(Split, IdempotenceAndAnnihilation) {
  Rng r = Rng::keyed(5, "idem");
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix x = Matrix::random_normal(1 + r.below(16), 1 + r.below(5), r);
    EXPECT_LT(max_abs_diff(dc_component(dc_component(x)), dc_component(x)), 1e-10);
    EXPECT_LT(max_abs_diff(hc_component(hc_component(x)), hc_component(x)), 1e-10);
    EXPECT_LT(max_abs(dc_component(hc_component(x))), 1e-10);
  }
}

TEST(Split, Linearity) {
  Rng r = Rng::keyed(6, "linear");
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + r.below(12), d = 1 + r.below(5);
    const Matrix x = Matrix::random_normal(n, d, r), y = Matrix::random_normal(n, d, r);
    const double a = r.uniform(-3, 3), b = r.uniform(-3, 3);
    const SpectralSplit s = split(a * x + b * y), sx = split(x), sy = split(y);
    EXPECT_LT(max_abs_diff(s.dc, a * sx.dc + b * sy.dc), 1e-10);
    EXPECT_LT(max_abs_diff(s.hc, a * sx.hc + b * sy.hc), 1e-10);
  }
}

TEST(HcProportion, Examples) {
  EXPECT_EQ(hc_proportion(Matrix(4, 2, 3.0)), 0.0);
  EXPECT_NEAR(hc_proportion(Matrix{{1, 2}, {-1, -2}}), 1.0, 1e-15);
  // X = 1 v^T + E with equal norms and E mean-free.
  const Matrix dc = matmul(testing::ones(2, 1), Matrix{{1.0, 0.0}});
  const Matrix e{{0.0, 1.0}, {0.0, -1.0}};
  ASSERT_NEAR(frobenius_norm(dc), frobenius_norm(e), 1e-15);
  EXPECT_NEAR(hc_proportion(dc + e), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(HcProportion, ZeroMatrixIsUndefined) {
  EXPECT_THROW(hc_proportion(Matrix(3, 3)), undefined_input_error);
}

TEST(HcProportion, StaysInUnitInterval) {
  Rng r = Rng::keyed(7, "prop_range");
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix x = Matrix::random_normal(1 + r.below(10), 1 + r.below(4), r, r.uniform(0.1, 10.0));
    const double p = hc_proportion(x);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0 + 1e-15);
  }
}

TEST(AttentionSpectrum, UniformMapIsPureLowPass) {
  for (std::size_t n : {2u, 5u, 16u}) {
    const auto s = attention_spectrum(AttentionMap::uniform(n));
    EXPECT_NEAR(s[0], 1.0, 1e-10);
    for (std::size_t i = 1; i < n; ++i) EXPECT_NEAR(s[i], 0.0, 1e-10);
  }
}

TEST(AttentionSpectrum, IdentityIsAllPass) {
  for (double v : attention_spectrum(Matrix::identity(8))) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(AttentionSpectrum, RandomSoftmaxDcDominates) {
  Rng r = Rng::keyed(8, "spec_dom");
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = attention_spectrum(softmax_rows(Matrix::random_normal(16, 16, r)));
    for (std::size_t i = 1; i < s.size(); ++i) EXPECT_GE(s[0], s[i]);
  }
}

TEST(AttentionSpectrum, StochasticDcResponseIsOne) {
  Rng r = Rng::keyed(9, "spec_dc");
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + r.below(20);
    const Matrix a = softmax_rows(Matrix::random_normal(n, n, r, 2.0)).matrix();
    // Lambda_00 = 1^T A 1 / n is the DC-to-DC gain.
    const testing::CMat f = testing::dft_oracle(n);
    const testing::CMat lambda = testing::cmul(testing::cmul(f, testing::as_complex(a)), testing::cadjoint(f));
    EXPECT_NEAR(std::abs(lambda[0][0]), 1.0, 1e-10);
    // The full DC row also carries DC-to-HC leakage: ||1^T A|| / sqrt(n) >= 1.
    std::vector<double> colsum(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) colsum[j] += a(i, j);
    const double expected = vector_norm(colsum) / std::sqrt(static_cast<double>(n));
    const auto s = attention_spectrum(a);
    EXPECT_NEAR(s[0], expected, 1e-12);
    EXPECT_GE(s[0], 1.0 - 1e-12);
  }
}

TEST(AttentionSpectrum, DoublyStochasticDcRowIsExactlyOne) {
  // Circulant averaging kernels have equal column sums.
  for (std::size_t n : {3u, 8u, 13u}) {
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      a(i, i) = 0.5;
      a(i, (i + 1) % n) = 0.3;
      a(i, (i + n - 1) % n) = 0.2;
    }
    EXPECT_NEAR(attention_spectrum(a)[0], 1.0, 1e-10);
  }
}

TEST(AttentionSpectrum, MatchesExplicitRowNormsOfFAFinv) {
  Rng r = Rng::keyed(10, "spec_oracle");
  const std::size_t n = 6;
  const Matrix a = Matrix::random_normal(n, n, r);
  const auto f = testing::dft_oracle(n);
  const auto lam = testing::cmul(testing::cmul(f, testing::as_complex(a)), testing::cadjoint(f));
  const auto s = attention_spectrum(a);
  for (std::size_t i = 0; i < n; ++i) {
    double norm2 = 0.0;
    for (const auto& z : lam[i]) norm2 += std::norm(z);
    EXPECT_NEAR(s[i], std::sqrt(norm2), 1e-10);
  }
}

TEST(AttentionSpectrum, NonSquareThrows) {
  EXPECT_THROW(attention_spectrum(Matrix(2, 3)), shape_error);
}

TEST(AttnSimilarity, Examples) {
  const Matrix u = testing::uniform_map(4), id = Matrix::identity(4);
  EXPECT_NEAR(attn_cosine_similarity(std::vector<Matrix>{u}), 1.0, 1e-15);
  EXPECT_NEAR(attn_cosine_similarity(std::vector<Matrix>{id}), 0.0, 1e-15);
  EXPECT_NEAR(attn_cosine_similarity(std::vector<Matrix>{u, id}), 0.5, 1e-15);
}

TEST(AttnSimilarity, AttentionMapOverload) {
  const std::vector<AttentionMap> maps = {AttentionMap::uniform(3)};
  EXPECT_NEAR(attn_cosine_similarity(maps), 1.0, 1e-15);
}

TEST(AttnSimilarity, ZeroColumnIsUndefined) {
  const Matrix a{{1.0, 0.0}, {1.0, 0.0}};
  EXPECT_THROW(attn_cosine_similarity(std::vector<Matrix>{a}), undefined_input_error);
}

TEST(AttnSimilarity, RangeOnRandomMaps) {
  Rng r = Rng::keyed(11, "msim");
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + r.below(10);
    std::vector<Matrix> heads;
    for (std::size_t h = 0; h < 1 + r.below(3); ++h)
      heads.push_back(softmax_rows(Matrix::random_normal(n, n, r, 3.0)).matrix());
    const double m = attn_cosine_similarity(heads);
    EXPECT_GE(m, 0.0);
    EXPECT_LE(m, 1.0 + 1e-15);
  }
}

TEST(FeatSimilarity, Examples) {
  EXPECT_NEAR(feat_cosine_similarity(matmul(testing::ones(4, 1), Matrix{{1.0, -2.0, 3.0}})), 1.0, 1e-15);
  EXPECT_NEAR(feat_cosine_similarity(Matrix::identity(3)), 0.0, 1e-15);
  // Unit vectors at 60, 120 and 180 - 60 degrees: |cos| = 0.5 for every pair.
  const double c = 0.5, s = std::sqrt(3.0) / 2.0;
  EXPECT_NEAR(feat_cosine_similarity(Matrix{{1.0, 0.0}, {c, s}, {-c, s}}), 0.5, 1e-15);
}

TEST(FeatSimilarity, ZeroRowAndSingleRowRejected) {
  EXPECT_THROW(feat_cosine_similarity(Matrix{{1.0, 0.0}, {0.0, 0.0}}), undefined_input_error);
  EXPECT_THROW(feat_cosine_similarity(Matrix{{1.0, 0.0}}), std::invalid_argument);
}

TEST(Lemma4, OffsetResidualNeverBeatsHc) {
  Rng r = Rng::keyed(12, "lemma4");
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + r.below(10), d = 1 + r.below(5);
    const Matrix x = Matrix::random_normal(n, d, r);
    const double hc = frobenius_norm(hc_component(x));
    for (int k = 0; k < 1000 / 20; ++k) {
      const Matrix z = Matrix::random_normal(1, d, r);
      EXPECT_LE(hc, frobenius_norm(x - matmul(testing::ones(n, 1), z)) + 1e-12);
    }
    EXPECT_NEAR(hc, frobenius_norm(x - matmul(testing::ones(n, 1), column_means(x))), 1e-12);
  }
}

}  // namespace
}  // namespace antismooth
