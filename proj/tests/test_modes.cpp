#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/SVD>

#include <cmath>

#include "psteer/modes.hpp"
#include "psteer/rng.hpp"

using namespace psteer;

namespace {

Matrix random_field(Rng& rng, Index rows, Index cols) {
  return Matrix::NullaryExpr(rows, cols, [&rng](Index, Index) { return rng.normal(); });
}

// Independent oracle: full dense SVD of the centered field.
Eigen::BDCSVD<Matrix> full_svd(const Matrix& field) {
  const Matrix centered = field.rowwise() - field.colwise().mean();
  return Eigen::BDCSVD<Matrix>(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
}

}  // namespace

TEST_CASE("rank-1 field reconstructs exactly at r=1") {
  Rng rng(4);
  const Index frames = 30, nodes = 12;
  Vector a(frames), s(nodes);
  for (Index t = 0; t < frames; ++t) a(t) = std::sin(0.3 * static_cast<double>(t));
  for (Index n = 0; n < nodes; ++n) s(n) = rng.normal();
  const Matrix field = a * s.transpose();

  const ModeDecomposition md = decompose_field(field, 0, 1);
  const Matrix recon = reconstruct(md, md.coeffs);
  CHECK((recon - field).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("full-rank truncation reconstructs exactly") {
  Rng rng(5);
  const Matrix field = random_field(rng, 14, 9);
  const ModeDecomposition md = decompose_field(field, 0, 9);
  CHECK((reconstruct(md, md.coeffs) - field).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("truncated reconstruction error equals discarded singular energy") {
  Rng rng(6);
  for (const auto& [rows, cols] : {std::pair<Index, Index>{40, 25}, {25, 40}}) {
    const Matrix field = random_field(rng, rows, cols);
    const Index r = 3;
    const ModeDecomposition md = decompose_field(field, 0, r);
    const double err2 = (reconstruct(md, md.coeffs) - field).squaredNorm();

    const auto svd = full_svd(field);
    double discarded = 0.0;
    for (Index k = r; k < svd.singularValues().size(); ++k) {
      discarded += svd.singularValues()(k) * svd.singularValues()(k);
    }
    CHECK(err2 == doctest::Approx(discarded).epsilon(1e-8));
  }
}

TEST_CASE("gram path agrees with the dense SVD path") {
  Rng rng(7);
  for (const auto& [rows, cols] : {std::pair<Index, Index>{30, 18}, {18, 30}}) {
    const Matrix z = random_field(rng, rows, cols);
    const Index r = 6;
    const TruncatedSvd gram = truncated_right_svd_gram(z, r);
    const TruncatedSvd full = truncated_right_svd_full(z, r);
    CHECK((gram.sv - full.sv).lpNorm<Eigen::Infinity>() <
          1e-9 * std::max(1.0, full.sv(0)));
    CHECK((gram.right - full.right).lpNorm<Eigen::Infinity>() < 1e-9);
    // ... and both are orthonormal
    CHECK((gram.right.transpose() * gram.right - Matrix::Identity(r, r))
              .lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("decomposition invariants") {
  Rng rng(8);
  const Matrix field = random_field(rng, 24, 16);
  const Index r = 5;
  const ModeDecomposition md = decompose_field(field, 3, r);

  CHECK(md.feature == 3);
  CHECK((md.phi.transpose() * md.phi - Matrix::Identity(r, r)).lpNorm<Eigen::Infinity>() <
        1e-9);
  // coeffs recomputable from the stored modes
  const Matrix z = field.rowwise() - md.mu.transpose();
  CHECK((md.coeffs - z * md.phi).lpNorm<Eigen::Infinity>() < 1e-9);
  // energy ordering: column norms equal singular values, non-increasing
  for (Index m = 0; m < r; ++m) {
    CHECK(md.coeffs.col(m).norm() == doctest::Approx(md.singular_values(m)).epsilon(1e-9));
    if (m > 0) CHECK(md.singular_values(m) <= md.singular_values(m - 1) + 1e-12);
  }
  // sign convention: largest-magnitude entry of each mode is positive
  for (Index m = 0; m < r; ++m) {
    Index argmax = 0;
    md.phi.col(m).cwiseAbs().maxCoeff(&argmax);
    CHECK(md.phi(argmax, m) > 0.0);
  }
}

TEST_CASE("reconstruct is linear in the coefficients") {
  Rng rng(9);
  const Matrix field = random_field(rng, 20, 10);
  const ModeDecomposition md = decompose_field(field, 0, 4);

  SUBCASE("zero coefficients give the temporal mean") {
    const Matrix recon = reconstruct(md, Matrix::Zero(20, 4));
    for (Index t = 0; t < 20; ++t) {
      CHECK((recon.row(t).transpose() - md.mu).lpNorm<Eigen::Infinity>() < 1e-12);
    }
  }
  SUBCASE("doubling coefficients doubles the mean-removed field") {
    const Matrix r1 = reconstruct(md, md.coeffs);
    const Matrix r2 = reconstruct(md, Matrix(2.0 * md.coeffs));
    const Matrix mean_part = Matrix::Ones(20, 1) * md.mu.transpose();
    CHECK(((r2 - mean_part) - 2.0 * (r1 - mean_part)).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("projection is idempotent") {
  Rng rng(10);
  const Matrix field = random_field(rng, 22, 13);
  const ModeDecomposition md1 = decompose_field(field, 0, 4);
  const Matrix projected = reconstruct(md1, md1.coeffs);
  const ModeDecomposition md2 = decompose_field(projected, 0, 4);
  const Matrix twice = reconstruct(md2, md2.coeffs);
  CHECK((twice - projected).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("rank deficiency completes the basis deterministically") {
  Rng rng(11);
  // rank-2 field, request r=5
  const Matrix field = random_field(rng, 30, 8).leftCols(2) * random_field(rng, 2, 8);
  const ModeDecomposition md = decompose_field(field, 0, 5);
  CHECK((md.phi.transpose() * md.phi - Matrix::Identity(5, 5)).lpNorm<Eigen::Infinity>() <
        1e-9);
  // the Gram route squares the conditioning, so "zero" means ~sqrt(eps)
  CHECK(md.singular_values(2) < 1e-6 * md.singular_values(0));
  CHECK((reconstruct(md, md.coeffs) - field).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("rank bounds are enforced") {
  Rng rng(12);
  const Matrix field = random_field(rng, 10, 6);
  CHECK_THROWS_AS(decompose_field(field, 0, 0), ConfigError);
  CHECK_THROWS_AS(decompose_field(field, 0, 7), ConfigError);
  const ModeDecomposition md = decompose_field(field, 0, 2);
  CHECK_THROWS_AS(reconstruct(md, Matrix::Zero(10, 3)), ShapeError);
}

TEST_CASE("decompose reads feature slices from representation tensors") {
  Rng rng(13);
  const Index frames = 12, nodes = 7, d = 3;
  Tensor t({frames, nodes, d});
  for (Index i = 0; i < t.size(); ++i) t(i) = rng.normal();
  auto X = make_representation_tensor(std::move(t), MapKind::kIdentity);
  const Matrix field = feature_field(X, 1);
  for (Index tt = 0; tt < frames; ++tt) {
    for (Index n = 0; n < nodes; ++n) {
      CHECK(field(tt, n) == X.values.at3(tt, n, 1));
    }
  }
  const ModeDecomposition md = decompose(X, 1, 3);
  const ModeDecomposition md2 = decompose_field(field, 1, 3);
  CHECK((md.phi - md2.phi).lpNorm<Eigen::Infinity>() == 0.0);
}
