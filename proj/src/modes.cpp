#include "psteer/modes.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace psteer {

namespace {

// Gram side switches to the dense SVD above this size.
constexpr Index kGramLimit = 256;

void fix_sign(Matrix& vectors) {
  for (Index c = 0; c < vectors.cols(); ++c) {
    Index argmax = 0;
    vectors.col(c).cwiseAbs().maxCoeff(&argmax);
    if (vectors(argmax, c) < 0.0) vectors.col(c) = -vectors.col(c);
  }
}

// Deterministic completion of an orthonormal column set from canonical basis
// vectors; needed when the requested rank exceeds the numerical rank.
void complete_basis(Matrix& vectors, Index filled) {
  const Index n = vectors.rows();
  Index cand = 0;
  for (Index c = filled; c < vectors.cols(); ++c) {
    for (; cand < n; ++cand) {
      Vector v = Vector::Zero(n);
      v(cand) = 1.0;
      for (Index k = 0; k < c; ++k) {
        v -= vectors.col(k).dot(v) * vectors.col(k);
      }
      const double norm = v.norm();
      if (norm > 0.5) {
        vectors.col(c) = v / norm;
        ++cand;
        break;
      }
    }
    if (cand > n) throw NumericError("basis completion exhausted candidates");
  }
}

void check_rank(const Matrix& Z, Index r) {
  if (r < 1 || r > std::min(Z.rows(), Z.cols())) {
    throw ConfigError("truncation rank out of range 1..min(rows, cols)");
  }
}

}  // namespace

TruncatedSvd truncated_right_svd_gram(const Matrix& Z, Index r) {
  check_rank(Z, r);
  const Index rows = Z.rows();
  const Index cols = Z.cols();
  TruncatedSvd out;
  out.right = Matrix::Zero(cols, r);
  out.sv = Vector::Zero(r);

  if (cols <= rows) {
    // Right Gram matrix: eigenvectors are the right singular vectors directly,
    // orthonormal even in the null space.
    Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(Z.transpose() * Z));
    if (es.info() != Eigen::Success) throw NumericError("Gram eigendecomposition failed");
    for (Index k = 0; k < r; ++k) {
      const Index src = cols - 1 - k;
      out.right.col(k) = es.eigenvectors().col(src);
      out.sv(k) = std::sqrt(std::max(0.0, es.eigenvalues()(src)));
    }
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(Z * Z.transpose()));
    if (es.info() != Eigen::Success) throw NumericError("Gram eigendecomposition failed");
    const double sv_max = std::sqrt(std::max(0.0, es.eigenvalues()(rows - 1)));
    // The Gram route squares the conditioning: singular values below
    // ~sqrt(eps)*sv_max are numerically null, and dividing by them would
    // destroy orthogonality. Route those to basis completion instead.
    const double tol = sv_max * 1e-7;
    Index filled = 0;
    for (Index k = 0; k < r; ++k) {
      const Index src = rows - 1 - k;
      const double sv = std::sqrt(std::max(0.0, es.eigenvalues()(src)));
      out.sv(k) = sv;
      if (sv > tol && sv > 0.0) {
        Vector v = Z.transpose() * es.eigenvectors().col(src) / sv;
        // One re-orthonormalization sweep keeps phi^T phi = I at machine
        // precision even when sv sits near the tolerance.
        for (Index prev = 0; prev < k; ++prev) {
          v -= out.right.col(prev).dot(v) * out.right.col(prev);
        }
        const double norm = v.norm();
        if (norm < 0.5) throw NumericError("Gram-path singular vector collapsed");
        out.right.col(k) = v / norm;
        filled = k + 1;
      } else {
        out.sv(k) = 0.0;
      }
    }
    complete_basis(out.right, filled);
  }
  fix_sign(out.right);
  return out;
}

TruncatedSvd truncated_right_svd_full(const Matrix& Z, Index r) {
  check_rank(Z, r);
  Eigen::BDCSVD<Matrix> svd(Z, Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericError("SVD did not converge");
  TruncatedSvd out;
  out.right = svd.matrixV().leftCols(r);
  out.sv = svd.singularValues().head(r);
  fix_sign(out.right);
  return out;
}

Matrix feature_field(const RepresentationTensor& X, Index f) {
  if (f < 0 || f >= X.features()) throw ShapeError("feature index out of range");
  const Index frames = X.frames();
  const Index n = X.nodes();
  Matrix out(frames, n);
  for (Index t = 0; t < frames; ++t) {
    out.row(t) = X.values.frame(t).col(f).transpose();
  }
  return out;
}

ModeDecomposition decompose_field(const Matrix& field, Index feature, Index r) {
  check_rank(field, r);
  ModeDecomposition md;
  md.feature = feature;
  md.mu = field.colwise().mean();
  const Matrix Z = field.rowwise() - md.mu.transpose();

  const TruncatedSvd svd = std::min(Z.rows(), Z.cols()) <= kGramLimit
                               ? truncated_right_svd_gram(Z, r)
                               : truncated_right_svd_full(Z, r);
  md.phi = svd.right;
  md.singular_values = svd.sv;
  md.coeffs = Z * md.phi;
  return md;
}

ModeDecomposition decompose(const RepresentationTensor& X, Index f, Index r) {
  return decompose_field(feature_field(X, f), f, r);
}

Matrix reconstruct(const ModeDecomposition& md, const Matrix& coeffs) {
  if (coeffs.cols() != md.phi.cols()) {
    throw ShapeError("reconstruct: coefficient width != truncation rank");
  }
  return (coeffs * md.phi.transpose()).rowwise() + md.mu.transpose();
}

}  // namespace psteer
