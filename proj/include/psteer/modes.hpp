#pragma once

#include "psteer/tensor.hpp"

namespace psteer {

// Truncated spatial-mode decomposition of one feature's space-time field:
// mean-removed snapshots factored as coeffs * phi^T, phi orthonormal.
struct ModeDecomposition {
  Index feature = -1;
  Vector mu;               // N, temporal mean
  Matrix phi;              // N x r, orthonormal columns
  Matrix coeffs;           // (H+1) x r
  Vector singular_values;  // r, non-increasing
};

struct TruncatedSvd {
  Matrix right;  // N x r, orthonormal, sign-fixed
  Vector sv;     // r, non-increasing, >= 0
};

// Top-r right singular vectors of Z via the Gram matrix of the smaller side.
TruncatedSvd truncated_right_svd_gram(const Matrix& Z, Index r);

// Same contract through Eigen's dense SVD; reference path.
TruncatedSvd truncated_right_svd_full(const Matrix& Z, Index r);

ModeDecomposition decompose_field(const Matrix& field, Index feature, Index r);
ModeDecomposition decompose(const RepresentationTensor& X, Index f, Index r);

// coeffs * phi^T + mu per frame.
Matrix reconstruct(const ModeDecomposition& md, const Matrix& coeffs);

// Feature slice of a representation tensor as an (H+1) x N matrix.
Matrix feature_field(const RepresentationTensor& X, Index f);

}  // namespace psteer
