#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "psteer/errors.hpp"

namespace psteer {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Dense row-major tensor of 64-bit reals, rank 1..4. All sequence data in the
// pipeline is time-major: (t, n, f).
class Tensor {
 public:
  Tensor() = default;

  // Zero-initialized.
  explicit Tensor(std::vector<Index> dims);

  // Takes ownership of the payload; validates length and finiteness.
  Tensor(std::vector<Index> dims, Vector data);

  Index rank() const { return static_cast<Index>(dims_.size()); }
  Index dim(Index i) const { return dims_.at(static_cast<std::size_t>(i)); }
  const std::vector<Index>& dims() const { return dims_; }
  Index size() const { return data_.size(); }

  const Vector& data() const { return data_; }
  Vector& data() { return data_; }

  double operator()(Index i) const { return data_(i); }
  double& operator()(Index i) { return data_(i); }

  double at3(Index t, Index n, Index f) const {
    return data_((t * dims_[1] + n) * dims_[2] + f);
  }
  double& at3(Index t, Index n, Index f) {
    return data_((t * dims_[1] + n) * dims_[2] + f);
  }

  // Rank-3 tensors: frame t as an [dim1 x dim2] matrix view.
  ConstMatrixMap frame(Index t) const;
  MatrixMap frame(Index t);

  // Rank-3 tensors: all frames stacked, [(dim0*dim1) x dim2].
  ConstMatrixMap flat() const;
  MatrixMap flat();

  // Rank-2 tensors as a matrix view.
  ConstMatrixMap matrix() const;

  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

 private:
  void validate() const;

  std::vector<Index> dims_;
  Vector data_;
};

enum class MapKind { kIdentity, kPca, kSae };

std::string to_string(MapKind kind);
MapKind map_kind_from_string(const std::string& s);

// Frozen surrogate node embeddings over a horizon, [(H+1) x N x d_emb].
struct EmbeddingSequence {
  Tensor values;
  long t0 = 0;
  double dt = 1.0;  // metadata only

  Index horizon() const { return values.dim(0) - 1; }  // H
  Index frames() const { return values.dim(0); }       // H + 1
  Index nodes() const { return values.dim(1); }
  Index width() const { return values.dim(2); }
};

EmbeddingSequence make_embedding_sequence(Tensor values, long t0 = 0, double dt = 1.0);

// Representation-space activations, [(H+1) x N x D]. The non-negativity of
// SAE codes holds for encoder output; steered tensors may leave that cone.
struct RepresentationTensor {
  Tensor values;
  MapKind map_kind = MapKind::kIdentity;

  Index frames() const { return values.dim(0); }
  Index nodes() const { return values.dim(1); }
  Index features() const { return values.dim(2); }
};

RepresentationTensor make_representation_tensor(Tensor values, MapKind kind,
                                                bool validate_nonneg = true);

// Decoded state fields over the horizon, [(H+1) x N x d].
struct VelocitySequence {
  Tensor values;

  Index frames() const { return values.dim(0); }
  Index nodes() const { return values.dim(1); }
  Index components() const { return values.dim(2); }
};

VelocitySequence make_velocity_sequence(Tensor values);

struct RoiRect {
  double x_min = 0.0;
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;
};

struct MeshGeometry {
  Matrix positions;  // N x 2
  RoiRect roi;
  Eigen::Vector2d obstacle_center = Eigen::Vector2d::Zero();
  double obstacle_radius = 0.0;

  Index nodes() const { return positions.rows(); }
};

void validate_geometry(const MeshGeometry& geom);

// True iff node n lies inside the ROI rectangle; bounds inclusive on all four
// edges so node counts are platform-independent.
std::vector<bool> roi_mask(const MeshGeometry& geom);

}  // namespace psteer
