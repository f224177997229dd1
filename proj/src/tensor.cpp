#include "psteer/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace psteer {

namespace {

Index checked_product(const std::vector<Index>& dims) {
  if (dims.empty() || dims.size() > 4) {
    throw ShapeError("tensor rank must be 1..4, got " + std::to_string(dims.size()));
  }
  Index n = 1;
  for (Index d : dims) {
    if (d <= 0) throw ShapeError("tensor dims must be positive");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<Index> dims) : dims_(std::move(dims)) {
  data_ = Vector::Zero(checked_product(dims_));
}

Tensor::Tensor(std::vector<Index> dims, Vector data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  validate();
}

void Tensor::validate() const {
  const Index n = checked_product(dims_);
  if (data_.size() != n) {
    std::ostringstream os;
    os << "tensor payload length " << data_.size() << " != product of dims " << n;
    throw ShapeError(os.str());
  }
  if (!data_.allFinite()) {
    throw NumericError("tensor payload contains non-finite entries");
  }
}

ConstMatrixMap Tensor::frame(Index t) const {
  if (rank() != 3) throw ShapeError("frame() requires a rank-3 tensor");
  if (t < 0 || t >= dims_[0]) throw ShapeError("frame index out of range");
  return ConstMatrixMap(data_.data() + t * dims_[1] * dims_[2], dims_[1], dims_[2]);
}

MatrixMap Tensor::frame(Index t) {
  if (rank() != 3) throw ShapeError("frame() requires a rank-3 tensor");
  if (t < 0 || t >= dims_[0]) throw ShapeError("frame index out of range");
  return MatrixMap(data_.data() + t * dims_[1] * dims_[2], dims_[1], dims_[2]);
}

ConstMatrixMap Tensor::flat() const {
  if (rank() != 3) throw ShapeError("flat() requires a rank-3 tensor");
  return ConstMatrixMap(data_.data(), dims_[0] * dims_[1], dims_[2]);
}

MatrixMap Tensor::flat() {
  if (rank() != 3) throw ShapeError("flat() requires a rank-3 tensor");
  return MatrixMap(data_.data(), dims_[0] * dims_[1], dims_[2]);
}

ConstMatrixMap Tensor::matrix() const {
  if (rank() != 2) throw ShapeError("matrix() requires a rank-2 tensor");
  return ConstMatrixMap(data_.data(), dims_[0], dims_[1]);
}

std::string to_string(MapKind kind) {
  switch (kind) {
    case MapKind::kIdentity: return "IDENTITY";
    case MapKind::kPca: return "PCA";
    case MapKind::kSae: return "SAE";
  }
  throw ConfigError("unknown map kind");
}

MapKind map_kind_from_string(const std::string& s) {
  if (s == "IDENTITY") return MapKind::kIdentity;
  if (s == "PCA") return MapKind::kPca;
  if (s == "SAE") return MapKind::kSae;
  throw ConfigError("unknown representation '" + s + "' (expected SAE|PCA|IDENTITY)");
}

EmbeddingSequence make_embedding_sequence(Tensor values, long t0, double dt) {
  if (values.rank() != 3) throw ShapeError("embedding sequence must be rank 3");
  if (values.dim(0) < 3) {
    throw ShapeError("embedding sequence needs H >= 2 (at least 3 frames)");
  }
  return EmbeddingSequence{std::move(values), t0, dt};
}

RepresentationTensor make_representation_tensor(Tensor values, MapKind kind,
                                                bool validate_nonneg) {
  if (values.rank() != 3) throw ShapeError("representation tensor must be rank 3");
  if (kind == MapKind::kSae && validate_nonneg && values.data().minCoeff() < 0.0) {
    throw NumericError("SAE representation tensor has negative entries");
  }
  return RepresentationTensor{std::move(values), kind};
}

VelocitySequence make_velocity_sequence(Tensor values) {
  if (values.rank() != 3) throw ShapeError("velocity sequence must be rank 3");
  return VelocitySequence{std::move(values)};
}

void validate_geometry(const MeshGeometry& geom) {
  if (geom.positions.cols() != 2) throw ShapeError("node positions must be N x 2");
  if (geom.positions.rows() < 1) throw ShapeError("geometry needs at least one node");
  if (!(geom.roi.x_min < geom.roi.x_max && geom.roi.y_min < geom.roi.y_max)) {
    throw ConfigError("ROI rectangle is degenerate");
  }
  const Index n = geom.positions.rows();
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if ((geom.positions.row(i) - geom.positions.row(j)).lpNorm<Eigen::Infinity>() <= 1e-12) {
        throw ConfigError("duplicate node positions at indices " + std::to_string(i) +
                          " and " + std::to_string(j));
      }
    }
  }
}

std::vector<bool> roi_mask(const MeshGeometry& geom) {
  const Index n = geom.positions.rows();
  std::vector<bool> mask(static_cast<std::size_t>(n), false);
  for (Index i = 0; i < n; ++i) {
    const double x = geom.positions(i, 0);
    const double y = geom.positions(i, 1);
    mask[static_cast<std::size_t>(i)] = x >= geom.roi.x_min && x <= geom.roi.x_max &&
                                        y >= geom.roi.y_min && y <= geom.roi.y_max;
  }
  return mask;
}

}  // namespace psteer
