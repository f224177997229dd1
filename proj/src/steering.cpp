#include "psteer/steering.hpp"

#include <cmath>
#include <numbers>

namespace psteer {

CosineDictionary make_cosine_dictionary(Index frames, Index k_basis) {
  if (frames < 2) throw ConfigError("cosine dictionary needs at least 2 frames");
  if (k_basis < 0) throw ConfigError("k_basis must be >= 0");
  Matrix B(frames, k_basis);
  for (Index m = 0; m < k_basis; ++m) {
    for (Index t = 0; t < frames; ++t) {
      B(t, m) = std::cos(2.0 * std::numbers::pi * static_cast<double>(m + 1) *
                         static_cast<double>(t) / static_cast<double>(frames));
    }
    const double norm = B.col(m).norm();
    if (norm > 0.0) B.col(m) /= norm;
  }
  return CosineDictionary{std::move(B)};
}

SteeringParams SteeringParams::zeros(Index pairs, Index k_basis) {
  SteeringParams p;
  p.a = Vector::Zero(pairs);
  p.b = Vector::Zero(pairs);
  p.w = Matrix::Zero(pairs, k_basis);
  return p;
}

Vector SteeringParams::pack() const {
  const Index k = k_basis();
  Vector flat(pairs() * (k + 2));
  for (Index p = 0; p < pairs(); ++p) {
    flat(p * (k + 2)) = a(p);
    flat(p * (k + 2) + 1) = b(p);
    flat.segment(p * (k + 2) + 2, k) = w.row(p).transpose();
  }
  return flat;
}

SteeringParams SteeringParams::unpack(const Vector& flat, Index pairs, Index k_basis) {
  if (flat.size() != pairs * (k_basis + 2)) {
    throw ShapeError("packed steering parameter length mismatch");
  }
  SteeringParams p = zeros(pairs, k_basis);
  for (Index k = 0; k < pairs; ++k) {
    p.a(k) = flat(k * (k_basis + 2));
    p.b(k) = flat(k * (k_basis + 2) + 1);
    p.w.row(k) = flat.segment(k * (k_basis + 2) + 2, k_basis).transpose();
  }
  return p;
}

Vector phase_offset(const SteeringParams& params, const CosineDictionary& dict, Index k) {
  if (k < 0 || k >= params.pairs()) throw ShapeError("pair index out of range");
  if (params.k_basis() != dict.k_basis()) {
    throw ShapeError("steering params and dictionary disagree on K_basis");
  }
  const Index frames = dict.frames();
  Vector dphi = dict.B * params.w.row(k).transpose();
  for (Index t = 0; t < frames; ++t) {
    dphi(t) += params.a(k) * static_cast<double>(t) + params.b(k);
  }
  return dphi;
}

std::pair<Matrix, Matrix> rotate_pair(const Matrix& coeffs_i, const Matrix& coeffs_j,
                                      const Vector& dphi) {
  if (coeffs_i.rows() != coeffs_j.rows() || coeffs_i.cols() != coeffs_j.cols()) {
    throw ShapeError("rotate_pair: coefficient shapes differ");
  }
  if (dphi.size() != coeffs_i.rows()) {
    throw ShapeError("rotate_pair: phase-offset length != number of frames");
  }
  Matrix out_i(coeffs_i.rows(), coeffs_i.cols());
  Matrix out_j(coeffs_j.rows(), coeffs_j.cols());
  for (Index t = 0; t < coeffs_i.rows(); ++t) {
    const double c = std::cos(dphi(t));
    const double s = std::sin(dphi(t));
    out_i.row(t) = c * coeffs_i.row(t) - s * coeffs_j.row(t);
    out_j.row(t) = s * coeffs_i.row(t) + c * coeffs_j.row(t);
  }
  return {std::move(out_i), std::move(out_j)};
}

std::pair<Matrix, Matrix> rotate_pair(const ModeDecomposition& md_i,
                                      const ModeDecomposition& md_j, const Vector& dphi) {
  if (md_i.phi.cols() != md_j.phi.cols()) {
    throw ShapeError("rotate_pair: decompositions disagree on rank");
  }
  return rotate_pair(md_i.coeffs, md_j.coeffs, dphi);
}

SteeredState apply_steering(const RepresentationTensor& X,
                            const std::vector<OscillatoryPair>& pairs,
                            const std::map<Index, ModeDecomposition>& decomps,
                            const SteeringParams& params, const CosineDictionary& dict,
                            const RepresentationMap& map, const FrozenDecoder& decoder) {
  const Index frames = X.frames();
  const Index n = X.nodes();
  const Index p_count = static_cast<Index>(pairs.size());
  if (params.pairs() != p_count) {
    throw ShapeError("steering params sized for a different pair count");
  }
  if (dict.frames() != frames) throw ShapeError("dictionary horizon != tensor horizon");

  SteeredState state;
  state.X_prime = make_representation_tensor(X.values, X.map_kind, false);
  state.phase_trajectories = Matrix::Zero(p_count, frames);

  for (Index k = 0; k < p_count; ++k) {
    const auto& pair = pairs[static_cast<std::size_t>(k)];
    const auto it_i = decomps.find(pair.i);
    const auto it_j = decomps.find(pair.j);
    if (it_i == decomps.end() || it_j == decomps.end()) {
      throw ConfigError("missing mode decomposition for pair (" + std::to_string(pair.i) +
                        ", " + std::to_string(pair.j) + ")");
    }
    const Vector dphi = phase_offset(params, dict, k);
    state.phase_trajectories.row(k) = dphi.transpose();
    const auto [ci, cj] = rotate_pair(it_i->second, it_j->second, dphi);
    const Matrix field_i = reconstruct(it_i->second, ci);
    const Matrix field_j = reconstruct(it_j->second, cj);
    for (Index t = 0; t < frames; ++t) {
      state.X_prime.values.frame(t).col(pair.i) = field_i.row(t).transpose();
      state.X_prime.values.frame(t).col(pair.j) = field_j.row(t).transpose();
    }
  }
  (void)n;

  const EmbeddingSequence emb = inverse(map, state.X_prime);
  state.U_steer = decode_sequence(decoder, emb);
  return state;
}

}  // namespace psteer
