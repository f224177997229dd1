#pragma once

#include <map>
#include <vector>

#include "psteer/modes.hpp"
#include "psteer/oscillation.hpp"
#include "psteer/representation.hpp"
#include "psteer/surrogate.hpp"
#include "psteer/tensor.hpp"

namespace psteer {

// Fixed low-frequency cosine dictionary over the horizon. Column m holds
// cos(2*pi*(m+1)*t/(H+1)), unit l2 normalized; the constant mode is excluded
// because the per-pair offset already covers it.
struct CosineDictionary {
  Matrix B;  // (H+1) x K_basis

  Index frames() const { return B.rows(); }
  Index k_basis() const { return B.cols(); }
};

CosineDictionary make_cosine_dictionary(Index frames, Index k_basis);

// Per-pair phase-offset parameters: slope, offset, and cosine-basis weights.
struct SteeringParams {
  Vector a;  // P
  Vector b;  // P
  Matrix w;  // P x K_basis

  Index pairs() const { return a.size(); }
  Index k_basis() const { return w.cols(); }

  static SteeringParams zeros(Index pairs, Index k_basis);

  // Flat layout per pair: a, b, w[0..K-1].
  Vector pack() const;
  static SteeringParams unpack(const Vector& flat, Index pairs, Index k_basis);
};

// delta_phi_k(t) = a_k * t + b_k + (B w_k)_t with local frame index t = 0..H.
Vector phase_offset(const SteeringParams& params, const CosineDictionary& dict, Index k);

// Time-varying rotation applied independently per SVD-mode column.
std::pair<Matrix, Matrix> rotate_pair(const Matrix& coeffs_i, const Matrix& coeffs_j,
                                      const Vector& dphi);
std::pair<Matrix, Matrix> rotate_pair(const ModeDecomposition& md_i,
                                      const ModeDecomposition& md_j, const Vector& dphi);

struct SteeredState {
  RepresentationTensor X_prime;
  VelocitySequence U_steer;
  Matrix phase_trajectories;  // P x (H+1)
};

// Rotate every selected pair's coefficients, rebuild those feature fields,
// leave all other features untouched, then map back and decode.
SteeredState apply_steering(const RepresentationTensor& X,
                            const std::vector<OscillatoryPair>& pairs,
                            const std::map<Index, ModeDecomposition>& decomps,
                            const SteeringParams& params, const CosineDictionary& dict,
                            const RepresentationMap& map, const FrozenDecoder& decoder);

}  // namespace psteer
