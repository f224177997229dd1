#pragma once

#include <functional>
#include <string>
#include <vector>

#include "psteer/steering.hpp"

namespace psteer {

struct LossWeights {
  double lambda_vel = 1.0;
  double lambda_dv = 0.5;
  double lambda_phase = 1e-2;
  double lambda_mag = 1e-3;
};

void validate_weights(const LossWeights& w);

struct LossBreakdown {
  double total = 0.0;
  double vel = 0.0;
  double dv = 0.0;
  double curv = 0.0;
  double mag = 0.0;
};

struct OptimizerConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Index max_iters = 500;
  double grad_tol = 1e-7;
  std::uint64_t seed = 0;
};

// Mean over frames and nodes of squared state-vector differences.
double loss_vel(const VelocitySequence& u_steer, const VelocitySequence& u_target);

// Mean over frame differences and nodes of squared difference-of-differences.
double loss_dv(const VelocitySequence& u_steer, const VelocitySequence& u_target);

// Mean squared second difference of the phase trajectories (P x (H+1)).
double loss_curv(const Matrix& phase_trajectories);

// Mean squared embedding-space displacement between g^{-1}(X') and g^{-1}(X).
double loss_mag(const RepresentationTensor& x_prime, const RepresentationTensor& x,
                const RepresentationMap& map);

// Decoder forward pass retaining per-layer inputs and pre-activations.
struct DecoderCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> preacts;
};
Matrix decode_with_cache(const FrozenDecoder& dec, const Matrix& emb, DecoderCache& cache);
// Reverse pass; ReLU subgradient at exactly 0 is taken as 0.
Matrix decode_backward(const FrozenDecoder& dec, const DecoderCache& cache,
                       const Matrix& d_out);

// Everything fixed during steering optimization. Pointees must outlive the
// problem; only the low-dimensional steering parameters ever change.
struct SteeringProblem {
  struct PairContext {
    Index i = -1;
    Index j = -1;
    Matrix coeffs_i, coeffs_j;  // (H+1) x r
    Matrix phi_i, phi_j;        // N x r
    Matrix resid_i, resid_j;    // (H+1) x N, mu - original field
  };

  const RepresentationTensor* X = nullptr;
  const RepresentationMap* map = nullptr;
  const FrozenDecoder* decoder = nullptr;
  const VelocitySequence* target = nullptr;
  CosineDictionary dict;
  std::vector<PairContext> pair_ctx;
  Matrix e_base;      // (T*N) x d_emb, g^{-1}(X) flattened
  Matrix directions;  // 2P x d_emb, embedding direction per steered feature
  Index frames = 0, nodes = 0, d_emb = 0, d_out = 0;

  Index pair_count() const { return static_cast<Index>(pair_ctx.size()); }
};

SteeringProblem make_steering_problem(const RepresentationTensor& X,
                                      const std::vector<OscillatoryPair>& pairs,
                                      const std::map<Index, ModeDecomposition>& decomps,
                                      const CosineDictionary& dict,
                                      const RepresentationMap& map,
                                      const FrozenDecoder& decoder,
                                      const VelocitySequence& target);

LossBreakdown evaluate_loss(const SteeringProblem& prob, const SteeringParams& params,
                            const LossWeights& weights);

// Loss plus exact reverse-accumulation gradient w.r.t. the packed parameters.
std::pair<LossBreakdown, Vector> evaluate_with_gradient(const SteeringProblem& prob,
                                                        const SteeringParams& params,
                                                        const LossWeights& weights);

struct OptimizeResult {
  SteeringParams params;
  std::vector<LossBreakdown> history;
  bool converged = false;
  std::string diagnostic;
};

OptimizeResult optimize(const SteeringProblem& prob, const SteeringParams& init,
                        const OptimizerConfig& cfg, const LossWeights& weights);

// Shared Adam loop over a flat parameter vector. The callable evaluates the
// loss and writes the gradient; returns the best-seen parameters.
struct ScalarOptimizeResult {
  Vector params;
  std::vector<LossBreakdown> history;
  bool converged = false;
  std::string diagnostic;
};
ScalarOptimizeResult adam_minimize(
    const Vector& theta0, const OptimizerConfig& cfg,
    const std::function<LossBreakdown(const Vector&, Vector&)>& loss_and_grad);

}  // namespace psteer
