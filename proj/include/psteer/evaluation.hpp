#pragma once

#include <optional>
#include <string>
#include <vector>

#include "psteer/objective.hpp"

namespace psteer {

struct MetricsReport {
  double frac_pct_vx = 0.0;
  double roi_pct_vx = 0.0;
  double nrmse_vx = 0.0;
  double corr_vxvy = 0.0;
  Vector per_node_frac;  // N, NaN where the per-node gap is zero
  std::string config_fingerprint;
};

// x-velocity field of a sequence as an (H+1) x N matrix.
Matrix x_component(const VelocitySequence& u);

// Percentage of the original-to-target MSE gap closed by steering, over
// masked nodes and all frames. Errors if orig matches target on the mask.
double frac_pct(const Matrix& v_steer, const Matrix& v_orig, const Matrix& v_target,
                const std::vector<bool>* mask = nullptr);

// RMS(steer - target) / RMS(target).
double nrmse(const Matrix& v_steer, const Matrix& v_target);

// Pearson correlation over the flattened joint (vx, vy) samples.
double corr(const VelocitySequence& a, const VelocitySequence& b);

MetricsReport compute_metrics(const VelocitySequence& u_steer, const VelocitySequence& u_orig,
                              const VelocitySequence& u_target, const MeshGeometry& geometry,
                              std::string config_fingerprint);

enum class StaticKind { kScale, kAdditive, kClamp };

std::string to_string(StaticKind kind);
StaticKind static_kind_from_string(const std::string& s);

// A per-feature time-constant edit: multiply, offset, or overwrite.
struct StaticIntervention {
  StaticKind kind = StaticKind::kScale;
  std::vector<Index> features;
  Vector values;  // one scalar per feature
};

// Top features by oscillation amplitude x decoder gain x spectral
// concentration; at most max_features, score-descending.
std::vector<Index> select_static_features(const RepresentationTensor& X,
                                          const RepresentationMap& map,
                                          Index max_features = 10);

RepresentationTensor apply_static(const RepresentationTensor& X,
                                  const StaticIntervention& intervention);

// Fixed context for optimizing the per-feature scalars of one intervention
// kind against the steering composite loss (curvature term absent: nothing
// time-varying). The decoder pointee must outlive the problem.
struct StaticProblem {
  StaticKind kind = StaticKind::kScale;
  std::vector<Index> features;
  const FrozenDecoder* decoder = nullptr;
  Matrix e_base;       // (T*N) x d_emb
  Matrix directions;   // n_features x d_emb
  Matrix base_fields;  // (T*N) x n_features, original feature values
  Matrix target_flat;  // (T*N) x d
  Index frames = 0, nodes = 0, d_emb = 0;
};

StaticProblem make_static_problem(StaticKind kind, const RepresentationTensor& X,
                                  const std::vector<Index>& features,
                                  const RepresentationMap& map, const FrozenDecoder& decoder,
                                  const VelocitySequence& target);

// SCALE starts at 1, ADDITIVE at 0, CLAMP at the feature's space-time mean.
Vector static_init(const StaticProblem& prob);

LossBreakdown static_loss_and_grad(const StaticProblem& prob, const LossWeights& weights,
                                   const Vector& theta, Vector* grad);

struct StaticOptimizeResult {
  StaticIntervention intervention;
  std::vector<LossBreakdown> history;
  bool converged = false;
  std::string diagnostic;
};

// Optimizes the per-feature scalars jointly via the same Adam loop used for
// rotation steering.
StaticOptimizeResult optimize_static(StaticKind kind, const RepresentationTensor& X,
                                     const std::vector<Index>& features,
                                     const RepresentationMap& map,
                                     const FrozenDecoder& decoder,
                                     const VelocitySequence& target,
                                     const OptimizerConfig& cfg, const LossWeights& weights);

}  // namespace psteer
