#include "psteer/objective.hpp"

#include <cmath>
#include <limits>

namespace psteer {

void validate_weights(const LossWeights& w) {
  if (w.lambda_vel < 0 || w.lambda_dv < 0 || w.lambda_phase < 0 || w.lambda_mag < 0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (w.lambda_vel == 0.0 && w.lambda_dv == 0.0) {
    throw ConfigError("at least one of lambda_vel, lambda_dv must be positive");
  }
}

namespace {

void check_same_shape(const VelocitySequence& a, const VelocitySequence& b) {
  if (!a.values.same_shape(b.values)) {
    throw ShapeError("velocity sequences have different shapes");
  }
}

}  // namespace

double loss_vel(const VelocitySequence& u_steer, const VelocitySequence& u_target) {
  check_same_shape(u_steer, u_target);
  const double denom = static_cast<double>(u_steer.frames() * u_steer.nodes());
  return (u_steer.values.data() - u_target.values.data()).squaredNorm() / denom;
}

double loss_dv(const VelocitySequence& u_steer, const VelocitySequence& u_target) {
  check_same_shape(u_steer, u_target);
  const Index h = u_steer.frames() - 1;
  if (h < 1) throw ShapeError("temporal-derivative loss needs at least 2 frames");
  const Index n = u_steer.nodes();
  double acc = 0.0;
  for (Index t = 0; t < h; ++t) {
    acc += ((u_steer.values.frame(t + 1) - u_steer.values.frame(t)) -
            (u_target.values.frame(t + 1) - u_target.values.frame(t)))
               .squaredNorm();
  }
  return acc / static_cast<double>(h * n);
}

double loss_curv(const Matrix& phase_trajectories) {
  const Index p = phase_trajectories.rows();
  const Index frames = phase_trajectories.cols();
  if (frames < 3) throw ShapeError("curvature loss needs at least 3 frames");
  if (p == 0) return 0.0;
  double acc = 0.0;
  for (Index k = 0; k < p; ++k) {
    for (Index t = 0; t + 2 < frames; ++t) {
      const double s = phase_trajectories(k, t) - 2.0 * phase_trajectories(k, t + 1) +
                       phase_trajectories(k, t + 2);
      acc += s * s;
    }
  }
  return acc / static_cast<double>(p * (frames - 2));
}

double loss_mag(const RepresentationTensor& x_prime, const RepresentationTensor& x,
                const RepresentationMap& map) {
  if (!x_prime.values.same_shape(x.values)) {
    throw ShapeError("representation tensors have different shapes");
  }
  const EmbeddingSequence e_prime = inverse(map, x_prime);
  const EmbeddingSequence e = inverse(map, x);
  return (e_prime.values.data() - e.values.data()).squaredNorm() /
         static_cast<double>(e.values.size());
}

Matrix decode_with_cache(const FrozenDecoder& dec, const Matrix& emb, DecoderCache& cache) {
  if (emb.cols() != dec.input_width()) {
    throw ShapeError("decode_with_cache: embedding width mismatch");
  }
  cache.inputs.clear();
  cache.preacts.clear();
  Matrix x = emb;
  for (const auto& l : dec.layers) {
    cache.inputs.push_back(x);
    Matrix pre = x * l.weight;
    pre.rowwise() += l.bias.transpose();
    cache.preacts.push_back(pre);
    x = l.act == Activation::kRelu ? pre.cwiseMax(0.0) : pre;
  }
  return x;
}

Matrix decode_backward(const FrozenDecoder& dec, const DecoderCache& cache,
                       const Matrix& d_out) {
  const auto n_layers = dec.layers.size();
  if (cache.preacts.size() != n_layers) throw ShapeError("decoder cache size mismatch");
  Matrix grad = d_out;
  for (std::size_t li = n_layers; li-- > 0;) {
    const auto& l = dec.layers[li];
    if (l.act == Activation::kRelu) {
      grad = grad.array() * (cache.preacts[li].array() > 0.0).cast<double>();
    }
    grad = grad * l.weight.transpose();
  }
  return grad;
}

SteeringProblem make_steering_problem(const RepresentationTensor& X,
                                      const std::vector<OscillatoryPair>& pairs,
                                      const std::map<Index, ModeDecomposition>& decomps,
                                      const CosineDictionary& dict,
                                      const RepresentationMap& map,
                                      const FrozenDecoder& decoder,
                                      const VelocitySequence& target) {
  SteeringProblem prob;
  prob.X = &X;
  prob.map = &map;
  prob.decoder = &decoder;
  prob.target = &target;
  prob.dict = dict;
  prob.frames = X.frames();
  prob.nodes = X.nodes();
  prob.d_out = decoder.output_width();
  if (dict.frames() != prob.frames) throw ShapeError("dictionary horizon != tensor horizon");
  if (target.frames() != prob.frames || target.nodes() != prob.nodes) {
    throw ShapeError("target shape does not match representation tensor");
  }

  const EmbeddingSequence e_base = inverse(map, X);
  prob.d_emb = e_base.width();
  if (decoder.input_width() != prob.d_emb) {
    throw ShapeError("decoder input width != embedding width");
  }
  prob.e_base = e_base.values.flat();

  prob.directions = Matrix(2 * static_cast<Index>(pairs.size()), prob.d_emb);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& pr = pairs[k];
    const auto it_i = decomps.find(pr.i);
    const auto it_j = decomps.find(pr.j);
    if (it_i == decomps.end() || it_j == decomps.end()) {
      throw ConfigError("missing mode decomposition for pair (" + std::to_string(pr.i) + ", " +
                        std::to_string(pr.j) + ")");
    }
    if (it_i->second.phi.cols() != it_j->second.phi.cols()) {
      throw ShapeError("pair decompositions disagree on rank");
    }
    SteeringProblem::PairContext ctx;
    ctx.i = pr.i;
    ctx.j = pr.j;
    ctx.coeffs_i = it_i->second.coeffs;
    ctx.coeffs_j = it_j->second.coeffs;
    ctx.phi_i = it_i->second.phi;
    ctx.phi_j = it_j->second.phi;
    ctx.resid_i = (-feature_field(X, pr.i)).rowwise() + it_i->second.mu.transpose();
    ctx.resid_j = (-feature_field(X, pr.j)).rowwise() + it_j->second.mu.transpose();
    prob.directions.row(2 * static_cast<Index>(k)) =
        feature_direction(map, pr.i, prob.d_emb).transpose();
    prob.directions.row(2 * static_cast<Index>(k) + 1) =
        feature_direction(map, pr.j, prob.d_emb).transpose();
    prob.pair_ctx.push_back(std::move(ctx));
  }
  return prob;
}

namespace {

struct ForwardState {
  Matrix dphi;                    // P x T
  std::vector<Matrix> rot_i;      // per pair, T x r
  std::vector<Matrix> rot_j;
  Matrix delta;                   // (T*N) x 2P, steered-minus-original feature values
  Matrix e_steer;                 // (T*N) x d_emb
  DecoderCache cache;
  Matrix u_steer;                 // (T*N) x d
  LossBreakdown losses;
};

ForwardState run_forward(const SteeringProblem& prob, const SteeringParams& params,
                         const LossWeights& weights) {
  const Index p_count = prob.pair_count();
  const Index frames = prob.frames;
  const Index n = prob.nodes;
  if (params.pairs() != p_count || params.k_basis() != prob.dict.k_basis()) {
    throw ShapeError("steering params shaped for a different problem");
  }

  ForwardState st;
  st.dphi = Matrix(p_count, frames);
  st.delta = Matrix(frames * n, 2 * p_count);
  for (Index k = 0; k < p_count; ++k) {
    const auto& ctx = prob.pair_ctx[static_cast<std::size_t>(k)];
    const Vector dphi = phase_offset(params, prob.dict, k);
    st.dphi.row(k) = dphi.transpose();
    auto [ci, cj] = rotate_pair(ctx.coeffs_i, ctx.coeffs_j, dphi);
    // delta = rotated reconstruction minus original field, flattened time-major.
    const RowMatrix di = ci * ctx.phi_i.transpose() + ctx.resid_i;
    const RowMatrix dj = cj * ctx.phi_j.transpose() + ctx.resid_j;
    st.delta.col(2 * k) = Eigen::Map<const Vector>(di.data(), frames * n);
    st.delta.col(2 * k + 1) = Eigen::Map<const Vector>(dj.data(), frames * n);
    st.rot_i.push_back(std::move(ci));
    st.rot_j.push_back(std::move(cj));
  }

  st.e_steer = prob.e_base;
  if (p_count > 0) st.e_steer.noalias() += st.delta * prob.directions;
  st.u_steer = decode_with_cache(*prob.decoder, st.e_steer, st.cache);

  const ConstMatrixMap v = prob.target->values.flat();
  st.losses.vel = (st.u_steer - v).squaredNorm() / static_cast<double>(frames * n);
  double dv_acc = 0.0;
  for (Index t = 0; t + 1 < frames; ++t) {
    dv_acc += ((st.u_steer.middleRows((t + 1) * n, n) - st.u_steer.middleRows(t * n, n)) -
               (v.middleRows((t + 1) * n, n) - v.middleRows(t * n, n)))
                  .squaredNorm();
  }
  st.losses.dv = dv_acc / static_cast<double>((frames - 1) * n);
  st.losses.curv = p_count > 0 ? loss_curv(st.dphi) : 0.0;
  st.losses.mag = p_count > 0 ? (st.e_steer - prob.e_base).squaredNorm() /
                                    static_cast<double>(frames * n * prob.d_emb)
                              : 0.0;
  st.losses.total = weights.lambda_vel * st.losses.vel + weights.lambda_dv * st.losses.dv +
                    weights.lambda_phase * st.losses.curv + weights.lambda_mag * st.losses.mag;
  return st;
}

}  // namespace

LossBreakdown evaluate_loss(const SteeringProblem& prob, const SteeringParams& params,
                            const LossWeights& weights) {
  return run_forward(prob, params, weights).losses;
}

std::pair<LossBreakdown, Vector> evaluate_with_gradient(const SteeringProblem& prob,
                                                        const SteeringParams& params,
                                                        const LossWeights& weights) {
  const Index p_count = prob.pair_count();
  const Index frames = prob.frames;
  const Index n = prob.nodes;
  const Index k_basis = prob.dict.k_basis();
  ForwardState st = run_forward(prob, params, weights);

  SteeringParams grad = SteeringParams::zeros(p_count, k_basis);
  if (p_count == 0) return {st.losses, grad.pack()};

  const ConstMatrixMap v = prob.target->values.flat();

  // d(total)/d(U_steer)
  Matrix d_u = (2.0 * weights.lambda_vel / static_cast<double>(frames * n)) * (st.u_steer - v);
  const double dv_scale = 2.0 * weights.lambda_dv / static_cast<double>((frames - 1) * n);
  Matrix diff_prev;  // D_{t-1}
  for (Index t = 0; t < frames; ++t) {
    Matrix diff_cur;
    if (t + 1 < frames) {
      diff_cur = (st.u_steer.middleRows((t + 1) * n, n) - st.u_steer.middleRows(t * n, n)) -
                 (v.middleRows((t + 1) * n, n) - v.middleRows(t * n, n));
    }
    if (t + 1 < frames) d_u.middleRows(t * n, n) -= dv_scale * diff_cur;
    if (t > 0) d_u.middleRows(t * n, n) += dv_scale * diff_prev;
    diff_prev = std::move(diff_cur);
  }

  // Through the decoder, plus the direct magnitude term.
  Matrix d_e = decode_backward(*prob.decoder, st.cache, d_u);
  d_e.noalias() += (2.0 * weights.lambda_mag / static_cast<double>(frames * n * prob.d_emb)) *
                   (st.e_steer - prob.e_base);

  // Into the per-feature value deltas.
  const Matrix d_delta = d_e * prob.directions.transpose();  // (T*N) x 2P

  const double curv_scale =
      2.0 * weights.lambda_phase / static_cast<double>(p_count * (frames - 2));
  for (Index k = 0; k < p_count; ++k) {
    const auto& ctx = prob.pair_ctx[static_cast<std::size_t>(k)];
    const ConstMatrixMap d_field_i(d_delta.col(2 * k).data(), frames, n);
    const ConstMatrixMap d_field_j(d_delta.col(2 * k + 1).data(), frames, n);
    const Matrix d_ci = d_field_i * ctx.phi_i;  // T x r
    const Matrix d_cj = d_field_j * ctx.phi_j;

    Vector d_dphi(frames);
    for (Index t = 0; t < frames; ++t) {
      const double c = std::cos(st.dphi(k, t));
      const double s = std::sin(st.dphi(k, t));
      // d/dphi of the rotation applied to (coeffs_i, coeffs_j).
      const double gi = d_ci.row(t).dot(-s * ctx.coeffs_i.row(t) - c * ctx.coeffs_j.row(t));
      const double gj = d_cj.row(t).dot(c * ctx.coeffs_i.row(t) - s * ctx.coeffs_j.row(t));
      d_dphi(t) = gi + gj;
    }

    // Curvature regularizer acts on the trajectories directly.
    auto second_diff = [&](Index t) {
      return st.dphi(k, t) - 2.0 * st.dphi(k, t + 1) + st.dphi(k, t + 2);
    };
    for (Index t = 0; t < frames; ++t) {
      double acc = 0.0;
      if (t + 2 < frames) acc += second_diff(t);
      if (t >= 1 && t + 1 < frames) acc -= 2.0 * second_diff(t - 1);
      if (t >= 2) acc += second_diff(t - 2);
      d_dphi(t) += curv_scale * acc;
    }

    for (Index t = 0; t < frames; ++t) {
      grad.a(k) += static_cast<double>(t) * d_dphi(t);
      grad.b(k) += d_dphi(t);
    }
    grad.w.row(k) = (prob.dict.B.transpose() * d_dphi).transpose();
  }
  return {st.losses, grad.pack()};
}

ScalarOptimizeResult adam_minimize(
    const Vector& theta0, const OptimizerConfig& cfg,
    const std::function<LossBreakdown(const Vector&, Vector&)>& loss_and_grad) {
  if (!(cfg.beta1 > 0 && cfg.beta1 < 1 && cfg.beta2 > 0 && cfg.beta2 < 1)) {
    throw ConfigError("adam betas must lie in (0, 1)");
  }
  if (!(cfg.learning_rate > 0)) throw ConfigError("learning rate must be positive");

  ScalarOptimizeResult result;
  Vector theta = theta0;
  Vector m = Vector::Zero(theta.size());
  Vector v = Vector::Zero(theta.size());
  Vector grad(theta.size());
  Vector best = theta;
  double best_loss = std::numeric_limits<double>::infinity();

  for (Index iter = 0; iter < cfg.max_iters; ++iter) {
    grad.setZero();
    const LossBreakdown bd = loss_and_grad(theta, grad);
    if (!std::isfinite(bd.total)) {
      result.diagnostic = "non-finite loss at iteration " + std::to_string(iter) +
                          "; returning best-so-far parameters";
      break;
    }
    result.history.push_back(bd);
    if (bd.total < best_loss) {
      best_loss = bd.total;
      best = theta;
    }
    if (grad.lpNorm<Eigen::Infinity>() < cfg.grad_tol) {
      result.converged = true;
      break;
    }
    const double t = static_cast<double>(iter + 1);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad).eval();
    theta.array() -= cfg.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
  }
  result.params = best;
  return result;
}

OptimizeResult optimize(const SteeringProblem& prob, const SteeringParams& init,
                        const OptimizerConfig& cfg, const LossWeights& weights) {
  validate_weights(weights);
  const Index p_count = prob.pair_count();
  const Index k_basis = prob.dict.k_basis();

  auto fn = [&prob, &weights, p_count, k_basis](const Vector& theta,
                                                Vector& grad) -> LossBreakdown {
    const SteeringParams params = SteeringParams::unpack(theta, p_count, k_basis);
    auto [losses, g] = evaluate_with_gradient(prob, params, weights);
    grad = g;
    return losses;
  };

  const ScalarOptimizeResult inner = adam_minimize(init.pack(), cfg, fn);
  OptimizeResult result;
  result.params = SteeringParams::unpack(inner.params, p_count, k_basis);
  result.history = inner.history;
  result.converged = inner.converged;
  result.diagnostic = inner.diagnostic;
  return result;
}

}  // namespace psteer
