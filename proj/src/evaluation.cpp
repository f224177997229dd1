#include "psteer/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include "psteer/oscillation.hpp"

namespace psteer {

Matrix x_component(const VelocitySequence& u) {
  const Index frames = u.frames();
  const Index n = u.nodes();
  Matrix out(frames, n);
  for (Index t = 0; t < frames; ++t) out.row(t) = u.values.frame(t).col(0).transpose();
  return out;
}

namespace {

double masked_mse(const Matrix& a, const Matrix& b, const std::vector<bool>* mask) {
  double acc = 0.0;
  Index count = 0;
  for (Index n = 0; n < a.cols(); ++n) {
    if (mask && !(*mask)[static_cast<std::size_t>(n)]) continue;
    acc += (a.col(n) - b.col(n)).squaredNorm();
    count += a.rows();
  }
  if (count == 0) throw DegenerateInputError("mask selects no nodes");
  return acc / static_cast<double>(count);
}

void check_field_shapes(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("scalar fields have different shapes");
  }
}

}  // namespace

double frac_pct(const Matrix& v_steer, const Matrix& v_orig, const Matrix& v_target,
                const std::vector<bool>* mask) {
  check_field_shapes(v_steer, v_orig);
  check_field_shapes(v_steer, v_target);
  if (mask && static_cast<Index>(mask->size()) != v_steer.cols()) {
    throw ShapeError("mask length != node count");
  }
  const double gap = masked_mse(v_orig, v_target, mask);
  if (gap == 0.0) {
    throw DegenerateInputError(
        "original field equals target on the evaluated nodes; frac%% is undefined");
  }
  return (1.0 - masked_mse(v_steer, v_target, mask) / gap) * 100.0;
}

double nrmse(const Matrix& v_steer, const Matrix& v_target) {
  check_field_shapes(v_steer, v_target);
  const double target_rms = std::sqrt(v_target.squaredNorm() /
                                      static_cast<double>(v_target.size()));
  if (target_rms == 0.0) throw DegenerateInputError("target RMS is zero");
  const double err_rms = std::sqrt((v_steer - v_target).squaredNorm() /
                                   static_cast<double>(v_target.size()));
  return err_rms / target_rms;
}

double corr(const VelocitySequence& a, const VelocitySequence& b) {
  if (!a.values.same_shape(b.values)) throw ShapeError("sequences have different shapes");
  const auto& x = a.values.data();
  const auto& y = b.values.data();
  const double mx = x.mean();
  const double my = y.mean();
  const double sx = (x.array() - mx).matrix().norm();
  const double sy = (y.array() - my).matrix().norm();
  if (sx == 0.0 || sy == 0.0) throw DegenerateInputError("correlation of a constant field");
  return (x.array() - mx).matrix().dot((y.array() - my).matrix()) / (sx * sy);
}

MetricsReport compute_metrics(const VelocitySequence& u_steer, const VelocitySequence& u_orig,
                              const VelocitySequence& u_target, const MeshGeometry& geometry,
                              std::string config_fingerprint) {
  const Matrix vs = x_component(u_steer);
  const Matrix vo = x_component(u_orig);
  const Matrix vt = x_component(u_target);
  if (geometry.nodes() != vs.cols()) throw ShapeError("geometry node count mismatch");

  MetricsReport report;
  report.config_fingerprint = std::move(config_fingerprint);
  report.frac_pct_vx = frac_pct(vs, vo, vt);
  const std::vector<bool> roi = roi_mask(geometry);
  report.roi_pct_vx = frac_pct(vs, vo, vt, &roi);
  report.nrmse_vx = nrmse(vs, vt);
  report.corr_vxvy = corr(u_steer, u_target);

  report.per_node_frac = Vector(vs.cols());
  for (Index n = 0; n < vs.cols(); ++n) {
    const double gap = (vo.col(n) - vt.col(n)).squaredNorm();
    report.per_node_frac(n) =
        gap > 0.0 ? (1.0 - (vs.col(n) - vt.col(n)).squaredNorm() / gap) * 100.0
                  : std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

std::string to_string(StaticKind kind) {
  switch (kind) {
    case StaticKind::kScale: return "SCALE";
    case StaticKind::kAdditive: return "ADDITIVE";
    case StaticKind::kClamp: return "CLAMP";
  }
  throw ConfigError("unknown static intervention kind");
}

StaticKind static_kind_from_string(const std::string& s) {
  if (s == "SCALE") return StaticKind::kScale;
  if (s == "ADDITIVE") return StaticKind::kAdditive;
  if (s == "CLAMP") return StaticKind::kClamp;
  throw ConfigError("unknown static intervention kind '" + s + "'");
}

std::vector<Index> select_static_features(const RepresentationTensor& X,
                                          const RepresentationMap& map, Index max_features) {
  const Index d = X.features();
  const Index frames = X.frames();
  std::vector<std::pair<double, Index>> scored;
  scored.reserve(static_cast<std::size_t>(d));
  for (Index f = 0; f < d; ++f) {
    const Vector series = node_average(X, f);
    const auto [phase, envelope] = analytic_signal(series);
    (void)phase;
    const double amplitude = envelope.mean();

    // Spectral concentration: power fraction of the peak positive-frequency
    // bin and its two neighbors, mean-removed series.
    const Vector centered = series.array() - series.mean();
    const Index n_bins = frames / 2;
    Vector power = Vector::Zero(std::max<Index>(n_bins, 1));
    for (Index k = 1; k <= n_bins; ++k) {
      std::complex<double> acc(0.0, 0.0);
      for (Index t = 0; t < frames; ++t) {
        acc += centered(t) *
               std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) *
                                   static_cast<double>(t) / static_cast<double>(frames));
      }
      power(k - 1) = std::norm(acc);
    }
    const double total_power = power.sum();
    double concentration = 0.0;
    if (total_power > 0.0) {
      Index peak = 0;
      power.maxCoeff(&peak);
      double local = power(peak);
      if (peak > 0) local += power(peak - 1);
      if (peak + 1 < power.size()) local += power(peak + 1);
      concentration = local / total_power;
    }
    scored.emplace_back(amplitude * concentration, f);
  }
  const Index d_emb = map.kind == MapKind::kIdentity ? X.features()
                      : map.kind == MapKind::kPca    ? map.pca.input_width()
                                                     : map.sae.input_width();
  for (auto& [score, f] : scored) {
    score *= feature_direction(map, f, d_emb).norm();  // decoder gain
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<Index> out;
  for (Index k = 0; k < std::min<Index>(max_features, d); ++k) {
    out.push_back(scored[static_cast<std::size_t>(k)].second);
  }
  return out;
}

RepresentationTensor apply_static(const RepresentationTensor& X,
                                  const StaticIntervention& intervention) {
  if (static_cast<Index>(intervention.features.size()) != intervention.values.size()) {
    throw ShapeError("static intervention features/values length mismatch");
  }
  RepresentationTensor out = make_representation_tensor(X.values, X.map_kind, false);
  for (std::size_t k = 0; k < intervention.features.size(); ++k) {
    const Index f = intervention.features[k];
    if (f < 0 || f >= X.features()) throw ShapeError("static intervention feature out of range");
    const double value = intervention.values(static_cast<Index>(k));
    for (Index t = 0; t < X.frames(); ++t) {
      auto column = out.values.frame(t).col(f);
      switch (intervention.kind) {
        case StaticKind::kScale: column *= value; break;
        case StaticKind::kAdditive: column.array() += value; break;
        case StaticKind::kClamp: column.setConstant(value); break;
      }
    }
  }
  return out;
}

StaticProblem make_static_problem(StaticKind kind, const RepresentationTensor& X,
                                  const std::vector<Index>& features,
                                  const RepresentationMap& map, const FrozenDecoder& decoder,
                                  const VelocitySequence& target) {
  const Index frames = X.frames();
  const Index n = X.nodes();
  const Index n_feat = static_cast<Index>(features.size());
  if (n_feat == 0) throw ConfigError("static intervention needs at least one feature");

  StaticProblem prob;
  prob.kind = kind;
  prob.features = features;
  prob.decoder = &decoder;
  prob.frames = frames;
  prob.nodes = n;

  const EmbeddingSequence e_base_seq = inverse(map, X);
  prob.d_emb = e_base_seq.width();
  prob.e_base = e_base_seq.values.flat();
  prob.target_flat = target.values.flat();
  if (prob.target_flat.rows() != frames * n) throw ShapeError("target shape mismatch");

  prob.directions = Matrix(n_feat, prob.d_emb);
  prob.base_fields = Matrix(frames * n, n_feat);
  for (Index k = 0; k < n_feat; ++k) {
    prob.directions.row(k) =
        feature_direction(map, features[static_cast<std::size_t>(k)], prob.d_emb).transpose();
    const RowMatrix field = feature_field(X, features[static_cast<std::size_t>(k)]);
    prob.base_fields.col(k) = Eigen::Map<const Vector>(field.data(), frames * n);
  }
  return prob;
}

Vector static_init(const StaticProblem& prob) {
  const Index n_feat = static_cast<Index>(prob.features.size());
  Vector theta0(n_feat);
  switch (prob.kind) {
    case StaticKind::kScale: theta0.setOnes(); break;
    case StaticKind::kAdditive: theta0.setZero(); break;
    case StaticKind::kClamp:
      for (Index k = 0; k < n_feat; ++k) theta0(k) = prob.base_fields.col(k).mean();
      break;
  }
  return theta0;
}

LossBreakdown static_loss_and_grad(const StaticProblem& prob, const LossWeights& weights,
                                   const Vector& theta, Vector* grad) {
  const Index frames = prob.frames;
  const Index n = prob.nodes;
  const Index n_feat = static_cast<Index>(prob.features.size());
  if (theta.size() != n_feat) throw ShapeError("static theta length mismatch");

  Matrix delta(frames * n, n_feat);
  for (Index k = 0; k < n_feat; ++k) {
    switch (prob.kind) {
      case StaticKind::kScale:
        delta.col(k) = (theta(k) - 1.0) * prob.base_fields.col(k);
        break;
      case StaticKind::kAdditive:
        delta.col(k).setConstant(theta(k));
        break;
      case StaticKind::kClamp:
        delta.col(k) = Vector::Constant(frames * n, theta(k)) - prob.base_fields.col(k);
        break;
    }
  }
  const Matrix e_steer = prob.e_base + delta * prob.directions;
  DecoderCache cache;
  const Matrix u = decode_with_cache(*prob.decoder, e_steer, cache);
  const Matrix& v = prob.target_flat;

  LossBreakdown bd;
  bd.vel = (u - v).squaredNorm() / static_cast<double>(frames * n);
  double dv_acc = 0.0;
  for (Index t = 0; t + 1 < frames; ++t) {
    dv_acc += ((u.middleRows((t + 1) * n, n) - u.middleRows(t * n, n)) -
               (v.middleRows((t + 1) * n, n) - v.middleRows(t * n, n)))
                  .squaredNorm();
  }
  bd.dv = dv_acc / static_cast<double>((frames - 1) * n);
  bd.mag = (e_steer - prob.e_base).squaredNorm() / static_cast<double>(frames * n * prob.d_emb);
  bd.total = weights.lambda_vel * bd.vel + weights.lambda_dv * bd.dv +
             weights.lambda_mag * bd.mag;
  if (!grad) return bd;

  Matrix d_u = (2.0 * weights.lambda_vel / static_cast<double>(frames * n)) * (u - v);
  const double dv_scale = 2.0 * weights.lambda_dv / static_cast<double>((frames - 1) * n);
  Matrix diff_prev;
  for (Index t = 0; t < frames; ++t) {
    Matrix diff_cur;
    if (t + 1 < frames) {
      diff_cur = (u.middleRows((t + 1) * n, n) - u.middleRows(t * n, n)) -
                 (v.middleRows((t + 1) * n, n) - v.middleRows(t * n, n));
    }
    if (t + 1 < frames) d_u.middleRows(t * n, n) -= dv_scale * diff_cur;
    if (t > 0) d_u.middleRows(t * n, n) += dv_scale * diff_prev;
    diff_prev = std::move(diff_cur);
  }
  Matrix d_e = decode_backward(*prob.decoder, cache, d_u);
  d_e.noalias() += (2.0 * weights.lambda_mag / static_cast<double>(frames * n * prob.d_emb)) *
                   (e_steer - prob.e_base);
  const Matrix d_delta = d_e * prob.directions.transpose();
  for (Index k = 0; k < n_feat; ++k) {
    switch (prob.kind) {
      case StaticKind::kScale: (*grad)(k) = d_delta.col(k).dot(prob.base_fields.col(k)); break;
      case StaticKind::kAdditive: (*grad)(k) = d_delta.col(k).sum(); break;
      case StaticKind::kClamp: (*grad)(k) = d_delta.col(k).sum(); break;
    }
  }
  return bd;
}

StaticOptimizeResult optimize_static(StaticKind kind, const RepresentationTensor& X,
                                     const std::vector<Index>& features,
                                     const RepresentationMap& map,
                                     const FrozenDecoder& decoder,
                                     const VelocitySequence& target,
                                     const OptimizerConfig& cfg, const LossWeights& weights) {
  validate_weights(weights);
  const StaticProblem prob = make_static_problem(kind, X, features, map, decoder, target);
  auto fn = [&prob, &weights](const Vector& theta, Vector& grad) -> LossBreakdown {
    return static_loss_and_grad(prob, weights, theta, &grad);
  };
  const ScalarOptimizeResult inner = adam_minimize(static_init(prob), cfg, fn);
  StaticOptimizeResult result;
  result.intervention = StaticIntervention{kind, features, inner.params};
  result.history = inner.history;
  result.converged = inner.converged;
  result.diagnostic = inner.diagnostic;
  return result;
}

}  // namespace psteer
