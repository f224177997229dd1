#include "psteer/oscillation.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace psteer {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

Index effective_guard(Index length, Index guard) {
  // Keep at least two interior frames.
  const Index max_guard = std::max<Index>(0, (length - 2) / 2);
  return std::min(guard, max_guard);
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return 0.0;
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double wrap_angle(double a) {
  double w = std::remainder(a, kTwoPi);
  if (w <= -kPi) w += kTwoPi;
  return w;
}

Vector node_average(const RepresentationTensor& X, Index f) {
  if (f < 0 || f >= X.features()) throw ShapeError("node_average: feature index out of range");
  const Index frames = X.frames();
  const Index n = X.nodes();
  Vector out(frames);
  for (Index t = 0; t < frames; ++t) {
    out(t) = X.values.frame(t).col(f).mean();
  }
  (void)n;
  return out;
}

std::pair<Vector, Vector> analytic_signal(const Vector& series) {
  const Index n = series.size();
  if (n < 8) throw ShapeError("analytic_signal needs at least 8 samples");

  Vector centered = series.array() - series.mean();

  // Direct DFT; horizons are short enough that O(n^2) is immaterial and the
  // result is bit-reproducible.
  std::vector<std::complex<double>> spectrum(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    const double wk = -kTwoPi * static_cast<double>(k) / static_cast<double>(n);
    for (Index t = 0; t < n; ++t) {
      acc += centered(t) * std::polar(1.0, wk * static_cast<double>(t));
    }
    spectrum[static_cast<std::size_t>(k)] = acc;
  }

  // One-sided spectrum: keep DC (and Nyquist when n is even), double the
  // strictly positive bins, zero the negative bins.
  const Index half = n / 2;
  for (Index k = 1; k < n; ++k) {
    if (n % 2 == 0 && k == half) continue;
    if (k < (n + 1) / 2) {
      spectrum[static_cast<std::size_t>(k)] *= 2.0;
    } else {
      spectrum[static_cast<std::size_t>(k)] = 0.0;
    }
  }

  Vector phase(n), envelope(n);
  for (Index t = 0; t < n; ++t) {
    std::complex<double> acc(0.0, 0.0);
    const double wt = kTwoPi * static_cast<double>(t) / static_cast<double>(n);
    for (Index k = 0; k < n; ++k) {
      acc += spectrum[static_cast<std::size_t>(k)] * std::polar(1.0, wt * static_cast<double>(k));
    }
    acc /= static_cast<double>(n);
    double ph = std::atan2(acc.imag(), acc.real());
    if (ph <= -kPi) ph += kTwoPi;
    phase(t) = ph;
    envelope(t) = std::abs(acc);
  }
  return {std::move(phase), std::move(envelope)};
}

double frequency_proxy(const Vector& phase, Index edge_guard) {
  const Index n = phase.size();
  if (n < 2) throw ShapeError("frequency_proxy needs at least 2 phase samples");
  const Index g = effective_guard(n, edge_guard);
  std::vector<double> increments;
  increments.reserve(static_cast<std::size_t>(n - 1 - 2 * g));
  for (Index t = g; t + 1 <= n - 1 - g; ++t) {
    increments.push_back(std::abs(wrap_angle(phase(t + 1) - phase(t))));
  }
  return median_of(std::move(increments));
}

FeatureSignal make_feature_signal(const RepresentationTensor& X, Index f, Index edge_guard) {
  FeatureSignal sig;
  sig.feature = f;
  sig.series = node_average(X, f);
  auto [phase, envelope] = analytic_signal(sig.series);
  sig.phase = std::move(phase);
  sig.envelope = std::move(envelope);
  sig.omega_hat = frequency_proxy(sig.phase, edge_guard);
  return sig;
}

Vector energy_map(const RepresentationTensor& X, Index f) {
  if (f < 0 || f >= X.features()) throw ShapeError("energy_map: feature index out of range");
  const Index frames = X.frames();
  const Index n = X.nodes();
  Vector out = Vector::Zero(n);
  for (Index t = 0; t < frames; ++t) {
    out.array() += X.values.frame(t).col(f).array().square();
  }
  return out / static_cast<double>(frames);
}

std::vector<OscillatoryPair> filter_pairs(const RepresentationTensor& X,
                                          const PairFilterConfig& cfg) {
  std::vector<FeatureSignal> signals;
  signals.reserve(static_cast<std::size_t>(X.features()));
  for (Index f = 0; f < X.features(); ++f) {
    signals.push_back(make_feature_signal(X, f, cfg.edge_guard));
  }
  return filter_pairs(signals, cfg);
}

std::vector<OscillatoryPair> filter_pairs(const std::vector<FeatureSignal>& signals,
                                          const PairFilterConfig& cfg) {
  const Index d = static_cast<Index>(signals.size());
  if (d < 2) throw ConfigError("pair filtering needs at least 2 features");
  const Index frames = signals.front().series.size();
  const Index g = effective_guard(frames, cfg.edge_guard);
  const Index lo = g, hi = frames - 1 - g;
  const double count = static_cast<double>(hi - lo + 1);

  // Amplitude z-scores over the population of per-feature envelope means.
  Vector env_mean(d);
  for (Index f = 0; f < d; ++f) {
    env_mean(f) = signals[static_cast<std::size_t>(f)].envelope.segment(lo, hi - lo + 1).mean();
  }
  const double mu = env_mean.mean();
  const double sigma = std::sqrt((env_mean.array() - mu).square().mean());
  Vector z = sigma > 0.0 ? Vector(((env_mean.array() - mu) / sigma).matrix())
                         : Vector(Vector::Zero(d));

  std::vector<OscillatoryPair> out;
  for (Index a = 0; a < d; ++a) {
    if (z(a) < cfg.z_amp_min) continue;
    for (Index b = a + 1; b < d; ++b) {
      if (z(b) < cfg.z_amp_min) continue;
      const auto& sa = signals[static_cast<std::size_t>(a)];
      const auto& sb = signals[static_cast<std::size_t>(b)];
      const double omega_max = std::max(sa.omega_hat, sb.omega_hat);
      if (!(std::abs(sa.omega_hat - sb.omega_hat) < cfg.eps_omega_rel * omega_max)) continue;

      std::complex<double> resultant(0.0, 0.0);
      for (Index t = lo; t <= hi; ++t) {
        resultant += std::polar(1.0, sa.phase(t) - sb.phase(t));
      }
      const double coherence = std::abs(resultant) / count;
      if (coherence < cfg.coherence_min) continue;
      double psi = std::atan2(resultant.imag(), resultant.real());

      OscillatoryPair pair;
      if (std::abs(wrap_angle(psi - 0.5 * kPi)) <= cfg.quad_tol) {
        pair.i = sa.feature;
        pair.j = sb.feature;
        pair.mean_phase_diff = psi;
      } else if (std::abs(wrap_angle(psi + 0.5 * kPi)) <= cfg.quad_tol) {
        pair.i = sb.feature;  // orient so i leads j by +pi/2
        pair.j = sa.feature;
        pair.mean_phase_diff = -psi;
      } else {
        continue;
      }
      pair.omega = 0.5 * (sa.omega_hat + sb.omega_hat);
      pair.coherence = coherence;
      pair.amplitude_score = 0.5 * (env_mean(a) + env_mean(b));
      out.push_back(pair);
    }
  }
  std::sort(out.begin(), out.end(), [](const OscillatoryPair& p, const OscillatoryPair& q) {
    return p.i != q.i ? p.i < q.i : p.j < q.j;
  });
  return out;
}

std::vector<OscillatoryPair> rank_pairs(std::vector<OscillatoryPair> candidates,
                                        const RepresentationTensor& X,
                                        const RepresentationMap& map,
                                        const PairFilterConfig& cfg, Index d_emb) {
  if (candidates.empty()) return {};

  for (auto& p : candidates) {
    p.decoder_score = 0.5 * (feature_direction(map, p.i, d_emb).norm() +
                             feature_direction(map, p.j, d_emb).norm());
    const Vector ei = energy_map(X, p.i);
    const Vector ej = energy_map(X, p.j);
    const double denom = ei.norm() * ej.norm();
    p.footprint_score = denom > 0.0 ? std::clamp(ei.dot(ej) / denom, 0.0, 1.0) : 0.0;
  }

  auto min_max = [&candidates](auto getter) {
    double lo = getter(candidates.front()), hi = lo;
    for (const auto& p : candidates) {
      lo = std::min(lo, getter(p));
      hi = std::max(hi, getter(p));
    }
    return std::pair<double, double>(lo, hi);
  };
  auto normalized = [](double v, std::pair<double, double> range) {
    return range.second > range.first ? (v - range.first) / (range.second - range.first) : 1.0;
  };

  const auto coh_r = min_max([](const OscillatoryPair& p) { return p.coherence; });
  const auto amp_r = min_max([](const OscillatoryPair& p) { return p.amplitude_score; });
  const auto dec_r = min_max([](const OscillatoryPair& p) { return p.decoder_score; });
  const auto fp_r = min_max([](const OscillatoryPair& p) { return p.footprint_score; });

  for (auto& p : candidates) {
    const double c = normalized(p.coherence, coh_r);
    const double a = normalized(p.amplitude_score, amp_r);
    const double d = normalized(p.decoder_score, dec_r);
    const double f = normalized(p.footprint_score, fp_r);
    p.rank_score = std::pow(std::max(0.0, c * a * d * f), 0.25);
  }

  std::sort(candidates.begin(), candidates.end(),
            [](const OscillatoryPair& p, const OscillatoryPair& q) {
              if (p.rank_score != q.rank_score) return p.rank_score > q.rank_score;
              return p.i != q.i ? p.i < q.i : p.j < q.j;
            });

  // A feature joins at most one selected pair; overlapping rotations would not
  // commute.
  std::vector<OscillatoryPair> selected;
  std::vector<bool> used(static_cast<std::size_t>(X.features()), false);
  for (const auto& p : candidates) {
    if (static_cast<Index>(selected.size()) >= cfg.top_p) break;
    if (used[static_cast<std::size_t>(p.i)] || used[static_cast<std::size_t>(p.j)]) continue;
    used[static_cast<std::size_t>(p.i)] = true;
    used[static_cast<std::size_t>(p.j)] = true;
    selected.push_back(p);
  }
  return selected;
}

}  // namespace psteer
