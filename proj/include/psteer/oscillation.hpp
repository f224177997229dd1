#pragma once

#include <vector>

#include "psteer/representation.hpp"
#include "psteer/tensor.hpp"

namespace psteer {

// Node-averaged activation trace of one feature with its Hilbert analysis.
struct FeatureSignal {
  Index feature = -1;
  Vector series;     // (H+1), node-averaged
  Vector phase;      // (H+1), instantaneous phase in (-pi, pi]
  Vector envelope;   // (H+1), analytic-signal magnitude
  double omega_hat = 0.0;  // median |wrapped phase increment| per frame
};

// A ranked near-quadrature feature pair, oriented so i leads j by +pi/2.
struct OscillatoryPair {
  Index i = -1;
  Index j = -1;
  double omega = 0.0;
  double coherence = 0.0;
  double mean_phase_diff = 0.0;
  double amplitude_score = 0.0;
  double decoder_score = 0.0;
  double footprint_score = 0.0;
  double rank_score = 0.0;
};

struct PairFilterConfig {
  double z_amp_min = 2.0;
  double eps_omega_rel = 0.10;
  double quad_tol = 0.39269908169872414;  // pi/8
  double coherence_min = 0.6;
  Index edge_guard = 5;
  Index top_p = 4;
};

// Wrap an angle into (-pi, pi].
double wrap_angle(double a);

Vector node_average(const RepresentationTensor& X, Index f);

// Discrete analytic signal of a series: temporal mean removed, one-sided
// spectrum via DFT (zero negative bins, double strictly positive bins, keep
// DC and Nyquist). Returns (phase, envelope).
std::pair<Vector, Vector> analytic_signal(const Vector& series);

double frequency_proxy(const Vector& phase, Index edge_guard = 5);

FeatureSignal make_feature_signal(const RepresentationTensor& X, Index f, Index edge_guard = 5);

// Per-node mean squared activation of a feature over the horizon.
Vector energy_map(const RepresentationTensor& X, Index f);

// All (i, j) passing the amplitude, frequency-similarity, and quadrature
// filters plus the coherence floor; sorted by (i, j). Scores other than
// coherence/amplitude are filled by rank_pairs.
std::vector<OscillatoryPair> filter_pairs(const RepresentationTensor& X,
                                          const PairFilterConfig& cfg);
std::vector<OscillatoryPair> filter_pairs(const std::vector<FeatureSignal>& signals,
                                          const PairFilterConfig& cfg);

// Score candidates on coherence, amplitude, decoder strength, and footprint
// overlap; rank by the geometric mean of the min-max-normalized scores.
// A feature appears in at most one returned pair; at most top_p pairs.
std::vector<OscillatoryPair> rank_pairs(std::vector<OscillatoryPair> candidates,
                                        const RepresentationTensor& X,
                                        const RepresentationMap& map,
                                        const PairFilterConfig& cfg,
                                        Index d_emb);

}  // namespace psteer
