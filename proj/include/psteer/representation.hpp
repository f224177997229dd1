#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>

#include "psteer/tensor.hpp"

namespace psteer {

// Overcomplete ReLU autoencoder trained with an L1 code penalty. The encoder
// pre-centers by the decoder bias; decoder rows are kept at unit l2 norm.
struct SaeModel {
  Matrix W_enc;  // d_emb x d_hid
  Vector b_enc;  // d_hid
  Matrix W_dec;  // d_hid x d_emb
  Vector b_dec;  // d_emb
  Index kappa = 0;
  double lambda_sparsity = 0.0;

  Index input_width() const { return W_enc.rows(); }
  Index hidden_width() const { return W_enc.cols(); }
};

struct PcaModel {
  Vector mean;                 // d_emb
  Matrix components;           // d_emb x D_pca, orthonormal columns
  Vector explained_variance;   // D_pca, non-increasing

  Index input_width() const { return components.rows(); }
  Index output_width() const { return components.cols(); }
};

// Fixed representation map g with inverse. Identity carries no state.
struct RepresentationMap {
  MapKind kind = MapKind::kIdentity;
  SaeModel sae;  // valid iff kind == kSae
  PcaModel pca;  // valid iff kind == kPca

  static RepresentationMap identity() { return RepresentationMap{}; }
  static RepresentationMap from_sae(SaeModel m);
  static RepresentationMap from_pca(PcaModel m);

  // Representation width for a given embedding width.
  Index output_width(Index d_emb) const;
};

// Row-wise over samples: z = relu((h - b_dec) W_enc + b_enc).
Matrix sae_encode(const SaeModel& m, const Matrix& h);

// Row-wise affine reconstruction: h_hat = z W_dec + b_dec.
Matrix sae_decode(const SaeModel& m, const Matrix& z);

struct SaeTrainConfig {
  Index kappa = 8;
  double lambda = 3e-4;
  double lr = 1e-3;
  Index batch = 128;
  Index max_epochs = 200;
  Index patience = 5;
  std::uint64_t seed = 0;
  double holdout_frac = 0.1;
  // Invoked after every optimizer step (tests hook invariants here).
  std::function<void(const SaeModel&, long step)> step_callback;
};

// Adam on the reconstruction + L1 objective, decoder rows renormalized after
// each step, early stop on held-out reconstruction loss. Deterministic in
// (samples, cfg); returns the best-validation snapshot.
SaeModel sae_train(const Matrix& samples, const SaeTrainConfig& cfg);

// Mean reconstruction relative error over rows: ||h_hat - h|| / ||h||.
double sae_validation_error(const SaeModel& m, const Matrix& samples);

// Fraction of code entries exactly equal to 0.0.
double sae_zero_fraction(const SaeModel& m, const Matrix& samples);

// Mean-centered principal directions; component sign fixed so the
// largest-magnitude entry is positive.
PcaModel pca_fit(const Matrix& samples, Index d_pca);

RepresentationTensor forward(const RepresentationMap& map, const EmbeddingSequence& embs);
EmbeddingSequence inverse(const RepresentationMap& map, const RepresentationTensor& X,
                          long t0 = 0, double dt = 1.0);

// Contribution direction of representation feature f in embedding space:
// SAE decoder row, PCA component column, or a canonical basis vector.
Vector feature_direction(const RepresentationMap& map, Index f, Index d_emb);

void save_map(const std::filesystem::path& dir, const RepresentationMap& map);
RepresentationMap load_map(const std::filesystem::path& dir);

}  // namespace psteer
