#pragma once

#include <cstdint>
#include <filesystem>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "psteer/surrogate.hpp"
#include "psteer/tensor.hpp"

namespace psteer {

enum class MixingKind { kOrthonormal, kRandomDense };

std::string to_string(MixingKind kind);
MixingKind mixing_kind_from_string(const std::string& s);

// Desk-scale dataset with planted quadrature oscillations: latent cos/sin
// pairs on localized spatial footprints, slow-drift distractors, a fixed
// mixing into embedding space, and a linear decoder dominated by the planted
// pairs inside the ROI.
struct SynthConfig {
  Index n_nodes = 400;  // grid budget; nodes inside the obstacle are dropped
  Index horizon = 120;  // H
  Index d_emb = 32;
  Index n_pairs_true = 3;
  Index n_distractors = 10;
  std::vector<double> frequencies = {0.17453292519943295, 0.23271056693257725,
                                     0.3141592653589793};  // rad/frame
  std::vector<double> amplitudes = {1.0, 0.7, 0.5};
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;
  MixingKind mixing = MixingKind::kOrthonormal;
  long l_target = 8;

  Index latent_width() const { return 2 * n_pairs_true + n_distractors; }
};

struct SynthDataset {
  SynthConfig cfg;
  EmbeddingSequence embeddings;
  FrozenDecoder decoder;
  MeshGeometry geometry;
  std::vector<std::tuple<Index, Index, double>> true_pairs;  // (i, j, omega) in latent space
  Tensor true_latents;  // (H+1) x N x D_true

  // Analytic generator state; lets any frame index be re-synthesized exactly.
  Matrix mixing_matrix;          // D_true x d_emb
  Vector pair_phases;            // n_pairs
  Matrix pair_footprints;        // N x n_pairs
  Matrix distractor_footprints;  // N x n_distractors
  Matrix distractor_poly;        // n_distractors x 3, coefficients on tau = t/H
  Matrix distractor_wave_amp;    // n_distractors x n_waves
  Matrix distractor_wave_freq;
  Matrix distractor_wave_phase;
};

SynthDataset generate(const SynthConfig& cfg);

// Latent feature values at an arbitrary (fractional) frame index.
Matrix latents_at(const SynthDataset& ds, double t);

// Embeddings at an arbitrary integer frame; noise is keyed by frame index so
// regenerated frames match the stored sequence exactly.
Matrix embeddings_at(const SynthDataset& ds, long t);

// Decode of the embedding sequence re-synthesized at t + l_target; frames
// beyond the horizon come from the analytic latent process.
VelocitySequence shifted_target(const SynthDataset& ds, long l_target);

// Dataset directory layout shared with file-backed datasets:
//   dataset.json, embeddings.pst, positions.pst, geometry.json,
//   decoder.json (+ weight files), target.pst, truth.json
void save_dataset(const std::filesystem::path& dir, const SynthDataset& ds);

struct LoadedDataset {
  EmbeddingSequence embeddings;
  FrozenDecoder decoder;
  MeshGeometry geometry;
  VelocitySequence target;
  nlohmann::json truth;  // ground-truth manifest when present
};

LoadedDataset load_dataset(const std::filesystem::path& dir);

MeshGeometry load_geometry(const std::filesystem::path& geometry_json);

}  // namespace psteer
