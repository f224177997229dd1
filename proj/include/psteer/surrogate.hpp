#pragma once

#include <filesystem>
#include <vector>

#include "psteer/tensor.hpp"

namespace psteer {

enum class Activation { kNone, kRelu };

struct DecoderLayer {
  Matrix weight;  // in x out
  Vector bias;    // out
  Activation act = Activation::kNone;
};

// Frozen readout head of the surrogate: maps node embeddings to per-node
// state predictions. Weights are immutable after load.
struct FrozenDecoder {
  enum class Kind { kLinear, kMlp };

  Kind kind = Kind::kLinear;
  std::vector<DecoderLayer> layers;

  Index input_width() const { return layers.front().weight.rows(); }
  Index output_width() const { return layers.back().weight.cols(); }
};

FrozenDecoder make_decoder(FrozenDecoder::Kind kind, std::vector<DecoderLayer> layers);

// Applies the layer chain independently per node (rows of emb).
Matrix decode_frame(const FrozenDecoder& dec, const Matrix& emb);

// Per-frame application over the horizon; no autoregressive feedback.
VelocitySequence decode_sequence(const FrozenDecoder& dec, const EmbeddingSequence& embs);

// Decoder manifest: JSON file with kind/d_emb/d and a layer list referencing
// PST1 weight and bias files (paths relative to the manifest).
void save_decoder(const std::filesystem::path& dir, const FrozenDecoder& dec);
FrozenDecoder load_decoder(const std::filesystem::path& manifest_path);

}  // namespace psteer
