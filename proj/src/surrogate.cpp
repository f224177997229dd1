#include "psteer/surrogate.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "psteer/tensor_io.hpp"

namespace psteer {

using nlohmann::json;

namespace {

std::string act_name(Activation a) {
  return a == Activation::kRelu ? "RELU" : "NONE";
}

Activation act_from_name(const std::string& s) {
  if (s == "RELU") return Activation::kRelu;
  if (s == "NONE") return Activation::kNone;
  throw ConfigError("unknown activation '" + s + "'");
}

}  // namespace

FrozenDecoder make_decoder(FrozenDecoder::Kind kind, std::vector<DecoderLayer> layers) {
  if (layers.empty()) throw ConfigError("decoder needs at least one layer");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.bias.size() != l.weight.cols()) {
      throw ShapeError("decoder layer " + std::to_string(i) + ": bias length != weight cols");
    }
    if (i > 0 && layers[i - 1].weight.cols() != l.weight.rows()) {
      throw ShapeError("decoder layer " + std::to_string(i) + " does not chain from layer " +
                       std::to_string(i - 1));
    }
  }
  if (kind == FrozenDecoder::Kind::kLinear &&
      (layers.size() != 1 || layers[0].act != Activation::kNone)) {
    throw ConfigError("LINEAR decoder must be a single activation-free layer");
  }
  return FrozenDecoder{kind, std::move(layers)};
}

Matrix decode_frame(const FrozenDecoder& dec, const Matrix& emb) {
  if (emb.cols() != dec.input_width()) {
    throw ShapeError("decode_frame: embedding width " + std::to_string(emb.cols()) +
                     " != decoder input width " + std::to_string(dec.input_width()));
  }
  Matrix x = emb;
  for (const auto& l : dec.layers) {
    Matrix y = x * l.weight;
    y.rowwise() += l.bias.transpose();
    if (l.act == Activation::kRelu) y = y.cwiseMax(0.0);
    x = std::move(y);
  }
  return x;
}

VelocitySequence decode_sequence(const FrozenDecoder& dec, const EmbeddingSequence& embs) {
  const Index frames = embs.frames();
  const Index n = embs.nodes();
  const Index d = dec.output_width();
  Tensor out({frames, n, d});
  // The layer chain is node-wise, so all frames decode as one stacked matrix.
  Matrix decoded = decode_frame(dec, embs.values.flat());
  out.flat() = decoded;
  return make_velocity_sequence(std::move(out));
}

void save_decoder(const std::filesystem::path& dir, const FrozenDecoder& dec) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["kind"] = dec.kind == FrozenDecoder::Kind::kLinear ? "LINEAR" : "MLP";
  manifest["d_emb"] = dec.input_width();
  manifest["d"] = dec.output_width();
  manifest["layers"] = json::array();
  for (std::size_t i = 0; i < dec.layers.size(); ++i) {
    const auto& l = dec.layers[i];
    const std::string wname = "decoder_w" + std::to_string(i) + ".pst";
    const std::string bname = "decoder_b" + std::to_string(i) + ".pst";
    Tensor w({l.weight.rows(), l.weight.cols()});
    MatrixMap(w.data().data(), l.weight.rows(), l.weight.cols()) = l.weight;
    write_tensor(dir / wname, w);
    Tensor b({l.bias.size()}, l.bias);
    write_tensor(dir / bname, b);
    manifest["layers"].push_back({{"rows", l.weight.rows()},
                                  {"cols", l.weight.cols()},
                                  {"activation", act_name(l.act)},
                                  {"weight_file", wname},
                                  {"bias_file", bname}});
  }
  std::ofstream out(dir / "decoder.json");
  if (!out) throw IoError((dir / "decoder.json").string() + ": cannot open for writing");
  out << manifest.dump(2) << "\n";
}

FrozenDecoder load_decoder(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError(manifest_path.string() + ": cannot open decoder manifest");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw IoError(manifest_path.string() + ": bad JSON: " + e.what());
  }
  const auto base = manifest_path.parent_path();
  std::vector<DecoderLayer> layers;
  for (const auto& jl : manifest.at("layers")) {
    DecoderLayer l;
    const Tensor w = read_tensor(base / jl.at("weight_file").get<std::string>());
    if (w.rank() != 2) throw IoError("decoder weight file is not rank 2");
    l.weight = w.matrix();
    const Tensor b = read_tensor(base / jl.at("bias_file").get<std::string>());
    if (b.rank() != 1) throw IoError("decoder bias file is not rank 1");
    l.bias = b.data();
    if (w.dim(0) != jl.at("rows").get<Index>() || w.dim(1) != jl.at("cols").get<Index>()) {
      throw IoError("decoder layer shape disagrees with manifest");
    }
    l.act = act_from_name(jl.at("activation").get<std::string>());
    layers.push_back(std::move(l));
  }
  const std::string kind = manifest.at("kind").get<std::string>();
  FrozenDecoder dec = make_decoder(
      kind == "LINEAR" ? FrozenDecoder::Kind::kLinear : FrozenDecoder::Kind::kMlp,
      std::move(layers));
  if (dec.input_width() != manifest.at("d_emb").get<Index>() ||
      dec.output_width() != manifest.at("d").get<Index>()) {
    throw IoError("decoder manifest widths disagree with layer shapes");
  }
  return dec;
}

}  // namespace psteer
