#include "psteer/synthgen.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "psteer/rng.hpp"
#include "psteer/tensor_io.hpp"

namespace psteer {

using nlohmann::json;

namespace {

constexpr double kDomainX = 1.6;
constexpr double kDomainY = 0.41;
constexpr Index kDistractorWaves = 3;

void validate_config(const SynthConfig& cfg) {
  if (cfg.n_nodes < 4) throw ConfigError("synth n_nodes too small");
  if (cfg.horizon < 2) throw ConfigError("synth horizon must be >= 2");
  if (cfg.n_pairs_true < 0 || cfg.n_distractors < 0) {
    throw ConfigError("synth pair/distractor counts must be >= 0");
  }
  if (cfg.latent_width() > cfg.d_emb) {
    throw ConfigError("2*n_pairs_true + n_distractors must be <= d_emb (mixing must be injective)");
  }
  if (cfg.latent_width() < 1) throw ConfigError("synth needs at least one latent feature");
  if (static_cast<Index>(cfg.frequencies.size()) != cfg.n_pairs_true ||
      static_cast<Index>(cfg.amplitudes.size()) != cfg.n_pairs_true) {
    throw ConfigError("frequencies/amplitudes must list one entry per planted pair");
  }
  for (double w : cfg.frequencies) {
    if (!(w > 0.0 && w < std::numbers::pi)) {
      throw ConfigError("planted frequencies must lie in (0, pi) rad/frame");
    }
  }
  if (cfg.noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
}

MeshGeometry make_grid_geometry(const SynthConfig& cfg) {
  MeshGeometry geom;
  geom.roi = RoiRect{0.4, 1.4, 0.10, 0.31};
  geom.obstacle_center = Eigen::Vector2d(0.2, 0.205);
  geom.obstacle_radius = 0.05;

  const Index nx = static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(cfg.n_nodes))));
  const Index ny = static_cast<Index>(std::ceil(static_cast<double>(cfg.n_nodes) /
                                                static_cast<double>(nx)));
  std::vector<Eigen::Vector2d> kept;
  Index emitted = 0;
  for (Index j = 0; j < ny && emitted < cfg.n_nodes; ++j) {
    for (Index i = 0; i < nx && emitted < cfg.n_nodes; ++i) {
      ++emitted;
      const double x = kDomainX * static_cast<double>(i) / static_cast<double>(nx - 1);
      const double y = kDomainY * static_cast<double>(j) / static_cast<double>(ny - 1);
      const Eigen::Vector2d p(x, y);
      if ((p - geom.obstacle_center).norm() < geom.obstacle_radius) continue;
      kept.push_back(p);
    }
  }
  geom.positions = Matrix(static_cast<Index>(kept.size()), 2);
  for (Index i = 0; i < geom.positions.rows(); ++i) {
    geom.positions.row(i) = kept[static_cast<std::size_t>(i)].transpose();
  }
  validate_geometry(geom);
  return geom;
}

Vector gaussian_bump(const Matrix& positions, double cx, double cy, double sx, double sy) {
  Vector out(positions.rows());
  for (Index n = 0; n < positions.rows(); ++n) {
    const double dx = positions(n, 0) - cx;
    const double dy = positions(n, 1) - cy;
    out(n) = std::exp(-0.5 * (dx * dx / (sx * sx) + dy * dy / (sy * sy)));
  }
  return out;
}

}  // namespace

std::string to_string(MixingKind kind) {
  return kind == MixingKind::kOrthonormal ? "ORTHONORMAL" : "RANDOM_DENSE";
}

MixingKind mixing_kind_from_string(const std::string& s) {
  if (s == "ORTHONORMAL") return MixingKind::kOrthonormal;
  if (s == "RANDOM_DENSE") return MixingKind::kRandomDense;
  throw ConfigError("unknown mixing kind '" + s + "'");
}

SynthDataset generate(const SynthConfig& cfg) {
  validate_config(cfg);
  Rng rng(cfg.seed);

  SynthDataset ds;
  ds.cfg = cfg;
  ds.geometry = make_grid_geometry(cfg);
  const Index n = ds.geometry.nodes();
  const Index d_true = cfg.latent_width();
  const Index frames = cfg.horizon + 1;

  // Planted pairs: spatially localized bumps spread across the ROI.
  ds.pair_phases = Vector(cfg.n_pairs_true);
  ds.pair_footprints = Matrix(n, cfg.n_pairs_true);
  const RoiRect roi = ds.geometry.roi;
  for (Index m = 0; m < cfg.n_pairs_true; ++m) {
    const double frac = cfg.n_pairs_true > 1
                            ? static_cast<double>(m) / static_cast<double>(cfg.n_pairs_true - 1)
                            : 0.5;
    const double cx = roi.x_min + (0.15 + 0.7 * frac) * (roi.x_max - roi.x_min);
    const double cy = 0.5 * (roi.y_min + roi.y_max);
    ds.pair_footprints.col(m) = gaussian_bump(ds.geometry.positions, cx, cy, 0.12, 0.055);
    ds.pair_phases(m) = rng.uniform(0.0, 2.0 * std::numbers::pi);
    ds.true_pairs.emplace_back(2 * m, 2 * m + 1, cfg.frequencies[static_cast<std::size_t>(m)]);
  }

  // Distractors: slow polynomial drifts plus band-limited low-frequency waves,
  // kept well below the planted bands so frequency filtering stays selective.
  ds.distractor_footprints = Matrix(n, cfg.n_distractors);
  ds.distractor_poly = Matrix(cfg.n_distractors, 3);
  ds.distractor_wave_amp = Matrix(cfg.n_distractors, kDistractorWaves);
  ds.distractor_wave_freq = Matrix(cfg.n_distractors, kDistractorWaves);
  ds.distractor_wave_phase = Matrix(cfg.n_distractors, kDistractorWaves);
  double min_planted = std::numbers::pi;
  for (double w : cfg.frequencies) min_planted = std::min(min_planted, w);
  const double drift_band = cfg.n_pairs_true > 0 ? 0.3 * min_planted : 0.05;
  for (Index q = 0; q < cfg.n_distractors; ++q) {
    const double cx = rng.uniform(0.1, kDomainX - 0.1);
    const double cy = rng.uniform(0.05, kDomainY - 0.05);
    // Zero spatial mean: distractors are local fluctuations that node
    // averaging cancels, unlike the one-signed planted bumps.
    Vector bump = gaussian_bump(ds.geometry.positions, cx, cy, 0.18, 0.18);
    ds.distractor_footprints.col(q) = bump.array() - bump.mean();
    ds.distractor_poly(q, 0) = rng.uniform(-0.3, 0.3);
    ds.distractor_poly(q, 1) = rng.uniform(-0.6, 0.6);
    ds.distractor_poly(q, 2) = rng.uniform(-0.6, 0.6);
    for (Index wv = 0; wv < kDistractorWaves; ++wv) {
      ds.distractor_wave_amp(q, wv) = rng.uniform(-0.2, 0.2);
      ds.distractor_wave_freq(q, wv) = rng.uniform(0.2 * drift_band, drift_band);
      ds.distractor_wave_phase(q, wv) = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
  }

  // Mixing into embedding space.
  if (cfg.mixing == MixingKind::kOrthonormal) {
    ds.mixing_matrix = Matrix::Zero(d_true, cfg.d_emb);
    ds.mixing_matrix.leftCols(d_true) = Matrix::Identity(d_true, d_true);
  } else {
    for (int attempt = 0;; ++attempt) {
      Matrix w = Matrix::NullaryExpr(d_true, cfg.d_emb,
                                     [&rng](Index, Index) { return rng.normal(); });
      for (Index f = 0; f < d_true; ++f) w.row(f).normalize();
      Eigen::JacobiSVD<Matrix> svd(w);
      if (svd.singularValues()(d_true - 1) > 1e-3) {
        ds.mixing_matrix = std::move(w);
        break;
      }
      if (attempt > 32) throw NumericError("could not draw an injective dense mixing");
    }
  }

  // Linear decoder: pseudo-inverse of the mixing composed with a readout that
  // weights planted pairs strongly and distractors weakly.
  Matrix readout = Matrix::Zero(d_true, 2);
  for (Index m = 0; m < cfg.n_pairs_true; ++m) {
    readout(2 * m, 0) = 1.0;
    readout(2 * m + 1, 1) = 1.0;
  }
  for (Index q = 0; q < cfg.n_distractors; ++q) {
    readout(2 * cfg.n_pairs_true + q, q % 2) = 0.15;
  }
  const Matrix gram = ds.mixing_matrix * ds.mixing_matrix.transpose();
  const Matrix weight =
      ds.mixing_matrix.transpose() * gram.ldlt().solve(readout);  // d_emb x 2
  Vector bias(2);
  bias << 0.8, 0.0;
  ds.decoder = make_decoder(FrozenDecoder::Kind::kLinear,
                            {DecoderLayer{weight, bias, Activation::kNone}});

  // Tabulate latents and embeddings over the horizon.
  ds.true_latents = Tensor({frames, n, d_true});
  Tensor emb({frames, n, cfg.d_emb});
  for (Index t = 0; t < frames; ++t) {
    ds.true_latents.frame(t) = latents_at(ds, static_cast<double>(t));
    emb.frame(t) = embeddings_at(ds, static_cast<long>(t));
  }
  ds.embeddings = make_embedding_sequence(std::move(emb), 0, 1.0);

  if (cfg.mixing == MixingKind::kRandomDense) {
    // Entanglement check: every embedding coordinate loads on most latents.
    for (Index c = 0; c < cfg.d_emb; ++c) {
      const auto loaded = (ds.mixing_matrix.col(c).array().abs() > 1e-8).count();
      if (static_cast<double>(loaded) < 0.8 * static_cast<double>(d_true)) {
        throw NumericError("dense mixing column " + std::to_string(c) +
                           " is insufficiently entangled");
      }
    }
  }
  return ds;
}

Matrix latents_at(const SynthDataset& ds, double t) {
  const SynthConfig& cfg = ds.cfg;
  const Index n = ds.geometry.nodes();
  Matrix out = Matrix::Zero(n, cfg.latent_width());
  for (Index m = 0; m < cfg.n_pairs_true; ++m) {
    const double theta = cfg.frequencies[static_cast<std::size_t>(m)] * t + ds.pair_phases(m);
    const double amp = cfg.amplitudes[static_cast<std::size_t>(m)];
    out.col(2 * m) = amp * std::cos(theta) * ds.pair_footprints.col(m);
    out.col(2 * m + 1) = amp * std::sin(theta) * ds.pair_footprints.col(m);
  }
  const double tau = t / static_cast<double>(cfg.horizon);
  for (Index q = 0; q < cfg.n_distractors; ++q) {
    double value = ds.distractor_poly(q, 0) + ds.distractor_poly(q, 1) * tau +
                   ds.distractor_poly(q, 2) * tau * tau;
    for (Index wv = 0; wv < kDistractorWaves; ++wv) {
      value += ds.distractor_wave_amp(q, wv) *
               std::cos(ds.distractor_wave_freq(q, wv) * t + ds.distractor_wave_phase(q, wv));
    }
    out.col(2 * cfg.n_pairs_true + q) = value * ds.distractor_footprints.col(q);
  }
  return out;
}

Matrix embeddings_at(const SynthDataset& ds, long t) {
  const SynthConfig& cfg = ds.cfg;
  Matrix emb = latents_at(ds, static_cast<double>(t)) * ds.mixing_matrix;
  if (cfg.noise_sigma > 0.0) {
    const auto tt = static_cast<std::uint64_t>(t);
    for (Index node = 0; node < emb.rows(); ++node) {
      for (Index c = 0; c < emb.cols(); ++c) {
        emb(node, c) += cfg.noise_sigma *
                        gaussian_at(cfg.seed, tt, static_cast<std::uint64_t>(node),
                                    static_cast<std::uint64_t>(c));
      }
    }
  }
  return emb;
}

VelocitySequence shifted_target(const SynthDataset& ds, long l_target) {
  const Index frames = ds.cfg.horizon + 1;
  if (2 * std::labs(l_target) >= ds.cfg.horizon) {
    throw ConfigError("|l_target| must be < H/2");
  }
  Tensor out({frames, ds.geometry.nodes(), ds.decoder.output_width()});
  for (Index t = 0; t < frames; ++t) {
    out.frame(t) = decode_frame(ds.decoder, embeddings_at(ds, static_cast<long>(t) + l_target));
  }
  return make_velocity_sequence(std::move(out));
}

void save_dataset(const std::filesystem::path& dir, const SynthDataset& ds) {
  std::filesystem::create_directories(dir);
  write_tensor(dir / "embeddings.pst", ds.embeddings.values);

  Tensor positions({ds.geometry.positions.rows(), 2});
  MatrixMap(positions.data().data(), ds.geometry.positions.rows(), 2) = ds.geometry.positions;
  write_tensor(dir / "positions.pst", positions);

  json geom;
  geom["roi"] = {{"x_min", ds.geometry.roi.x_min},
                 {"x_max", ds.geometry.roi.x_max},
                 {"y_min", ds.geometry.roi.y_min},
                 {"y_max", ds.geometry.roi.y_max}};
  geom["obstacle_center"] = {ds.geometry.obstacle_center.x(), ds.geometry.obstacle_center.y()};
  geom["obstacle_radius"] = ds.geometry.obstacle_radius;
  geom["positions_file"] = "positions.pst";
  std::ofstream(dir / "geometry.json") << geom.dump(2) << "\n";

  save_decoder(dir, ds.decoder);

  const VelocitySequence target = shifted_target(ds, ds.cfg.l_target);
  write_tensor(dir / "target.pst", target.values);

  json truth;
  truth["l_target"] = ds.cfg.l_target;
  truth["mixing"] = to_string(ds.cfg.mixing);
  truth["d_true"] = ds.cfg.latent_width();
  truth["noise_sigma"] = ds.cfg.noise_sigma;
  truth["seed"] = ds.cfg.seed;
  truth["pairs"] = json::array();
  for (const auto& [i, j, omega] : ds.true_pairs) {
    truth["pairs"].push_back({{"i", i}, {"j", j}, {"omega", omega}});
  }
  std::ofstream(dir / "truth.json") << truth.dump(2) << "\n";

  json manifest;
  manifest["frames"] = ds.embeddings.frames();
  manifest["nodes"] = ds.embeddings.nodes();
  manifest["d_emb"] = ds.embeddings.width();
  manifest["t0"] = ds.embeddings.t0;
  manifest["dt"] = ds.embeddings.dt;
  manifest["files"] = {{"embeddings", "embeddings.pst"},
                       {"geometry", "geometry.json"},
                       {"decoder", "decoder.json"},
                       {"target", "target.pst"},
                       {"truth", "truth.json"}};
  std::ofstream(dir / "dataset.json") << manifest.dump(2) << "\n";
}

MeshGeometry load_geometry(const std::filesystem::path& geometry_json) {
  std::ifstream in(geometry_json);
  if (!in) throw IoError(geometry_json.string() + ": cannot open geometry manifest");
  json geom;
  try {
    in >> geom;
  } catch (const json::exception& e) {
    throw IoError(geometry_json.string() + ": bad JSON: " + e.what());
  }
  MeshGeometry out;
  const Tensor pos = read_tensor(geometry_json.parent_path() /
                                 geom.at("positions_file").get<std::string>());
  if (pos.rank() != 2 || pos.dim(1) != 2) throw IoError("positions file is not N x 2");
  out.positions = pos.matrix();
  out.roi = RoiRect{geom.at("roi").at("x_min").get<double>(),
                    geom.at("roi").at("x_max").get<double>(),
                    geom.at("roi").at("y_min").get<double>(),
                    geom.at("roi").at("y_max").get<double>()};
  out.obstacle_center =
      Eigen::Vector2d(geom.at("obstacle_center")[0].get<double>(),
                      geom.at("obstacle_center")[1].get<double>());
  out.obstacle_radius = geom.at("obstacle_radius").get<double>();
  validate_geometry(out);
  return out;
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "dataset.json";
  std::ifstream in(manifest_path);
  if (!in) {
    throw IoError(manifest_path.string() +
                  ": missing dataset manifest (run `psteer generate` first)");
  }
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw IoError(manifest_path.string() + ": bad JSON: " + e.what());
  }
  const auto& files = manifest.at("files");

  LoadedDataset out;
  out.embeddings = make_embedding_sequence(
      read_tensor(dir / files.at("embeddings").get<std::string>()),
      manifest.value("t0", 0L), manifest.value("dt", 1.0));
  out.geometry = load_geometry(dir / files.at("geometry").get<std::string>());
  out.decoder = load_decoder(dir / files.at("decoder").get<std::string>());
  out.target = make_velocity_sequence(read_tensor(dir / files.at("target").get<std::string>()));
  const auto truth_path = dir / files.value("truth", "truth.json");
  if (std::filesystem::exists(truth_path)) {
    std::ifstream tin(truth_path);
    tin >> out.truth;
  }
  if (out.embeddings.nodes() != out.geometry.nodes() ||
      out.embeddings.nodes() != out.target.nodes() ||
      out.embeddings.frames() != out.target.frames()) {
    throw IoError("dataset files disagree on node count or horizon");
  }
  return out;
}

}  // namespace psteer
