#include "psteer/representation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "psteer/rng.hpp"
#include "psteer/tensor_io.hpp"

namespace psteer {

using nlohmann::json;

RepresentationMap RepresentationMap::from_sae(SaeModel m) {
  if (m.W_enc.rows() != m.W_dec.cols() || m.W_enc.cols() != m.W_dec.rows() ||
      m.b_enc.size() != m.W_enc.cols() || m.b_dec.size() != m.W_enc.rows()) {
    throw ShapeError("inconsistent SAE weight shapes");
  }
  RepresentationMap map;
  map.kind = MapKind::kSae;
  map.sae = std::move(m);
  return map;
}

RepresentationMap RepresentationMap::from_pca(PcaModel m) {
  if (m.mean.size() != m.components.rows() ||
      m.explained_variance.size() != m.components.cols()) {
    throw ShapeError("inconsistent PCA model shapes");
  }
  RepresentationMap map;
  map.kind = MapKind::kPca;
  map.pca = std::move(m);
  return map;
}

Index RepresentationMap::output_width(Index d_emb) const {
  switch (kind) {
    case MapKind::kIdentity: return d_emb;
    case MapKind::kPca: return pca.output_width();
    case MapKind::kSae: return sae.hidden_width();
  }
  throw ConfigError("unknown map kind");
}

Matrix sae_encode(const SaeModel& m, const Matrix& h) {
  if (h.cols() != m.input_width()) {
    throw ShapeError("sae_encode: input width != d_emb");
  }
  Matrix pre = (h.rowwise() - m.b_dec.transpose()) * m.W_enc;
  pre.rowwise() += m.b_enc.transpose();
  return pre.cwiseMax(0.0);
}

Matrix sae_decode(const SaeModel& m, const Matrix& z) {
  if (z.cols() != m.hidden_width()) {
    throw ShapeError("sae_decode: input width != d_hid");
  }
  Matrix out = z * m.W_dec;
  out.rowwise() += m.b_dec.transpose();
  return out;
}

namespace {

void renormalize_decoder_rows(Matrix& W_dec) {
  for (Index r = 0; r < W_dec.rows(); ++r) {
    const double n = W_dec.row(r).norm();
    if (n > 0.0) W_dec.row(r) /= n;
  }
}

double sae_batch_loss_and_grads(const SaeModel& m, const Matrix& batch, double lambda,
                                Matrix& gW_enc, Vector& gb_enc, Matrix& gW_dec,
                                Vector& gb_dec) {
  const double inv_b = 1.0 / static_cast<double>(batch.rows());
  const Matrix centered = batch.rowwise() - m.b_dec.transpose();
  Matrix pre = centered * m.W_enc;
  pre.rowwise() += m.b_enc.transpose();
  const Matrix z = pre.cwiseMax(0.0);
  Matrix recon = z * m.W_dec;
  recon.rowwise() += m.b_dec.transpose();

  const Matrix err = recon - batch;
  const double loss = inv_b * (err.squaredNorm() + lambda * z.sum());

  const Matrix d_recon = 2.0 * inv_b * err;
  gW_dec.noalias() = z.transpose() * d_recon;
  gb_dec = d_recon.colwise().sum();

  Matrix dz = d_recon * m.W_dec.transpose();
  dz.array() += lambda * inv_b * (z.array() > 0.0).cast<double>();
  // ReLU subgradient at 0 is 0.
  const Matrix dpre = dz.array() * (pre.array() > 0.0).cast<double>();
  gW_enc.noalias() = centered.transpose() * dpre;
  gb_enc = dpre.colwise().sum();
  // b_dec also feeds the pre-centering.
  gb_dec.noalias() -= m.W_enc * dpre.colwise().sum().transpose();
  return loss;
}

struct AdamState {
  Matrix mW_enc, vW_enc, mW_dec, vW_dec;
  Vector mb_enc, vb_enc, mb_dec, vb_dec;
  long t = 0;
};

void adam_step(Matrix& p, Matrix& m, Matrix& v, const Matrix& g, double lr, double b1,
               double b2, double eps, double bc1, double bc2) {
  m = b1 * m + (1.0 - b1) * g;
  v = b2 * v.array().matrix() + (1.0 - b2) * g.cwiseProduct(g);
  p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

void adam_step(Vector& p, Vector& m, Vector& v, const Vector& g, double lr, double b1,
               double b2, double eps, double bc1, double bc2) {
  m = b1 * m + (1.0 - b1) * g;
  v = b2 * v.array().matrix() + (1.0 - b2) * g.cwiseProduct(g);
  p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

}  // namespace

double sae_validation_error(const SaeModel& m, const Matrix& samples) {
  const Matrix recon = sae_decode(m, sae_encode(m, samples));
  const double denom = samples.norm();
  if (denom == 0.0) throw DegenerateInputError("validation samples are all zero");
  return (recon - samples).norm() / denom;
}

double sae_zero_fraction(const SaeModel& m, const Matrix& samples) {
  const Matrix z = sae_encode(m, samples);
  const auto zero_count = (z.array() == 0.0).count();
  return static_cast<double>(zero_count) / static_cast<double>(z.size());
}

SaeModel sae_train(const Matrix& samples, const SaeTrainConfig& cfg) {
  const Index m_total = samples.rows();
  const Index d = samples.cols();
  if (cfg.kappa < 1) throw ConfigError("sae kappa must be >= 1");
  if (m_total < cfg.batch) throw ConfigError("sae training needs at least one full batch");
  const Index d_hid = cfg.kappa * d;

  Rng rng(cfg.seed);
  SaeModel model;
  model.kappa = cfg.kappa;
  model.lambda_sparsity = cfg.lambda;
  const double dec_scale = 1.0 / std::sqrt(static_cast<double>(d_hid));
  model.W_dec = Matrix::NullaryExpr(
      d_hid, d, [&rng, dec_scale](Index, Index) { return rng.uniform(-dec_scale, dec_scale); });
  renormalize_decoder_rows(model.W_dec);
  model.W_enc = model.W_dec.transpose();  // tied init
  model.b_enc = Vector::Zero(d_hid);
  model.b_dec = samples.colwise().mean();

  // Fixed split: shuffle once, last 10% held out.
  std::vector<Index> order(static_cast<std::size_t>(m_total));
  std::iota(order.begin(), order.end(), Index{0});
  rng.shuffle(order);
  const Index n_val = std::max<Index>(1, static_cast<Index>(std::floor(
                                             cfg.holdout_frac * static_cast<double>(m_total))));
  const Index n_train = m_total - n_val;
  if (n_train < cfg.batch) throw ConfigError("sae training split smaller than one batch");
  Matrix val(n_val, d);
  for (Index i = 0; i < n_val; ++i) val.row(i) = samples.row(order[static_cast<std::size_t>(n_train + i)]);

  AdamState adam;
  adam.mW_enc = Matrix::Zero(d, d_hid);
  adam.vW_enc = Matrix::Zero(d, d_hid);
  adam.mW_dec = Matrix::Zero(d_hid, d);
  adam.vW_dec = Matrix::Zero(d_hid, d);
  adam.mb_enc = Vector::Zero(d_hid);
  adam.vb_enc = Vector::Zero(d_hid);
  adam.mb_dec = Vector::Zero(d);
  adam.vb_dec = Vector::Zero(d);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

  Matrix gW_enc(d, d_hid), gW_dec(d_hid, d);
  Vector gb_enc(d_hid), gb_dec(d);
  Matrix batch(cfg.batch, d);

  auto val_loss = [&]() {
    const Matrix recon = sae_decode(model, sae_encode(model, val));
    return (recon - val).squaredNorm() / static_cast<double>(n_val);
  };

  SaeModel best = model;
  double best_val = val_loss();
  Index stale_rounds = 0;

  std::vector<Index> train_idx(order.begin(), order.begin() + n_train);
  for (Index epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(train_idx);
    const Index n_batches = n_train / cfg.batch;
    for (Index bi = 0; bi < n_batches; ++bi) {
      for (Index r = 0; r < cfg.batch; ++r) {
        batch.row(r) = samples.row(train_idx[static_cast<std::size_t>(bi * cfg.batch + r)]);
      }
      const double loss = sae_batch_loss_and_grads(model, batch, cfg.lambda, gW_enc, gb_enc,
                                                   gW_dec, gb_dec);
      if (!std::isfinite(loss)) {
        throw NumericError("SAE training diverged: non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(bi));
      }
      ++adam.t;
      const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam.t));
      const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam.t));
      adam_step(model.W_enc, adam.mW_enc, adam.vW_enc, gW_enc, cfg.lr, b1, b2, eps, bc1, bc2);
      adam_step(model.b_enc, adam.mb_enc, adam.vb_enc, gb_enc, cfg.lr, b1, b2, eps, bc1, bc2);
      adam_step(model.W_dec, adam.mW_dec, adam.vW_dec, gW_dec, cfg.lr, b1, b2, eps, bc1, bc2);
      adam_step(model.b_dec, adam.mb_dec, adam.vb_dec, gb_dec, cfg.lr, b1, b2, eps, bc1, bc2);
      renormalize_decoder_rows(model.W_dec);
      if (cfg.step_callback) cfg.step_callback(model, adam.t);
    }
    const double v = val_loss();
    if (v < best_val - 1e-12) {
      best_val = v;
      best = model;
      stale_rounds = 0;
    } else if (++stale_rounds >= cfg.patience) {
      break;
    }
  }
  return best;
}

PcaModel pca_fit(const Matrix& samples, Index d_pca) {
  const Index m = samples.rows();
  const Index d = samples.cols();
  if (d_pca < 1 || d_pca > std::min(m, d)) {
    throw ConfigError("d_pca out of range 1..min(M, d_emb)");
  }
  PcaModel model;
  model.mean = samples.colwise().mean();
  const Matrix centered = samples.rowwise() - model.mean.transpose();
  // Covariance eigendecomposition; equivalent to the SVD route for d_emb-sized
  // problems and much cheaper when M >> d_emb.
  const Matrix cov = centered.transpose() * centered / static_cast<double>(std::max<Index>(m - 1, 1));
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success) throw NumericError("PCA eigendecomposition failed");

  model.components = Matrix(d, d_pca);
  model.explained_variance = Vector(d_pca);
  for (Index k = 0; k < d_pca; ++k) {
    const Index src = d - 1 - k;  // eigenvalues ascend
    Vector comp = es.eigenvectors().col(src);
    Index argmax = 0;
    comp.cwiseAbs().maxCoeff(&argmax);
    if (comp(argmax) < 0.0) comp = -comp;
    model.components.col(k) = comp;
    model.explained_variance(k) = std::max(0.0, es.eigenvalues()(src));
  }
  return model;
}

RepresentationTensor forward(const RepresentationMap& map, const EmbeddingSequence& embs) {
  const Index frames = embs.frames();
  const Index n = embs.nodes();
  const Index d = embs.width();
  switch (map.kind) {
    case MapKind::kIdentity: {
      return make_representation_tensor(embs.values, MapKind::kIdentity);
    }
    case MapKind::kPca: {
      if (map.pca.input_width() != d) throw ShapeError("PCA input width != embedding width");
      Tensor out({frames, n, map.pca.output_width()});
      out.flat() = (embs.values.flat().rowwise() - map.pca.mean.transpose()) * map.pca.components;
      return make_representation_tensor(std::move(out), MapKind::kPca);
    }
    case MapKind::kSae: {
      Tensor out({frames, n, map.sae.hidden_width()});
      out.flat() = sae_encode(map.sae, embs.values.flat());
      return make_representation_tensor(std::move(out), MapKind::kSae);
    }
  }
  throw ConfigError("unknown map kind");
}

EmbeddingSequence inverse(const RepresentationMap& map, const RepresentationTensor& X,
                          long t0, double dt) {
  const Index frames = X.frames();
  const Index n = X.nodes();
  switch (map.kind) {
    case MapKind::kIdentity: {
      return make_embedding_sequence(X.values, t0, dt);
    }
    case MapKind::kPca: {
      if (X.features() != map.pca.output_width()) {
        throw ShapeError("PCA inverse: feature width != D_pca");
      }
      Tensor out({frames, n, map.pca.input_width()});
      out.flat() = (X.values.flat() * map.pca.components.transpose()).rowwise() +
                   map.pca.mean.transpose();
      return make_embedding_sequence(std::move(out), t0, dt);
    }
    case MapKind::kSae: {
      if (X.features() != map.sae.hidden_width()) {
        throw ShapeError("SAE inverse: feature width != d_hid");
      }
      Tensor out({frames, n, map.sae.input_width()});
      out.flat() = sae_decode(map.sae, X.values.flat());
      return make_embedding_sequence(std::move(out), t0, dt);
    }
  }
  throw ConfigError("unknown map kind");
}

Vector feature_direction(const RepresentationMap& map, Index f, Index d_emb) {
  switch (map.kind) {
    case MapKind::kIdentity: {
      Vector e = Vector::Zero(d_emb);
      e(f) = 1.0;
      return e;
    }
    case MapKind::kPca: return map.pca.components.col(f);
    case MapKind::kSae: return map.sae.W_dec.row(f).transpose();
  }
  throw ConfigError("unknown map kind");
}

void save_map(const std::filesystem::path& dir, const RepresentationMap& map) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["kind"] = to_string(map.kind);
  auto write_matrix = [&dir](const std::string& name, const Matrix& m) {
    Tensor t({m.rows(), m.cols()});
    MatrixMap(t.data().data(), m.rows(), m.cols()) = m;
    write_tensor(dir / name, t);
  };
  auto write_vector = [&dir](const std::string& name, const Vector& v) {
    write_tensor(dir / name, Tensor({v.size()}, v));
  };
  if (map.kind == MapKind::kSae) {
    manifest["kappa"] = map.sae.kappa;
    manifest["lambda_sparsity"] = map.sae.lambda_sparsity;
    write_matrix("W_enc.pst", map.sae.W_enc);
    write_vector("b_enc.pst", map.sae.b_enc);
    write_matrix("W_dec.pst", map.sae.W_dec);
    write_vector("b_dec.pst", map.sae.b_dec);
  } else if (map.kind == MapKind::kPca) {
    write_vector("mean.pst", map.pca.mean);
    write_matrix("components.pst", map.pca.components);
    write_vector("explained_variance.pst", map.pca.explained_variance);
  }
  std::ofstream out(dir / "model.json");
  if (!out) throw IoError((dir / "model.json").string() + ": cannot open for writing");
  out << manifest.dump(2) << "\n";
}

RepresentationMap load_map(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw IoError((dir / "model.json").string() + ": cannot open model manifest");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw IoError((dir / "model.json").string() + ": bad JSON: " + e.what());
  }
  const MapKind kind = map_kind_from_string(manifest.at("kind").get<std::string>());
  if (kind == MapKind::kIdentity) return RepresentationMap::identity();
  if (kind == MapKind::kSae) {
    SaeModel m;
    m.W_enc = read_tensor(dir / "W_enc.pst").matrix();
    m.b_enc = read_tensor(dir / "b_enc.pst").data();
    m.W_dec = read_tensor(dir / "W_dec.pst").matrix();
    m.b_dec = read_tensor(dir / "b_dec.pst").data();
    m.kappa = manifest.at("kappa").get<Index>();
    m.lambda_sparsity = manifest.at("lambda_sparsity").get<double>();
    return RepresentationMap::from_sae(std::move(m));
  }
  PcaModel m;
  m.mean = read_tensor(dir / "mean.pst").data();
  m.components = read_tensor(dir / "components.pst").matrix();
  m.explained_variance = read_tensor(dir / "explained_variance.pst").data();
  return RepresentationMap::from_pca(std::move(m));
}

}  // namespace psteer
