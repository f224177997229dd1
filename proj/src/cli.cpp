#include "psteer/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "psteer/modes.hpp"
#include "psteer/oscillation.hpp"
#include "psteer/steering.hpp"
#include "psteer/tensor_io.hpp"

namespace psteer::cli {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& section) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.contains(it.key())) {
      throw ConfigError("unknown config key '" + section + it.key() + "'");
    }
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void maybe_path(const json& j, const char* key, std::filesystem::path& out) {
  if (j.contains(key)) out = j.at(key).get<std::string>();
}

void require_exists(const std::filesystem::path& path, const std::string& hint) {
  if (!std::filesystem::exists(path)) {
    throw IoError("missing artifact: " + path.string() + " (" + hint + ")");
  }
}

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  return json(v).dump();
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << content;
  if (!out) throw IoError(path.string() + ": write failed");
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": bad JSON: " + e.what());
  }
  return j;
}

std::string hash_file_hex(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for hashing");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return hex;
}

void write_manifest(const RunConfig& cfg, const std::string& command,
                    const std::filesystem::path& out_dir,
                    const std::vector<std::filesystem::path>& inputs) {
  json m;
  m["command"] = command;
  m["config_fingerprint"] = config_fingerprint(cfg);
  m["artifact_version"] = std::string(kArtifactVersion);
  std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  m["timestamp_utc"] = stamp;
  json hashes = json::object();
  for (const auto& p : inputs) {
    if (std::filesystem::exists(p)) hashes[p.string()] = hash_file_hex(p);
  }
  m["input_hashes"] = hashes;
  write_text(out_dir / ("manifest_" + command + ".json"), m.dump(2) + "\n");
}

void info(const RunConfig& cfg, const std::string& line) {
  if (!cfg.quiet) std::cout << line << "\n";
}

RepresentationMap load_configured_map(const RunConfig& cfg) {
  if (cfg.representation == MapKind::kIdentity) return RepresentationMap::identity();
  require_exists(cfg.model_dir / "model.json",
                 cfg.representation == MapKind::kSae ? "run train-sae first" : "run fit-pca first");
  RepresentationMap map = load_map(cfg.model_dir);
  if (map.kind != cfg.representation) {
    throw ConfigError("model directory holds a " + to_string(map.kind) +
                      " model but the config requests " + to_string(cfg.representation));
  }
  return map;
}

// Unsteered baseline as seen through the representation map: decoding the
// round-tripped representation, so zero steering closes exactly none of the
// gap regardless of the map's reconstruction error.
VelocitySequence through_map_baseline(const RepresentationMap& map,
                                      const EmbeddingSequence& embs,
                                      const FrozenDecoder& decoder) {
  const RepresentationTensor X = forward(map, embs);
  return decode_sequence(decoder, inverse(map, X));
}

std::vector<OscillatoryPair> read_pairs_manifest(const std::filesystem::path& path) {
  const json pj = read_json_file(path);
  std::vector<OscillatoryPair> pairs;
  for (const auto& p : pj.at("pairs")) {
    OscillatoryPair op;
    op.i = p.at("i").get<Index>();
    op.j = p.at("j").get<Index>();
    op.omega = p.at("omega").get<double>();
    op.coherence = p.at("coherence").get<double>();
    op.mean_phase_diff = p.at("mean_phase_diff").get<double>();
    op.amplitude_score = p.at("amplitude_score").get<double>();
    op.decoder_score = p.at("decoder_score").get<double>();
    op.footprint_score = p.at("footprint_score").get<double>();
    op.rank_score = p.at("rank_score").get<double>();
    pairs.push_back(op);
  }
  return pairs;
}

void write_loss_history(const std::filesystem::path& path,
                        const std::vector<LossBreakdown>& history) {
  std::ostringstream os;
  os << "iter,total,vel,dv,curv,mag\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& h = history[i];
    os << i << ',' << fmt_double(h.total) << ',' << fmt_double(h.vel) << ','
       << fmt_double(h.dv) << ',' << fmt_double(h.curv) << ',' << fmt_double(h.mag) << "\n";
  }
  write_text(path, os.str());
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_fingerprint(const RunConfig& cfg) {
  // Directory fields are locations, not computation; reports stay
  // byte-identical when a run is repeated elsewhere.
  json j = config_to_json(cfg);
  j.erase("dataset_dir");
  j.erase("model_dir");
  j.erase("run_dir");
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(j.dump())));
  return hex;
}

json config_to_json(const RunConfig& cfg) {
  json j;
  j["dataset_dir"] = cfg.dataset_dir.string();
  j["model_dir"] = cfg.model_dir.string();
  j["run_dir"] = cfg.run_dir.string();
  j["representation"] = to_string(cfg.representation);
  j["seed"] = cfg.seed;
  j["pair_filter"] = {{"z_amp_min", cfg.pair_filter.z_amp_min},
                      {"eps_omega_rel", cfg.pair_filter.eps_omega_rel},
                      {"quad_tol", cfg.pair_filter.quad_tol},
                      {"coherence_min", cfg.pair_filter.coherence_min},
                      {"edge_guard", cfg.pair_filter.edge_guard},
                      {"top_p", cfg.pair_filter.top_p}};
  j["modes"] = {{"rank", cfg.mode_rank}};
  j["steering"] = {{"k_basis", cfg.k_basis}};
  j["loss"] = {{"lambda_vel", cfg.weights.lambda_vel},
               {"lambda_dv", cfg.weights.lambda_dv},
               {"lambda_phase", cfg.weights.lambda_phase},
               {"lambda_mag", cfg.weights.lambda_mag}};
  j["optimizer"] = {{"learning_rate", cfg.optimizer.learning_rate},
                    {"beta1", cfg.optimizer.beta1},
                    {"beta2", cfg.optimizer.beta2},
                    {"eps", cfg.optimizer.eps},
                    {"max_iters", cfg.optimizer.max_iters},
                    {"grad_tol", cfg.optimizer.grad_tol}};
  j["synth"] = {{"n_nodes", cfg.synth.n_nodes},
                {"horizon", cfg.synth.horizon},
                {"d_emb", cfg.synth.d_emb},
                {"n_pairs_true", cfg.synth.n_pairs_true},
                {"n_distractors", cfg.synth.n_distractors},
                {"frequencies", cfg.synth.frequencies},
                {"amplitudes", cfg.synth.amplitudes},
                {"noise_sigma", cfg.synth.noise_sigma},
                {"mixing", to_string(cfg.synth.mixing)},
                {"l_target", cfg.synth.l_target}};
  j["sae"] = {{"kappa", cfg.sae.kappa},
              {"lambda", cfg.sae.lambda},
              {"lr", cfg.sae.lr},
              {"batch", cfg.sae.batch},
              {"max_epochs", cfg.sae.max_epochs},
              {"patience", cfg.sae.patience}};
  j["pca"] = {{"d_pca", cfg.d_pca}};
  j["baseline"] = {{"kind", to_string(cfg.baseline_kind)},
                   {"max_features", cfg.baseline_max_features}};
  j["sweep"] = {{"pairs", cfg.sweep_pairs}, {"lambda_mag", cfg.sweep_lambda_mag}};
  return j;
}

RunConfig config_from_json(const json& j) {
  RunConfig cfg;
  check_keys(j, {"dataset_dir", "model_dir", "run_dir", "representation", "seed",
                 "pair_filter", "modes", "steering", "loss", "optimizer", "synth", "sae",
                 "pca", "baseline", "sweep"},
             "");
  maybe_path(j, "dataset_dir", cfg.dataset_dir);
  maybe_path(j, "model_dir", cfg.model_dir);
  maybe_path(j, "run_dir", cfg.run_dir);
  if (j.contains("representation")) {
    cfg.representation = map_kind_from_string(j.at("representation").get<std::string>());
  }
  maybe(j, "seed", cfg.seed);

  if (j.contains("pair_filter")) {
    const auto& s = j.at("pair_filter");
    check_keys(s, {"z_amp_min", "eps_omega_rel", "quad_tol", "coherence_min", "edge_guard",
                   "top_p"},
               "pair_filter.");
    maybe(s, "z_amp_min", cfg.pair_filter.z_amp_min);
    maybe(s, "eps_omega_rel", cfg.pair_filter.eps_omega_rel);
    maybe(s, "quad_tol", cfg.pair_filter.quad_tol);
    maybe(s, "coherence_min", cfg.pair_filter.coherence_min);
    maybe(s, "edge_guard", cfg.pair_filter.edge_guard);
    maybe(s, "top_p", cfg.pair_filter.top_p);
    if (cfg.pair_filter.top_p < 1) throw ConfigError("pair_filter.top_p must be >= 1");
    if (cfg.pair_filter.z_amp_min < 0 || cfg.pair_filter.eps_omega_rel < 0 ||
        cfg.pair_filter.quad_tol < 0 || cfg.pair_filter.coherence_min < 0 ||
        cfg.pair_filter.edge_guard < 0) {
      throw ConfigError("pair_filter thresholds must be >= 0");
    }
  }
  if (j.contains("modes")) {
    check_keys(j.at("modes"), {"rank"}, "modes.");
    maybe(j.at("modes"), "rank", cfg.mode_rank);
    if (cfg.mode_rank < 1) throw ConfigError("modes.rank must be >= 1");
  }
  if (j.contains("steering")) {
    check_keys(j.at("steering"), {"k_basis"}, "steering.");
    maybe(j.at("steering"), "k_basis", cfg.k_basis);
    if (cfg.k_basis < 0) throw ConfigError("steering.k_basis must be >= 0");
  }
  if (j.contains("loss")) {
    const auto& s = j.at("loss");
    check_keys(s, {"lambda_vel", "lambda_dv", "lambda_phase", "lambda_mag"}, "loss.");
    maybe(s, "lambda_vel", cfg.weights.lambda_vel);
    maybe(s, "lambda_dv", cfg.weights.lambda_dv);
    maybe(s, "lambda_phase", cfg.weights.lambda_phase);
    maybe(s, "lambda_mag", cfg.weights.lambda_mag);
    validate_weights(cfg.weights);
  }
  if (j.contains("optimizer")) {
    const auto& s = j.at("optimizer");
    check_keys(s, {"learning_rate", "beta1", "beta2", "eps", "max_iters", "grad_tol"},
               "optimizer.");
    maybe(s, "learning_rate", cfg.optimizer.learning_rate);
    maybe(s, "beta1", cfg.optimizer.beta1);
    maybe(s, "beta2", cfg.optimizer.beta2);
    maybe(s, "eps", cfg.optimizer.eps);
    maybe(s, "max_iters", cfg.optimizer.max_iters);
    maybe(s, "grad_tol", cfg.optimizer.grad_tol);
    if (!(cfg.optimizer.learning_rate > 0)) throw ConfigError("optimizer.learning_rate must be > 0");
    if (!(cfg.optimizer.beta1 > 0 && cfg.optimizer.beta1 < 1) ||
        !(cfg.optimizer.beta2 > 0 && cfg.optimizer.beta2 < 1)) {
      throw ConfigError("optimizer betas must lie in (0, 1)");
    }
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    check_keys(s, {"n_nodes", "horizon", "d_emb", "n_pairs_true", "n_distractors",
                   "frequencies", "amplitudes", "noise_sigma", "mixing", "l_target"},
               "synth.");
    maybe(s, "n_nodes", cfg.synth.n_nodes);
    maybe(s, "horizon", cfg.synth.horizon);
    maybe(s, "d_emb", cfg.synth.d_emb);
    maybe(s, "n_pairs_true", cfg.synth.n_pairs_true);
    maybe(s, "n_distractors", cfg.synth.n_distractors);
    maybe(s, "frequencies", cfg.synth.frequencies);
    maybe(s, "amplitudes", cfg.synth.amplitudes);
    maybe(s, "noise_sigma", cfg.synth.noise_sigma);
    if (s.contains("mixing")) {
      cfg.synth.mixing = mixing_kind_from_string(s.at("mixing").get<std::string>());
    }
    maybe(s, "l_target", cfg.synth.l_target);
  }
  if (j.contains("sae")) {
    const auto& s = j.at("sae");
    check_keys(s, {"kappa", "lambda", "lr", "batch", "max_epochs", "patience"}, "sae.");
    maybe(s, "kappa", cfg.sae.kappa);
    maybe(s, "lambda", cfg.sae.lambda);
    maybe(s, "lr", cfg.sae.lr);
    maybe(s, "batch", cfg.sae.batch);
    maybe(s, "max_epochs", cfg.sae.max_epochs);
    maybe(s, "patience", cfg.sae.patience);
  }
  if (j.contains("pca")) {
    check_keys(j.at("pca"), {"d_pca"}, "pca.");
    maybe(j.at("pca"), "d_pca", cfg.d_pca);
    if (cfg.d_pca < 0) throw ConfigError("pca.d_pca must be >= 0");
  }
  if (j.contains("baseline")) {
    const auto& s = j.at("baseline");
    check_keys(s, {"kind", "max_features"}, "baseline.");
    if (s.contains("kind")) {
      cfg.baseline_kind = static_kind_from_string(s.at("kind").get<std::string>());
    }
    maybe(s, "max_features", cfg.baseline_max_features);
    if (cfg.baseline_max_features < 1) throw ConfigError("baseline.max_features must be >= 1");
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, {"pairs", "lambda_mag"}, "sweep.");
    maybe(s, "pairs", cfg.sweep_pairs);
    maybe(s, "lambda_mag", cfg.sweep_lambda_mag);
    if (cfg.sweep_pairs.empty() || cfg.sweep_lambda_mag.empty()) {
      throw ConfigError("sweep grid must be non-empty");
    }
  }
  return cfg;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  require_exists(path, "pass --config with a JSON run configuration");
  return config_from_json(read_json_file(path));
}

void cmd_generate(const RunConfig& cfg) {
  SynthConfig sc = cfg.synth;
  sc.seed = cfg.seed;
  const SynthDataset ds = generate(sc);
  save_dataset(cfg.dataset_dir, ds);
  write_manifest(cfg, "generate", cfg.dataset_dir, {});
  info(cfg, "generated dataset with " + std::to_string(ds.geometry.nodes()) + " nodes, " +
                std::to_string(ds.embeddings.frames()) + " frames -> " +
                cfg.dataset_dir.string());
}

void cmd_train_sae(const RunConfig& cfg) {
  const LoadedDataset ds = load_dataset(cfg.dataset_dir);
  SaeTrainConfig tc = cfg.sae;
  tc.seed = cfg.seed;
  const Matrix samples = ds.embeddings.values.flat();
  const SaeModel model = sae_train(samples, tc);
  save_map(cfg.model_dir, RepresentationMap::from_sae(model));
  write_manifest(cfg, "train_sae", cfg.model_dir, {cfg.dataset_dir / "embeddings.pst"});
  info(cfg, "trained SAE (d_hid=" + std::to_string(model.hidden_width()) +
                ", validation rel err=" + fmt_double(sae_validation_error(model, samples)) +
                ") -> " + cfg.model_dir.string());
}

void cmd_fit_pca(const RunConfig& cfg) {
  const LoadedDataset ds = load_dataset(cfg.dataset_dir);
  const Matrix samples = ds.embeddings.values.flat();
  const Index d_pca = cfg.d_pca == 0 ? ds.embeddings.width() : cfg.d_pca;
  const PcaModel model = pca_fit(samples, d_pca);
  save_map(cfg.model_dir, RepresentationMap::from_pca(model));
  write_manifest(cfg, "fit_pca", cfg.model_dir, {cfg.dataset_dir / "embeddings.pst"});
  info(cfg, "fit PCA with D_pca=" + std::to_string(d_pca) + " -> " + cfg.model_dir.string());
}

void cmd_identify_pairs(const RunConfig& cfg) {
  const LoadedDataset ds = load_dataset(cfg.dataset_dir);
  const RepresentationMap map = load_configured_map(cfg);
  const RepresentationTensor X = forward(map, ds.embeddings);
  const auto candidates = filter_pairs(X, cfg.pair_filter);
  const auto ranked = rank_pairs(candidates, X, map, cfg.pair_filter, ds.embeddings.width());

  std::filesystem::create_directories(cfg.run_dir);
  json out;
  out["representation"] = to_string(cfg.representation);
  out["candidates"] = candidates.size();
  out["pairs"] = json::array();
  for (const auto& p : ranked) {
    out["pairs"].push_back({{"i", p.i},
                            {"j", p.j},
                            {"omega", p.omega},
                            {"coherence", p.coherence},
                            {"mean_phase_diff", p.mean_phase_diff},
                            {"amplitude_score", p.amplitude_score},
                            {"decoder_score", p.decoder_score},
                            {"footprint_score", p.footprint_score},
                            {"rank_score", p.rank_score}});
  }
  write_text(cfg.run_dir / "pairs.json", out.dump(2) + "\n");
  write_manifest(cfg, "identify_pairs", cfg.run_dir, {cfg.dataset_dir / "embeddings.pst"});
  info(cfg, "identified " + std::to_string(ranked.size()) + " pairs (of " +
                std::to_string(candidates.size()) + " candidates) -> " +
                (cfg.run_dir / "pairs.json").string());
}

void cmd_steer(const RunConfig& cfg) {
  const LoadedDataset ds = load_dataset(cfg.dataset_dir);
  const RepresentationMap map = load_configured_map(cfg);
  const RepresentationTensor X = forward(map, ds.embeddings);
  require_exists(cfg.run_dir / "pairs.json", "run identify-pairs first");
  const auto pairs = read_pairs_manifest(cfg.run_dir / "pairs.json");

  const Index r = cfg.mode_rank;
  if (r > std::min(X.frames(), X.nodes())) {
    throw ConfigError("modes.rank exceeds min(H+1, N)");
  }
  std::map<Index, ModeDecomposition> decomps;
  for (const auto& p : pairs) {
    decomps.emplace(p.i, decompose(X, p.i, r));
    decomps.emplace(p.j, decompose(X, p.j, r));
  }
  const CosineDictionary dict = make_cosine_dictionary(X.frames(), cfg.k_basis);
  const SteeringProblem problem =
      make_steering_problem(X, pairs, decomps, dict, map, ds.decoder, ds.target);
  const SteeringParams init = SteeringParams::zeros(static_cast<Index>(pairs.size()), cfg.k_basis);
  const OptimizeResult result = optimize(problem, init, cfg.optimizer, cfg.weights);
  if (!result.diagnostic.empty()) {
    std::cerr << "steer: " << result.diagnostic << "\n";
  }
  const SteeredState state =
      apply_steering(X, pairs, decomps, result.params, dict, map, ds.decoder);

  std::filesystem::create_directories(cfg.run_dir);
  json pj;
  pj["k_basis"] = cfg.k_basis;
  pj["pairs"] = json::array();
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    std::vector<double> w(result.params.w.row(static_cast<Index>(k)).data(),
                          result.params.w.row(static_cast<Index>(k)).data() + cfg.k_basis);
    pj["pairs"].push_back({{"i", pairs[k].i},
                           {"j", pairs[k].j},
                           {"omega", pairs[k].omega},
                           {"a", result.params.a(static_cast<Index>(k))},
                           {"b", result.params.b(static_cast<Index>(k))},
                           {"w", w}});
  }
  pj["converged"] = result.converged;
  pj["iterations"] = result.history.size();
  write_text(cfg.run_dir / "params.json", pj.dump(2) + "\n");
  write_loss_history(cfg.run_dir / "loss_history.csv", result.history);
  write_tensor(cfg.run_dir / "steered.pst", state.U_steer.values);
  Tensor traj({std::max<Index>(state.phase_trajectories.rows(), 1),
               state.phase_trajectories.cols() > 0 ? state.phase_trajectories.cols()
                                                   : X.frames()});
  if (state.phase_trajectories.size() > 0) {
    MatrixMap(traj.data().data(), traj.dim(0), traj.dim(1)) = state.phase_trajectories;
  }
  write_tensor(cfg.run_dir / "phase_trajectories.pst", traj);
  write_manifest(cfg, "steer", cfg.run_dir,
                 {cfg.dataset_dir / "embeddings.pst", cfg.run_dir / "pairs.json"});
  const double final_total =
      result.history.empty() ? std::numeric_limits<double>::quiet_NaN()
                             : result.history.back().total;
  info(cfg, "steer finished after " + std::to_string(result.history.size()) +
                " iterations, last total loss " + fmt_double(final_total) + " -> " +
                cfg.run_dir.string());
}

void cmd_baseline(const RunConfig& cfg) {
  const LoadedDataset ds = load_dataset(cfg.dataset_dir);
  const RepresentationMap map = load_configured_map(cfg);
  const RepresentationTensor X = forward(map, ds.embeddings);
  const auto features = select_static_features(X, map, cfg.baseline_max_features);
  const StaticOptimizeResult result =
      optimize_static(cfg.baseline_kind, X, features, map, ds.decoder, ds.target,
                      cfg.optimizer, cfg.weights);
  if (!result.diagnostic.empty()) {
    std::cerr << "baseline: " << result.diagnostic << "\n";
  }
  const RepresentationTensor steered = apply_static(X, result.intervention);
  const VelocitySequence u_steer = decode_sequence(ds.decoder, inverse(map, steered));

  std::filesystem::create_directories(cfg.run_dir);
  json ij;
  ij["kind"] = to_string(result.intervention.kind);
  ij["features"] = result.intervention.features;
  ij["values"] = std::vector<double>(result.intervention.values.data(),
                                     result.intervention.values.data() +
                                         result.intervention.values.size());
  write_text(cfg.run_dir / "intervention.json", ij.dump(2) + "\n");
  write_loss_history(cfg.run_dir / "loss_history.csv", result.history);
  write_tensor(cfg.run_dir / "steered.pst", u_steer.values);
  write_manifest(cfg, "baseline", cfg.run_dir, {cfg.dataset_dir / "embeddings.pst"});
  info(cfg, "baseline " + to_string(cfg.baseline_kind) + " over " +
                std::to_string(features.size()) + " features -> " + cfg.run_dir.string());
}

void cmd_evaluate(const RunConfig& cfg) {
  const LoadedDataset ds = load_dataset(cfg.dataset_dir);
  const RepresentationMap map = load_configured_map(cfg);
  require_exists(cfg.run_dir / "steered.pst", "run steer or baseline first");
  const VelocitySequence u_steer =
      make_velocity_sequence(read_tensor(cfg.run_dir / "steered.pst"));
  const VelocitySequence u_orig = through_map_baseline(map, ds.embeddings, ds.decoder);
  const MetricsReport report =
      compute_metrics(u_steer, u_orig, ds.target, ds.geometry, config_fingerprint(cfg));

  json mj;
  mj["frac_pct_vx"] = report.frac_pct_vx;
  mj["roi_pct_vx"] = report.roi_pct_vx;
  mj["nrmse_vx"] = report.nrmse_vx;
  mj["corr_vxvy"] = report.corr_vxvy;
  mj["config_fingerprint"] = report.config_fingerprint;
  write_text(cfg.run_dir / "metrics.json", mj.dump(2) + "\n");

  std::ostringstream txt;
  txt << "frac%(vx):   " << fmt_double(report.frac_pct_vx) << "\n"
      << "ROI%(vx):    " << fmt_double(report.roi_pct_vx) << "\n"
      << "nRMSE(vx):   " << fmt_double(report.nrmse_vx) << "\n"
      << "Corr(vx,vy): " << fmt_double(report.corr_vxvy) << "\n"
      << "config:      " << report.config_fingerprint << "\n";
  write_text(cfg.run_dir / "metrics.txt", txt.str());

  std::ostringstream csv;
  csv << "node,x,y,frac\n";
  for (Index n = 0; n < report.per_node_frac.size(); ++n) {
    csv << n << ',' << fmt_double(ds.geometry.positions(n, 0)) << ','
        << fmt_double(ds.geometry.positions(n, 1)) << ','
        << fmt_double(report.per_node_frac(n)) << "\n";
  }
  write_text(cfg.run_dir / "per_node_frac.csv", csv.str());
  write_manifest(cfg, "evaluate", cfg.run_dir,
                 {cfg.run_dir / "steered.pst", cfg.dataset_dir / "target.pst"});
  info(cfg, "frac%(vx)=" + fmt_double(report.frac_pct_vx) +
                " ROI%(vx)=" + fmt_double(report.roi_pct_vx) +
                " nRMSE=" + fmt_double(report.nrmse_vx) +
                " Corr=" + fmt_double(report.corr_vxvy));
}

void cmd_sweep(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.run_dir / "sweep");
  std::ostringstream csv;
  csv << "p,lambda_mag,frac_pct_vx,roi_pct_vx,nrmse_vx,corr_vxvy\n";
  for (const Index p : cfg.sweep_pairs) {
    for (const double lm : cfg.sweep_lambda_mag) {
      RunConfig sub = cfg;
      sub.pair_filter.top_p = p;
      sub.weights.lambda_mag = lm;
      char name[64];
      std::snprintf(name, sizeof(name), "P%lld_mag%g", static_cast<long long>(p), lm);
      sub.run_dir = cfg.run_dir / "sweep" / name;
      cmd_identify_pairs(sub);
      cmd_steer(sub);
      cmd_evaluate(sub);
      const json m = read_json_file(sub.run_dir / "metrics.json");
      csv << p << ',' << fmt_double(lm) << ','
          << fmt_double(m.at("frac_pct_vx").get<double>()) << ','
          << fmt_double(m.at("roi_pct_vx").get<double>()) << ','
          << fmt_double(m.at("nrmse_vx").get<double>()) << ','
          << fmt_double(m.at("corr_vxvy").get<double>()) << "\n";
    }
  }
  write_text(cfg.run_dir / "pareto.csv", csv.str());
  write_manifest(cfg, "sweep", cfg.run_dir, {});
  info(cfg, "sweep grid complete -> " + (cfg.run_dir / "pareto.csv").string());
}

void cmd_report(const RunConfig& cfg) {
  require_exists(cfg.run_dir, "no run directory to report on");
  std::ostringstream os;
  os << "run report\n";
  os << "config fingerprint: " << config_fingerprint(cfg) << "\n\n";

  const auto pairs_path = cfg.run_dir / "pairs.json";
  if (std::filesystem::exists(pairs_path)) {
    const json pj = read_json_file(pairs_path);
    os << "selected pairs (" << pj.at("pairs").size() << "):\n";
    os << "  i     j     omega       coherence  phase_diff  rank_score\n";
    for (const auto& p : pj.at("pairs")) {
      char line[160];
      std::snprintf(line, sizeof(line), "  %-5lld %-5lld %-11.6f %-10.4f %-11.4f %-10.4f\n",
                    p.at("i").get<long long>(), p.at("j").get<long long>(),
                    p.at("omega").get<double>(), p.at("coherence").get<double>(),
                    p.at("mean_phase_diff").get<double>(), p.at("rank_score").get<double>());
      os << line;
    }
    os << "\n";
  }
  const auto params_path = cfg.run_dir / "params.json";
  if (std::filesystem::exists(params_path)) {
    const json pj = read_json_file(params_path);
    os << "steering parameters:\n";
    for (const auto& p : pj.at("pairs")) {
      char line[160];
      std::snprintf(line, sizeof(line), "  pair (%lld, %lld): a=%.6g b=%.6g |w|=%zu\n",
                    p.at("i").get<long long>(), p.at("j").get<long long>(),
                    p.at("a").get<double>(), p.at("b").get<double>(), p.at("w").size());
      os << line;
    }
    os << "\n";
  }
  const auto intervention_path = cfg.run_dir / "intervention.json";
  if (std::filesystem::exists(intervention_path)) {
    const json ij = read_json_file(intervention_path);
    os << "static intervention: " << ij.at("kind").get<std::string>() << " on "
       << ij.at("features").size() << " features\n\n";
  }
  const auto metrics_path = cfg.run_dir / "metrics.txt";
  if (std::filesystem::exists(metrics_path)) {
    std::ifstream in(metrics_path);
    os << "metrics:\n" << in.rdbuf() << "\n";
  }
  const auto pareto_path = cfg.run_dir / "pareto.csv";
  if (std::filesystem::exists(pareto_path)) {
    std::ifstream in(pareto_path);
    os << "sweep pareto rows:\n" << in.rdbuf() << "\n";
  }
  write_text(cfg.run_dir / "report.txt", os.str());
  if (!cfg.quiet) std::cout << os.str();
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"latent phase steering for frozen oscillatory surrogates"};
  app.require_subcommand(1);

  std::string config_path;
  std::string run_dir_override;
  std::int64_t seed_override = -1;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON run configuration file")->required();
  app.add_option("--run-dir", run_dir_override, "override run_dir from the config");
  app.add_option("--seed", seed_override, "override seed from the config");
  app.add_flag("--quiet", quiet, "suppress progress output");

  const std::vector<std::pair<std::string, void (*)(const RunConfig&)>> commands = {
      {"generate", cmd_generate},       {"train-sae", cmd_train_sae},
      {"fit-pca", cmd_fit_pca},         {"identify-pairs", cmd_identify_pairs},
      {"steer", cmd_steer},             {"baseline", cmd_baseline},
      {"evaluate", cmd_evaluate},       {"sweep", cmd_sweep},
      {"report", cmd_report}};
  for (const auto& [name, fn] : commands) {
    auto* sub = app.add_subcommand(name);
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = parse_config_file(config_path);
    if (!run_dir_override.empty()) cfg.run_dir = run_dir_override;
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    cfg.quiet = quiet;
    for (const auto& [name, fn] : commands) {
      if (app.got_subcommand(name)) {
        fn(cfg);
        return 0;
      }
    }
    throw ConfigError("no subcommand selected");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const DegenerateInputError& e) {
    std::cerr << "degenerate input: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace psteer::cli
