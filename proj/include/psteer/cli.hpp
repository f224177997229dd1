#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "psteer/evaluation.hpp"
#include "psteer/representation.hpp"
#include "psteer/synthgen.hpp"

namespace psteer::cli {

inline constexpr std::string_view kArtifactVersion = "psteer 0.1.0";

// Resolved run configuration. Every default is overridable from the JSON
// config file; sweep generation rewrites run_dir/top_p/lambda_mag per cell.
struct RunConfig {
  std::filesystem::path dataset_dir = "dataset";
  std::filesystem::path model_dir = "model";
  std::filesystem::path run_dir = "run";
  MapKind representation = MapKind::kIdentity;
  std::uint64_t seed = 1;
  bool quiet = false;

  PairFilterConfig pair_filter;
  Index mode_rank = 8;
  Index k_basis = 6;
  LossWeights weights;
  OptimizerConfig optimizer;
  SynthConfig synth;
  SaeTrainConfig sae;
  Index d_pca = 0;  // 0 = keep full embedding width
  StaticKind baseline_kind = StaticKind::kScale;
  Index baseline_max_features = 10;
  std::vector<Index> sweep_pairs = {4, 5, 6, 7, 8};
  std::vector<double> sweep_lambda_mag = {1e-4, 1e-3, 5e-3};
};

RunConfig config_from_json(const nlohmann::json& j);
RunConfig parse_config_file(const std::filesystem::path& path);

// Canonical JSON form of the resolved config; hashing it fingerprints a run.
nlohmann::json config_to_json(const RunConfig& cfg);
std::uint64_t fnv1a64(std::string_view bytes);
std::string config_fingerprint(const RunConfig& cfg);

void cmd_generate(const RunConfig& cfg);
void cmd_train_sae(const RunConfig& cfg);
void cmd_fit_pca(const RunConfig& cfg);
void cmd_identify_pairs(const RunConfig& cfg);
void cmd_steer(const RunConfig& cfg);
void cmd_baseline(const RunConfig& cfg);
void cmd_evaluate(const RunConfig& cfg);
void cmd_sweep(const RunConfig& cfg);
void cmd_report(const RunConfig& cfg);

// Full argv entry point. Exit codes: 0 ok, 2 config, 3 io, 4 numeric,
// 5 degenerate input, 1 anything else.
int run_cli(int argc, const char* const* argv);

}  // namespace psteer::cli
