#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "psteer/cli.hpp"

using namespace psteer;
using namespace psteer::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Small, fast synthetic setup shared by the CLI tests.
json base_config(const fs::path& root) {
  json j;
  j["dataset_dir"] = (root / "dataset").string();
  j["model_dir"] = (root / "model").string();
  j["run_dir"] = (root / "run").string();
  j["representation"] = "IDENTITY";
  j["seed"] = 21;
  j["synth"] = {{"n_nodes", 100},   {"horizon", 60},       {"d_emb", 8},
                {"n_pairs_true", 1}, {"n_distractors", 2},  {"frequencies", {0.35}},
                {"amplitudes", {1.0}}, {"noise_sigma", 0.0}, {"mixing", "ORTHONORMAL"},
                {"l_target", 4}};
  j["pair_filter"] = {{"z_amp_min", 0.5}, {"top_p", 2}};
  j["modes"] = {{"rank", 4}};
  j["optimizer"] = {{"max_iters", 120}, {"learning_rate", 0.02}};
  return j;
}

RunConfig write_and_parse(const fs::path& root, const json& j) {
  fs::create_directories(root);
  std::ofstream(root / "config.json") << j.dump(2);
  return parse_config_file(root / "config.json");
}

}  // namespace

TEST_CASE("config parsing applies overrides and rejects unknown keys") {
  const fs::path root = fs::temp_directory_path() / "psteer_cli_cfg";
  fs::remove_all(root);
  json j = base_config(root);
  RunConfig cfg = write_and_parse(root, j);
  CHECK(cfg.synth.horizon == 60);
  CHECK(cfg.pair_filter.top_p == 2);
  CHECK(cfg.mode_rank == 4);
  CHECK(cfg.seed == 21);

  j["pair_filter"]["zz_typo"] = 1.0;
  std::ofstream(root / "bad.json") << j.dump(2);
  CHECK_THROWS_AS(parse_config_file(root / "bad.json"), ConfigError);
  fs::remove_all(root);
}

TEST_CASE("config fingerprint is stable and sensitive") {
  const fs::path root = fs::temp_directory_path() / "psteer_cli_fp";
  fs::remove_all(root);
  const RunConfig a = write_and_parse(root, base_config(root));
  const RunConfig b = write_and_parse(root, base_config(root));
  CHECK(config_fingerprint(a) == config_fingerprint(b));
  json j = base_config(root);
  j["seed"] = 22;
  const RunConfig c = write_and_parse(root, j);
  CHECK(config_fingerprint(a) != config_fingerprint(c));
  fs::remove_all(root);
}

TEST_CASE("full pipeline through the command functions, twice, byte-identical") {
  const fs::path root = fs::temp_directory_path() / "psteer_cli_pipeline";
  fs::remove_all(root);
  json j = base_config(root);
  RunConfig cfg = write_and_parse(root, j);
  cfg.quiet = true;

  auto run_all = [&](const fs::path& run_dir) {
    RunConfig c = cfg;
    c.run_dir = run_dir;
    cmd_generate(c);
    cmd_identify_pairs(c);
    cmd_steer(c);
    cmd_evaluate(c);
    cmd_report(c);
  };
  run_all(root / "run1");
  run_all(root / "run2");

  for (const char* name :
       {"pairs.json", "params.json", "loss_history.csv", "metrics.json", "metrics.txt",
        "per_node_frac.csv", "steered.pst", "report.txt"}) {
    CHECK(slurp(root / "run1" / name) == slurp(root / "run2" / name));
  }

  // sanity: the steering actually corrected a healthy share of the gap
  const json metrics = json::parse(slurp(root / "run1" / "metrics.json"));
  CHECK(metrics.at("frac_pct_vx").get<double>() > 50.0);
  fs::remove_all(root);
}

TEST_CASE("baseline command writes intervention artifacts") {
  const fs::path root = fs::temp_directory_path() / "psteer_cli_baseline";
  fs::remove_all(root);
  json j = base_config(root);
  j["baseline"] = {{"kind", "ADDITIVE"}, {"max_features", 3}};
  j["optimizer"] = {{"max_iters", 40}};
  RunConfig cfg = write_and_parse(root, j);
  cfg.quiet = true;
  cmd_generate(cfg);
  cmd_baseline(cfg);
  cmd_evaluate(cfg);
  const json ij = json::parse(slurp(cfg.run_dir / "intervention.json"));
  CHECK(ij.at("kind").get<std::string>() == "ADDITIVE");
  CHECK(ij.at("features").size() == 3);
  CHECK(fs::exists(cfg.run_dir / "metrics.json"));
  fs::remove_all(root);
}

TEST_CASE("missing upstream artifacts produce categorized failures") {
  const fs::path root = fs::temp_directory_path() / "psteer_cli_missing";
  fs::remove_all(root);
  RunConfig cfg = write_and_parse(root, base_config(root));
  cfg.quiet = true;

  SUBCASE("steer before generate") { CHECK_THROWS_AS(cmd_steer(cfg), IoError); }
  SUBCASE("steer before identify-pairs") {
    cmd_generate(cfg);
    CHECK_THROWS_AS(cmd_steer(cfg), IoError);
  }
  SUBCASE("evaluate before steer") {
    cmd_generate(cfg);
    CHECK_THROWS_AS(cmd_evaluate(cfg), IoError);
  }
  SUBCASE("train-sae requested but model missing for identify") {
    cmd_generate(cfg);
    cfg.representation = MapKind::kSae;
    CHECK_THROWS_AS(cmd_identify_pairs(cfg), IoError);
  }
  fs::remove_all(root);
}

TEST_CASE("run_cli maps errors to exit codes") {
  const fs::path root = fs::temp_directory_path() / "psteer_cli_exit";
  fs::remove_all(root);
  fs::create_directories(root);
  const json j = base_config(root);
  std::ofstream(root / "config.json") << j.dump(2);
  const std::string cfg_arg = (root / "config.json").string();

  auto run = [&](std::vector<std::string> args) {
    std::vector<const char*> argv = {"psteer"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
  };

  // steer without upstream artifacts: io error -> 3
  CHECK(run({"steer", "--config", cfg_arg, "--quiet"}) == 3);
  // missing config file: io error -> 3
  CHECK(run({"generate", "--config", (root / "nope.json").string()}) == 3);
  // generate succeeds -> 0
  CHECK(run({"generate", "--config", cfg_arg, "--quiet"}) == 0);
  // bad flag -> CLI parse error -> 2
  CHECK(run({"generate", "--config", cfg_arg, "--no-such-flag"}) == 2);
  // unknown representation in config -> config error -> 2
  json bad = j;
  bad["representation"] = "FOURIER";
  std::ofstream(root / "bad.json") << bad.dump(2);
  CHECK(run({"generate", "--config", (root / "bad.json").string()}) == 2);
  fs::remove_all(root);
}

TEST_CASE("train-sae and fit-pca feed identify/steer through model_dir") {
  const fs::path root = fs::temp_directory_path() / "psteer_cli_models";
  fs::remove_all(root);
  json j = base_config(root);
  j["synth"] = {{"n_nodes", 64},    {"horizon", 50},      {"d_emb", 6},
                {"n_pairs_true", 1}, {"n_distractors", 1}, {"frequencies", {0.4}},
                {"amplitudes", {1.0}}, {"noise_sigma", 0.01}, {"mixing", "ORTHONORMAL"},
                {"l_target", 3}};
  j["sae"] = {{"kappa", 2}, {"lambda", 1e-4}, {"lr", 2e-3}, {"batch", 64},
              {"max_epochs", 12}, {"patience", 3}};
  j["optimizer"] = {{"max_iters", 30}};
  RunConfig cfg = write_and_parse(root, j);
  cfg.quiet = true;
  cmd_generate(cfg);

  SUBCASE("pca path") {
    cfg.representation = MapKind::kPca;
    cmd_fit_pca(cfg);
    cmd_identify_pairs(cfg);
    cmd_steer(cfg);
    cmd_evaluate(cfg);
    CHECK(fs::exists(cfg.run_dir / "metrics.json"));
  }
  SUBCASE("sae path") {
    cfg.representation = MapKind::kSae;
    cmd_train_sae(cfg);
    cmd_identify_pairs(cfg);
    CHECK(fs::exists(cfg.run_dir / "pairs.json"));
  }
  SUBCASE("kind mismatch is a config error") {
    cfg.representation = MapKind::kPca;
    cmd_fit_pca(cfg);
    cfg.representation = MapKind::kSae;
    CHECK_THROWS_AS(cmd_identify_pairs(cfg), ConfigError);
  }
  fs::remove_all(root);
}

TEST_CASE("sweep emits one pareto row per configuration and reruns identically") {
  const fs::path root = fs::temp_directory_path() / "psteer_cli_sweep";
  fs::remove_all(root);
  json j = base_config(root);
  j["sweep"] = {{"pairs", {1, 2}}, {"lambda_mag", {1e-4, 1e-3}}};
  j["optimizer"] = {{"max_iters", 40}};
  RunConfig cfg = write_and_parse(root, j);
  cfg.quiet = true;
  cmd_generate(cfg);

  RunConfig s1 = cfg;
  s1.run_dir = root / "sweep1";
  cmd_sweep(s1);
  const std::string csv1 = slurp(s1.run_dir / "pareto.csv");
  // header + 4 rows
  CHECK(std::count(csv1.begin(), csv1.end(), '\n') == 5);

  RunConfig s2 = cfg;
  s2.run_dir = root / "sweep2";
  cmd_sweep(s2);
  CHECK(csv1 == slurp(s2.run_dir / "pareto.csv"));
  fs::remove_all(root);
}
