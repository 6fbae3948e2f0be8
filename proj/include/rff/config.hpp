#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rff/dataset.hpp"
#include "rff/embed.hpp"
#include "rff/gen.hpp"

namespace rff {

// Everything a run needs, addressable as flat dotted keys
// ("gen.lambda_r", "embed.bound", "synth.per_class", ...).
struct RunConfig {
  std::string command;
  std::string run_id = "run";
  std::uint64_t seed = 1;
  std::string ablate;      // "", "no-mi", "no-center" or "minimax"
  bool paper_scale = false;
  std::string data_dir;    // empty: synthesize from synth.*
  double train_fraction = 0.8;

  SyntheticSpec synth;
  EmbedConfig embed;
  GenConfig gen;

  int gradcheck_seeds = 20;
  double gradcheck_h = 1e-3;  // 32-bit storage
  double gradcheck_h64 = 1e-4;

  // Throws ConfigError for unknown keys and unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  // Copies the run seed into every sub-config and validates all of them.
  void finalize();

  // Restores the full-size network dimensions.
  void apply_paper_scale();
  // no-mi: both generation duals pinned at 0; for train-embed the plain
  //        structured embedding (no bound, zero-variance head). With an empty
  //        command both are applied.
  // no-center: lambda_r = 0. minimax: original saturating log-loss game.
  void apply_ablation(const std::string& name);

  // key = value lines for every key, sorted; reloads to an identical config.
  std::string to_text() const;
};

// `key = value` lines, `#` starts a comment. Later lines override earlier.
void parse_config_text(const std::string& text, RunConfig& cfg, const std::string& origin);
void load_config_file(const std::filesystem::path& path, RunConfig& cfg);

// 64-bit FNV-1a of the text, as 16 hex digits.
std::string config_hash(const std::string& text);

}  // namespace rff
