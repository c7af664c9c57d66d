// Effective run configuration: geometry + architecture + training knobs,
// merged from defaults, an optional key=value config file and command-line
// flag overrides (flags win). Unknown keys are rejected.
#pragma once

#include <map>
#include <string>

#include "dna/model.hpp"
#include "dna/training.hpp"

namespace dnacli {

struct RunConfig {
  dna::GeometryConfig geo;
  dna::ArchConfig arch;
  dna::TrainConfig train;

  RunConfig() {
    // desk-scale defaults; the published sizes stay reachable through config
    geo.image_size = 64;
    geo.num_views = 16;
    arch.branches = 23;
    arch.unet_width = 36;
    arch.critic_base = 64;
  }
};

// Parses "key=value" lines ('#' starts a comment, blank lines ignored).
std::map<std::string, std::string> parse_kv_file(const std::string& path);

// Applies one key; throws std::invalid_argument on unknown keys or bad values.
void apply_key(RunConfig& cfg, const std::string& key, const std::string& value);

inline void apply_kv(RunConfig& cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) apply_key(cfg, k, v);
}

// The full effective configuration as a flat key=value map (for manifests).
std::map<std::string, std::string> effective_kv(const RunConfig& cfg);

}  // namespace dnacli
