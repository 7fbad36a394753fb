#pragma once

#include <string>

#include "mmdforge/data.hpp"
#include "mmdforge/training.hpp"

namespace mmdforge {

// Full run description: sections [data], [noise], [model], [train],
// [kernel], [eval]. [kernel] configures the critic-space kernel
// (train.kernel), [eval] the fixed held-out metric kernel.
struct RunConfig {
  DatasetSpec data;
  NoiseSpec noise;
  ModelShape model;
  TrainConfig train;
};

RunConfig default_config();

// Text format: [section] headers, key = value lines, full-line # or ;
// comments. Unknown sections/keys, duplicates and malformed values raise
// ParseError naming source, line and key. Omitted keys keep defaults.
RunConfig parse_config(const std::string& text, const std::string& source_name);
RunConfig load_config(const std::string& path);

// Serializes every field explicitly; parse(serialize(c)) reproduces c.
std::string serialize_config(const RunConfig& cfg);

// "section.key=value" override, same handlers as the file parser.
void apply_override(RunConfig& cfg, const std::string& assignment);

}  // namespace mmdforge
