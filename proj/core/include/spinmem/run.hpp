#pragma once

#include "spinmem/config.hpp"

#include <json.hpp>

namespace spinmem {

// Executes the configured experiment, writing its artifacts plus a
// run manifest (config hash, seed, version, wall time, artifact list) into
// the output directory. Identical config + seed produce byte-identical
// numeric artifacts; the manifest's wall time is the only varying field.
struct RunOutcome {
  std::vector<std::string> artifacts;
  nlohmann::json summary;
};

RunOutcome run(const RunConfig& config, const std::string& raw_config_text);

}  // namespace spinmem
