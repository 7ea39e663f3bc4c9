#pragma once

#include <string>

#include "layerstack/assembly.hpp"
#include "layerstack/ld.hpp"

namespace layerstack {

// One experiment: geometry, materials, bounds, loads, solver settings and output location.
// The JSON schema is documented in docs/config_schema.md.
struct ProblemConfig {
  std::string description;
  ProblemDefinition problem;
  LdConfig solver;
  std::string output_directory = "out";
  bool serial = false;
  // Informational: the run is expected to take long at desk scale.
  bool long_running = false;

  bool operator==(const ProblemConfig&) const = default;
};

// Strict parse: unknown keys, wrong types and inconsistent counts throw ConfigError naming the
// offending JSON pointer path. Defaults not present in the text are filled in explicitly.
ProblemConfig parse_config(const std::string& text);
ProblemConfig load_config(const std::string& path);

// Every field is written, so parse_config(serialize_config(c)) == c.
std::string serialize_config(const ProblemConfig& config);

}  // namespace layerstack
