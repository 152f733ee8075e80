#pragma once

// Provenance block attached to every machine-readable output: tool version,
// case checksum, and the modelling conventions that shaped the numbers.

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ecogrid/eco_matrix.hpp"
#include "ecogrid/powerflow.hpp"

namespace ecogrid {

std::string_view version();

struct RunMetadata {
  std::string case_path;
  std::string case_sha256;
  SolverOptions solver;
  MatrixOptions matrix;
  std::vector<std::pair<std::string, std::string>> extra;  // command-specific settings
};

nlohmann::json to_json(const RunMetadata& meta);

/// Flat key/value form for `# key: value` CSV comment lines.
std::vector<std::pair<std::string, std::string>> flatten(const RunMetadata& meta);

}  // namespace ecogrid
