#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace monet::ad {

struct GradcheckCase {
  std::string name;
  std::size_t trials = 0;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  bool pass = false;

  std::string to_json() const;
  std::string to_table() const;
};

/// Central-difference check of every tape primitive (tolerance 1e-5) and of a full two-block
/// model loss (tolerance 1e-4), each over `trials` random draws of shapes and values.
GradcheckReport run_gradcheck(std::size_t trials, std::uint64_t seed);

}  // namespace monet::ad
