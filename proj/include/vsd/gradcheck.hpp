#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vsd {

// All checks run in 64-bit: analytic gradients of the combined training loss
// against central finite differences, on a small full-pipeline scene.
struct GradcheckOptions {
  uint64_t seed = 7;
  int image_size = 32;
  int depnet_samples = 10;  // random DepNet weights to probe
  int synnet_samples = 10;  // random SynNet weights
  int depth_samples = 20;   // random injected source-depth pixels
  double step = 1e-5;
  double tolerance = 1e-3;  // relative deviation bound
};

struct GradcheckEntry {
  std::string name;
  double analytic = 0.0;
  double numeric = 0.0;
  double deviation = 0.0;
  bool skipped = false;  // probe straddled a z-test winner change
};

struct GradcheckResult {
  double max_deviation = 0.0;  // over non-skipped probes
  int checked = 0;
  int skipped = 0;
  bool pass = false;
  std::vector<GradcheckEntry> entries;
};

GradcheckResult run_gradcheck(const GradcheckOptions& opts = {});

}  // namespace vsd
