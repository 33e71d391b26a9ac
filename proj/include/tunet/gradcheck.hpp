#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace tunet {

// Deliberate corruption of one analytic gradient, so callers can confirm the
// checker actually catches a broken backward pass.
enum class GradcheckFault { none, conv_backward };

struct GradcheckOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double tolerance = 1e-5;
  double step = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, denominator_floor).
  double denominator_floor = 1e-3;
  GradcheckFault fault = GradcheckFault::none;
};

struct LayerCheck {
  std::string layer;
  double worst_rel_err = 0.0;
  std::size_t checked = 0;
  // Coordinates whose +/- step changed a ReLU branch or a max-pool winner;
  // the function is not differentiable across them.
  std::size_t skipped = 0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<LayerCheck> checks;
  double tolerance = 0.0;

  bool passed() const;
  double worst_rel_err() const;
};

// Central-difference checks at 64-bit for every layer and for the loss of a
// tiny end-to-end model, repeated per seed.
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

void write_gradcheck_report(std::ostream& out, const GradcheckReport& report);

}  // namespace tunet
