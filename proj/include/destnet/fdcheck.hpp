#pragma once

#include <functional>
#include <string>
#include <vector>

#include "destnet/tensor.hpp"

namespace destnet {

/// Relative error between analytic and numeric derivatives. Pairs whose
/// magnitudes are both below 1e-6 compare as 0 (true zero gradients drown in
/// finite-difference round-off otherwise).
double grad_rel_err(double analytic, double numeric);

struct FdProbe {
  std::string name;
  Tensor tensor;  // must require grad
};

struct FdOutcome {
  double worst_rel = 0.0;
  std::string worst_at;
  int checked = 0;
};

/// Central finite differences against the reverse-mode gradient.
///
/// `forward_loss` must rebuild the computation from the probe tensors' current
/// values and return a scalar; it must be deterministic (re-seed any internal
/// randomness per call). Gradients are taken once via a recording pass, then
/// each probed entry is perturbed by +/-eps with non-recording evaluations.
/// At most `samples_per_tensor` entries per probe are checked, chosen by a
/// seeded pick so runs are reproducible.
FdOutcome fd_check(const std::function<Tensor()>& forward_loss,
                   const std::vector<FdProbe>& probes, int samples_per_tensor = 8,
                   double eps = 1e-5, std::uint64_t pick_seed = 0x5eed);

}  // namespace destnet
