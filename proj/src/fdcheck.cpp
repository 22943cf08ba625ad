#include "destnet/fdcheck.hpp"

#include <cmath>

#include "destnet/rng.hpp"

namespace destnet {

double grad_rel_err(double analytic, double numeric) {
  const double mag = std::max(std::abs(analytic), std::abs(numeric));
  if (mag < 1e-6) return 0.0;
  return std::abs(analytic - numeric) / mag;
}

FdOutcome fd_check(const std::function<Tensor()>& forward_loss,
                   const std::vector<FdProbe>& probes, int samples_per_tensor,
                   double eps, std::uint64_t pick_seed) {
  for (const FdProbe& probe : probes) {
    if (!probe.tensor.requires_grad()) {
      throw UsageError("fd_check probe '" + probe.name + "' does not require grad");
    }
    probe.tensor.zero_grad();
  }

  Graph graph;
  {
    GraphScope scope(graph);
    Tensor loss = forward_loss();
    graph.backward(loss);
  }
  std::vector<Array> analytic;
  analytic.reserve(probes.size());
  for (const FdProbe& probe : probes) {
    analytic.push_back(probe.tensor.has_grad() ? probe.tensor.grad()
                                               : Array::Zero(probe.tensor.numel()));
  }

  Rng pick(pick_seed);
  FdOutcome outcome;
  for (size_t pi = 0; pi < probes.size(); ++pi) {
    const Tensor& t = probes[pi].tensor;
    const Index total = t.numel();
    std::vector<Index> indices;
    if (total <= samples_per_tensor) {
      for (Index i = 0; i < total; ++i) indices.push_back(i);
    } else {
      for (int i = 0; i < samples_per_tensor; ++i) {
        indices.push_back(pick.uniform_int(0, total - 1));
      }
    }
    for (Index idx : indices) {
      double& w = t.impl()->value[idx];
      const double saved = w;
      w = saved + eps;
      const double up = forward_loss().scalar();
      w = saved - eps;
      const double down = forward_loss().scalar();
      w = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double rel = grad_rel_err(analytic[pi][idx], numeric);
      ++outcome.checked;
      if (rel > outcome.worst_rel) {
        outcome.worst_rel = rel;
        outcome.worst_at = probes[pi].name + "[" + std::to_string(idx) + "] analytic=" +
                           std::to_string(analytic[pi][idx]) + " numeric=" +
                           std::to_string(numeric);
      }
    }
  }
  return outcome;
}

}  // namespace destnet
