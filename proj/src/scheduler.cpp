#include "msrl/scheduler.hpp"

#include <cmath>

#include "msrl/errors.hpp"

namespace msrl {

void ScheduleState::validate() const {
  if (lambda1 < 0 || lambda1 > 1 || lambda2 < 0 || lambda2 > 1 || gamma < 0 || gamma > 1)
    throw ValidationError("schedule: lambda1, lambda2, gamma must lie in [0, 1]");
  if (tau <= 0 || mu1 <= 0 || mu2 <= 0 || eta <= 0 || margin <= 0)
    throw ValidationError("schedule: tau, mu1, mu2, eta, margin must be positive");
  if (update_period < 1) throw ValidationError("schedule: update_period must be positive");
}

long PrioritySet::total() const {
  long n = 0;
  for (int g = 0; g < num_groups(); ++g) n += group_count(g);
  return n;
}

std::vector<long> PrioritySet::counts_per_group() const {
  std::vector<long> counts(num_groups());
  for (int g = 0; g < num_groups(); ++g) counts[g] = group_count(g);
  return counts;
}

PrioritySet PrioritySet::zeros(int n_groups, int anchors, int negatives) {
  PrioritySet p;
  p.anchors = anchors;
  p.negatives = negatives;
  p.select.assign(n_groups, Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(
                                anchors, negatives));
  return p;
}

PrioritySet update_priorities(const RelevanceMatrixSet& relevance, const ScheduleState& state) {
  PrioritySet out = PrioritySet::zeros(relevance.num_groups(), relevance.anchors,
                                       relevance.negatives);
  relevance.for_each_valid([&](int g, int i, int j, double r, bool visual) {
    const double threshold = (visual ? state.lambda1 : state.lambda2) + state.tau * state.gamma;
    if (r < threshold) out.select[g](i, j) = 1;
  });
  return out;
}

void update_lambda(ScheduleState& state, const RelevanceMatrixSet& relevance, int anchors,
                   int negatives) {
  double counter_visual = 0, counter_textual = 0;
  relevance.for_each_valid([&](int, int, int, double r, bool visual) {
    (visual ? counter_visual : counter_textual) += std::max(0.0, 1.0 - r);
  });
  const double scale = static_cast<double>(anchors) * static_cast<double>(negatives);
  state.lambda1 = std::min(1.0, state.lambda1 + state.mu1 / scale * counter_visual);
  state.lambda2 = std::min(1.0, state.lambda2 + state.mu2 / scale * counter_textual);
}

void update_gamma(ScheduleState& state) {
  state.gamma = std::min(1.0, state.eta * state.gamma);
}

long l1_norm(const PrioritySet& priorities) { return priorities.total(); }

double group_frobenius_norm(const PrioritySet& priorities) {
  double sum = 0;
  for (int g = 0; g < priorities.num_groups(); ++g)
    sum += std::sqrt(static_cast<double>(priorities.group_count(g)));
  return sum;
}

}  // namespace msrl
