#pragma once

#include <vector>

#include "msrl/relevance.hpp"

namespace msrl {

// Self-paced schedule state. lambda1 paces visual relevance, lambda2 textual,
// gamma scales the across-group balance term; all capped at 1.
struct ScheduleState {
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  double gamma = 0.5;
  double tau = 0.1;     // threshold trade-off on gamma
  double mu1 = 0.1;     // lambda1 stride
  double mu2 = 0.1;     // lambda2 stride
  double eta = 1.1;     // gamma growth rate
  double margin = 0.1;  // ranking-loss margin
  int update_period = 1000;  // iterations between schedule updates

  void validate() const;
};

// Per-group binary selection matrices aligned with a RelevanceMatrixSet.
// Sentinel entries are always 0.
struct PrioritySet {
  int anchors = 0;
  int negatives = 0;
  std::vector<Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>> select;

  int num_groups() const { return static_cast<int>(select.size()); }
  bool selected(int g, int i, int j) const { return select[g](i, j) != 0; }
  long group_count(int g) const { return select[g].cast<long>().sum(); }
  long total() const;
  std::vector<long> counts_per_group() const;

  static PrioritySet zeros(int n_groups, int anchors, int negatives);
};

// Entry selected iff valid and R < lambda_alpha + tau * gamma (strict).
PrioritySet update_priorities(const RelevanceMatrixSet& relevance, const ScheduleState& state);

// lambda_* += mu_*/(M*M') * sum over valid entries of that modality of
// max(0, 1 - R), capped at 1. Call on update-period boundaries only.
void update_lambda(ScheduleState& state, const RelevanceMatrixSet& relevance, int anchors,
                   int negatives);

// gamma <- min(1, eta * gamma).
void update_gamma(ScheduleState& state);

// Number of selected entries across groups (the l1 norm of a binary set).
long l1_norm(const PrioritySet& priorities);

// Sum over groups of the Frobenius norm of the binary matrix, i.e.
// sum_g sqrt(count_g). Larger for balanced selections at equal totals.
double group_frobenius_norm(const PrioritySet& priorities);

}  // namespace msrl
