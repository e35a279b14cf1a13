#pragma once

#include <utility>
#include <vector>

#include "msrl/encoders.hpp"
#include "msrl/rng.hpp"

namespace msrl {

// One row of the training metrics stream. mean_r_selected is NaN when the
// current priorities select nothing.
struct MetricsSnapshot {
  long iteration = 0;
  double loss = 0;
  double mean_r_all = 0;
  double mean_r_selected = 0;
  long selected_total = 0;
  std::vector<long> selected_per_group;
  double lambda1 = 0, lambda2 = 0, gamma = 0;
  double val_acc = 0;
  std::vector<double> val_acc_per_group;
};

// Retrieval item: a query expression and candidate regions from its group.
// Members index into the catalog group; ground_truth indexes candidates.
struct EvalItemRef {
  int group = -1;
  int member = -1;
  std::vector<int> candidate_members;
  int ground_truth = -1;
};

struct EvalSet {
  const GroupCatalog* catalog = nullptr;
  std::vector<EvalItemRef> items;
  int n_groups = 0;
};

// Candidates are the same-image regions of the query's group; singleton
// images fall back to `distractors` same-group members drawn without
// replacement. Candidate order is shuffled so the ground truth lands at a
// seeded position.
EvalSet build_eval_set(const GroupCatalog& catalog,
                       const std::vector<std::vector<int>>& eval_members, int distractors,
                       SplitRng& rng);

struct EvalOutcome {
  double overall = 0;
  std::vector<double> per_group;
  std::vector<long> items_per_group;
};

// Argmax-F retrieval over candidates, ties broken by lowest candidate index.
EvalOutcome evaluate(const EncoderParams& params, const EvalSet& set);
double accuracy(const EncoderParams& params, const EvalSet& set);

struct GroupAccuracy {
  std::vector<double> per_group;
  double ave = 0;
  double std_dev = 0;  // population standard deviation over groups
};
GroupAccuracy group_accuracy(const EncoderParams& params, const EvalSet& set);

// (mean, CV%) of per-group counts; CV = 100 * population std / mean.
// Throws on zero mean.
std::pair<double, double> selection_cv(const std::vector<long>& counts);

}  // namespace msrl
