#include "msrl/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "msrl/errors.hpp"

namespace msrl {

EvalSet build_eval_set(const GroupCatalog& catalog,
                       const std::vector<std::vector<int>>& eval_members, int distractors,
                       SplitRng& rng) {
  if (static_cast<int>(eval_members.size()) != catalog.num_groups())
    throw ValidationError("build_eval_set: member list does not match catalog groups");
  EvalSet set;
  set.catalog = &catalog;
  set.n_groups = catalog.num_groups();
  for (int g = 0; g < catalog.num_groups(); ++g) {
    const auto& group = catalog.groups[g];
    for (int member : eval_members[g]) {
      EvalItemRef item;
      item.group = g;
      item.member = member;
      const auto image = group.pairs[member].region.image_id;
      for (std::size_t m = 0; m < group.pairs.size(); ++m)
        if (group.pairs[m].region.image_id == image)
          item.candidate_members.push_back(static_cast<int>(m));
      if (item.candidate_members.size() < 2) {
        // Singleton image: same-group distractors instead.
        item.candidate_members.assign(1, member);
        std::vector<int> pool;
        for (std::size_t m = 0; m < group.pairs.size(); ++m)
          if (static_cast<int>(m) != member) pool.push_back(static_cast<int>(m));
        const int take = std::min<int>(distractors, static_cast<int>(pool.size()));
        for (int t = 0; t < take; ++t) {
          const auto pick = t + static_cast<int>(rng.next_below(pool.size() - t));
          std::swap(pool[t], pool[pick]);
          item.candidate_members.push_back(pool[t]);
        }
      }
      // Shuffle so the ground truth sits at a seeded position.
      for (std::size_t t = 0; t + 1 < item.candidate_members.size(); ++t) {
        const auto pick =
            t + rng.next_below(item.candidate_members.size() - t);
        std::swap(item.candidate_members[t], item.candidate_members[pick]);
      }
      const auto self = std::find(item.candidate_members.begin(), item.candidate_members.end(),
                                  member);
      item.ground_truth = static_cast<int>(self - item.candidate_members.begin());
      set.items.push_back(std::move(item));
    }
  }
  return set;
}

EvalOutcome evaluate(const EncoderParams& params, const EvalSet& set) {
  EvalOutcome out;
  out.per_group.assign(set.n_groups, 0.0);
  out.items_per_group.assign(set.n_groups, 0);
  std::vector<long> correct(set.n_groups, 0);
  for (const auto& item : set.items) {
    if (item.candidate_members.empty()) throw ValidationError("evaluate: empty candidate list");
    const auto& group = set.catalog->groups[item.group];
    const ModularFeatures expr = encode_expression(group.pairs[item.member].expression, params);
    int best = 0;
    double best_score = 0;
    for (std::size_t c = 0; c < item.candidate_members.size(); ++c) {
      const auto& region = group.pairs[item.candidate_members[c]].region;
      const ModularFeatures rf = encode_region(region, expr.subject, params);
      const double score = match_score(rf, expr, params);
      if (c == 0 || score > best_score) {  // strict >: ties keep the lowest index
        best_score = score;
        best = static_cast<int>(c);
      }
    }
    ++out.items_per_group[item.group];
    if (best == item.ground_truth) ++correct[item.group];
  }
  long total_items = 0, total_correct = 0;
  for (int g = 0; g < set.n_groups; ++g) {
    total_items += out.items_per_group[g];
    total_correct += correct[g];
    out.per_group[g] = out.items_per_group[g] == 0
                           ? 0.0
                           : static_cast<double>(correct[g]) / out.items_per_group[g];
  }
  if (total_items == 0) throw ValidationError("evaluate: empty eval set");
  out.overall = static_cast<double>(total_correct) / total_items;
  return out;
}

double accuracy(const EncoderParams& params, const EvalSet& set) {
  return evaluate(params, set).overall;
}

GroupAccuracy group_accuracy(const EncoderParams& params, const EvalSet& set) {
  const EvalOutcome out = evaluate(params, set);
  GroupAccuracy ga;
  double sum = 0;
  int populated = 0;
  for (int g = 0; g < set.n_groups; ++g) {
    if (out.items_per_group[g] == 0) continue;
    ga.per_group.push_back(out.per_group[g]);
    sum += out.per_group[g];
    ++populated;
  }
  if (populated == 0) throw ValidationError("group_accuracy: no populated groups");
  ga.ave = sum / populated;
  double var = 0;
  for (double acc : ga.per_group) var += (acc - ga.ave) * (acc - ga.ave);
  ga.std_dev = std::sqrt(var / populated);
  return ga;
}

std::pair<double, double> selection_cv(const std::vector<long>& counts) {
  if (counts.empty()) throw ValidationError("selection_cv: no groups");
  double mean = 0;
  for (long c : counts) mean += static_cast<double>(c);
  mean /= counts.size();
  if (mean == 0) throw ValidationError("selection_cv: zero mean count");
  double var = 0;
  for (long c : counts) var += (c - mean) * (c - mean);
  const double cv = 100.0 * std::sqrt(var / counts.size()) / mean;
  return {mean, cv};
}

}  // namespace msrl
