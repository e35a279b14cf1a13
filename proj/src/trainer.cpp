#include "msrl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include "msrl/errors.hpp"

namespace msrl {

namespace {

const std::map<std::string, Variant>& variant_table() {
  static const std::map<std::string, Variant> table = {
      {"msrl", Variant::kMsrl},
      {"msrl-wg", Variant::kMsrlWg},
      {"msrl-ag", Variant::kMsrlAg},
      {"randsel-wg", Variant::kRandselWg},
      {"randsel-ag", Variant::kRandselAg},
      {"per-image-baseline", Variant::kPerImageBaseline},
      {"group-random", Variant::kGroupRandom},
  };
  return table;
}

MaskScope scope_for(Variant v) {
  return v == Variant::kPerImageBaseline ? MaskScope::kSameImage : MaskScope::kSameGroup;
}

bool uses_l1_term(Variant v) {
  return v == Variant::kMsrl || v == Variant::kMsrlWg || v == Variant::kRandselWg ||
         v == Variant::kRandselAg;
}

bool uses_group_term(Variant v) {
  return v == Variant::kMsrl || v == Variant::kMsrlAg || v == Variant::kRandselWg ||
         v == Variant::kRandselAg;
}

bool all_ones_selection(Variant v) {
  return v == Variant::kPerImageBaseline || v == Variant::kGroupRandom;
}

}  // namespace

const char* variant_name(Variant v) {
  for (const auto& [name, value] : variant_table())
    if (value == v) return name.c_str();
  throw ValidationError("unknown variant value");
}

Variant parse_variant(const std::string& name) {
  const auto& table = variant_table();
  const auto it = table.find(name);
  if (it == table.end()) {
    std::ostringstream msg;
    msg << "unknown variant '" << name << "'; valid:";
    for (const auto& [valid, _] : table) msg << " " << valid;
    throw UsageError(msg.str());
  }
  return it->second;
}

std::vector<std::string> variant_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : variant_table()) names.push_back(name);
  return names;
}

double learning_rate_at(const LrSchedule& schedule, long iteration) {
  if (iteration < schedule.warmup_iterations) return schedule.initial;
  const long halvings = (iteration - schedule.warmup_iterations) / schedule.halving_period + 1;
  return schedule.initial * std::pow(0.5, static_cast<double>(halvings));
}

void TrainerConfig::validate() const {
  if (iterations < 0) throw ValidationError("trainer: negative iteration count");
  if (anchors < 1) throw ValidationError("trainer: anchors must be positive");
  if (negatives < anchors || negatives % anchors != 0)
    throw ValidationError("trainer: negatives must be a positive multiple of anchors");
  if (split_ratio < 0 || split_ratio > 1) throw ValidationError("trainer: split_ratio in [0,1]");
  if (lr.initial <= 0 || lr.warmup_iterations < 0 || lr.halving_period < 1)
    throw ValidationError("trainer: bad learning-rate schedule");
  if (snapshot_period < 1) throw ValidationError("trainer: snapshot_period must be positive");
  if (dropout < 0 || dropout >= 1) throw ValidationError("trainer: dropout in [0,1)");
  if (eval_fraction < 0 || eval_fraction > 0.9)
    throw ValidationError("trainer: eval_fraction in [0, 0.9]");
  if (eval_distractors < 1) throw ValidationError("trainer: eval_distractors must be positive");
  schedule.validate();
}

double triplet_margin(double score_pos, double score_neg, double delta) {
  return std::max(0.0, delta + score_neg - score_pos);
}

namespace {

double regularizer_value(const PrioritySet* priorities, const ScheduleState& s, Variant v) {
  if (priorities == nullptr) return 0.0;  // all-ones baselines run the plain ranking loss
  double reg = 0;
  if (uses_l1_term(v)) reg += 0.5 * (s.lambda1 + s.lambda2) * static_cast<double>(l1_norm(*priorities));
  if (uses_group_term(v)) reg += s.gamma * group_frobenius_norm(*priorities);
  return reg;
}

struct ComboRef {
  int anchor;
  int column;
};

std::vector<ComboRef> selected_combos(const TripletBatch& batch, const GroupCatalog& catalog,
                                      const PrioritySet* priorities, MaskScope scope) {
  std::vector<ComboRef> combos;
  for (int i = 0; i < batch.num_anchors(); ++i) {
    const int g = batch.anchors[i].group;
    for (int j = 0; j < batch.num_negatives(); ++j) {
      if (!combo_valid(batch, catalog, scope, i, j)) continue;
      if (priorities != nullptr && !priorities->selected(g, i, j)) continue;
      combos.push_back({i, j});
    }
  }
  return combos;
}

}  // namespace

ObjectiveResult msrl_objective(const TripletBatch& batch, const GroupCatalog& catalog,
                               const PrioritySet* priorities, const ScheduleState& schedule,
                               const EncoderParams& params, Variant variant,
                               const DropoutSpec& dropout, bool want_gradients) {
  if (priorities != nullptr &&
      (priorities->anchors != batch.num_anchors() || priorities->negatives != batch.num_negatives() ||
       priorities->num_groups() != catalog.num_groups()))
    throw ValidationError("msrl_objective: priorities do not align with the batch");

  const MaskScope scope = scope_for(variant);
  const std::vector<ComboRef> combos = selected_combos(batch, catalog, priorities, scope);

  ObjectiveResult result;
  result.selected_terms = static_cast<long>(combos.size());
  const double reg = regularizer_value(priorities, schedule, variant);

  const auto anchor_pair = [&](int i) -> const MatchedPair& {
    return catalog.pair_at(batch.anchors[i].group, batch.anchors[i].member);
  };
  const auto negative_pair = [&](int j) -> const MatchedPair& {
    const NegativeRef& n = batch.negative_at(j);
    return catalog.pair_at(n.group, n.member);
  };

  if (!want_gradients) {
    // Value-only path on the plain encoders (finite differences, snapshots).
    std::vector<std::optional<ModularFeatures>> expr(batch.num_anchors());
    std::vector<std::optional<ModularFeatures>> region(batch.num_anchors());
    std::vector<double> pos_score(batch.num_anchors(),
                                  std::numeric_limits<double>::quiet_NaN());
    std::vector<std::optional<ModularFeatures>> neg_expr(batch.num_negatives());
    const auto anchor_features = [&](int i) {
      if (!expr[i]) {
        expr[i] = encode_expression(anchor_pair(i).expression, params);
        region[i] = encode_region(anchor_pair(i).region, expr[i]->subject, params);
        pos_score[i] = match_score(*region[i], *expr[i], params);
      }
    };
    for (const ComboRef combo : combos) {
      anchor_features(combo.anchor);
      const NegativeRef& n = batch.negative_at(combo.column);
      double neg_score;
      if (n.is_expression) {
        if (!neg_expr[combo.column])
          neg_expr[combo.column] = encode_expression(negative_pair(combo.column).expression, params);
        neg_score = match_score(*region[combo.anchor], *neg_expr[combo.column], params);
      } else {
        const ModularFeatures nf = encode_region(negative_pair(combo.column).region,
                                                 expr[combo.anchor]->subject, params);
        neg_score = match_score(nf, *expr[combo.anchor], params);
      }
      result.hinge_sum += triplet_margin(pos_score[combo.anchor], neg_score, schedule.margin);
    }
    result.total = result.hinge_sum - reg;
    return result;
  }

  ad::Tape tape;
  const TapedParams tp = register_params(tape, params);
  std::vector<std::optional<TapedFeatures>> expr(batch.num_anchors());
  std::vector<std::optional<TapedFeatures>> region(batch.num_anchors());
  std::vector<ad::Var> pos_score(batch.num_anchors());
  std::vector<std::optional<TapedFeatures>> neg_expr(batch.num_negatives());

  const auto anchor_features = [&](int i) {
    if (!expr[i]) {
      expr[i] = taped_encode_expression(tape, tp, params, anchor_pair(i).expression, dropout);
      region[i] = taped_encode_region(tape, tp, params, anchor_pair(i).region, expr[i]->subject);
      pos_score[i] = taped_match_score(tape, tp, region[i]->concatenated, expr[i]->concatenated);
    }
  };

  ad::Var hinge_root;
  for (const ComboRef combo : combos) {
    anchor_features(combo.anchor);
    const NegativeRef& n = batch.negative_at(combo.column);
    ad::Var neg_score;
    if (n.is_expression) {
      if (!neg_expr[combo.column])
        neg_expr[combo.column] = taped_encode_expression(
            tape, tp, params, negative_pair(combo.column).expression, dropout);
      neg_score = taped_match_score(tape, tp, region[combo.anchor]->concatenated,
                                    neg_expr[combo.column]->concatenated);
    } else {
      const TapedFeatures nf = taped_encode_region(tape, tp, params,
                                                   negative_pair(combo.column).region,
                                                   expr[combo.anchor]->subject);
      neg_score = taped_match_score(tape, tp, nf.concatenated, expr[combo.anchor]->concatenated);
    }
    ad::Var q = tape.relu(tape.add_scalar(tape.sub(neg_score, pos_score[combo.anchor]),
                                          schedule.margin));
    hinge_root = hinge_root.valid() ? tape.add(hinge_root, q) : q;
  }

  const auto blocks = param_blocks(params);
  result.gradients.blocks.resize(blocks.size());
  if (hinge_root.valid()) {
    result.hinge_sum = tape.scalar(hinge_root);
    tape.backward(hinge_root);
    for (std::size_t b = 0; b < blocks.size(); ++b)
      result.gradients.blocks[b] = tape.gradient(tp.blocks[b].second);
  } else {
    for (std::size_t b = 0; b < blocks.size(); ++b)
      result.gradients.blocks[b] = Mat::Zero(blocks[b].mat->rows(), blocks[b].mat->cols());
  }
  result.total = result.hinge_sum - reg;
  return result;
}

AdamState AdamState::zeros_like(const EncoderParams& params) {
  AdamState state;
  for (const auto& block : param_blocks(params)) {
    state.m.push_back(Mat::Zero(block.mat->rows(), block.mat->cols()));
    state.v.push_back(Mat::Zero(block.mat->rows(), block.mat->cols()));
  }
  return state;
}

void adam_step(EncoderParams& params, const GradientSet& grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
  auto blocks = param_blocks(params);
  if (grads.blocks.size() != blocks.size() || state.m.size() != blocks.size())
    throw ValidationError("adam_step: gradient/state block mismatch");
  for (std::size_t b = 0; b < blocks.size(); ++b)
    if (!grads.blocks[b].allFinite())
      throw RuntimeFailure(std::string("adam_step: non-finite gradient in block ") +
                           blocks[b].name);
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const Mat& g = grads.blocks[b];
    state.m[b] = cfg.beta1 * state.m[b] + (1.0 - cfg.beta1) * g;
    state.v[b] = cfg.beta2 * state.v[b] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const Mat m_hat = state.m[b] / bc1;
    const Mat v_hat = state.v[b] / bc2;
    const Mat denom = (v_hat.array().sqrt() + cfg.epsilon).matrix();
    *blocks[b].mat -= lr * m_hat.cwiseQuotient(denom);
    if (!blocks[b].mat->allFinite())
      throw RuntimeFailure(std::string("adam_step: non-finite parameters in block ") +
                           blocks[b].name);
  }
}

SplitView split_catalog(const GroupCatalog& catalog, double eval_fraction) {
  SplitView sv;
  sv.train.catalog = &catalog;
  sv.train.members.resize(catalog.num_groups());
  sv.eval_members.resize(catalog.num_groups());
  for (int g = 0; g < catalog.num_groups(); ++g) {
    const auto& pairs = catalog.groups[g].pairs;
    const int n = static_cast<int>(pairs.size());
    int cut = n;
    if (eval_fraction > 0) {
      cut = n - static_cast<int>(std::ceil(eval_fraction * n));
      // Never split an image across the train/eval boundary.
      while (cut > 0 && cut < n &&
             pairs[cut - 1].region.image_id == pairs[cut].region.image_id)
        --cut;
      if (cut < 2)
        throw ValidationError("split_catalog: group '" + catalog.groups[g].label +
                              "' too small for the requested eval fraction");
    }
    for (int m = 0; m < cut; ++m) sv.train.members[g].push_back(m);
    if (eval_fraction > 0)
      for (int m = cut; m < n; ++m) sv.eval_members[g].push_back(m);
    else
      for (int m = 0; m < n; ++m) sv.eval_members[g].push_back(m);
  }
  return sv;
}

namespace {

PrioritySet threshold_selection(const RelevanceMatrixSet& relevance, const ScheduleState& schedule) {
  return update_priorities(relevance, schedule);
}

PrioritySet randsel_wg_selection(const RelevanceMatrixSet& relevance, const ScheduleState& schedule,
                                 SplitRng& rng) {
  const PrioritySet paced = threshold_selection(relevance, schedule);
  PrioritySet out = PrioritySet::zeros(relevance.num_groups(), relevance.anchors,
                                       relevance.negatives);
  for (int g = 0; g < relevance.num_groups(); ++g) {
    std::vector<std::pair<int, int>> valid;
    for (int i = 0; i < relevance.anchors; ++i)
      for (int j = 0; j < relevance.negatives; ++j)
        if (relevance.is_valid(g, i, j)) valid.emplace_back(i, j);
    const long count = paced.group_count(g);
    for (long t = 0; t < count; ++t) {
      const auto pick = t + static_cast<long>(rng.next_below(valid.size() - t));
      std::swap(valid[t], valid[pick]);
      out.select[g](valid[t].first, valid[t].second) = 1;
    }
  }
  return out;
}

PrioritySet randsel_ag_selection(const RelevanceMatrixSet& relevance, const ScheduleState& schedule,
                                 SplitRng& rng) {
  const PrioritySet paced = threshold_selection(relevance, schedule);
  const long total = paced.total();
  const int n_groups = relevance.num_groups();

  std::vector<std::vector<std::tuple<double, int, int>>> ranked(n_groups);
  for (int g = 0; g < n_groups; ++g) {
    for (int i = 0; i < relevance.anchors; ++i)
      for (int j = 0; j < relevance.negatives; ++j)
        if (relevance.is_valid(g, i, j)) ranked[g].emplace_back(relevance.at(g, i, j), i, j);
    std::sort(ranked[g].begin(), ranked[g].end());  // ascending relevance, then (i, j)
  }

  // Total count preserved; group quotas drawn uniformly among groups with
  // remaining capacity.
  std::vector<long> quota(n_groups, 0);
  for (long t = 0; t < total; ++t) {
    std::vector<int> open;
    for (int g = 0; g < n_groups; ++g)
      if (quota[g] < static_cast<long>(ranked[g].size())) open.push_back(g);
    if (open.empty()) break;
    ++quota[open[rng.next_below(open.size())]];
  }

  PrioritySet out = PrioritySet::zeros(n_groups, relevance.anchors, relevance.negatives);
  for (int g = 0; g < n_groups; ++g)
    for (long t = 0; t < quota[g]; ++t)
      out.select[g](std::get<1>(ranked[g][t]), std::get<2>(ranked[g][t])) = 1;
  return out;
}

PrioritySet all_valid_selection(const RelevanceMatrixSet& relevance) {
  PrioritySet out = PrioritySet::zeros(relevance.num_groups(), relevance.anchors,
                                       relevance.negatives);
  relevance.for_each_valid([&](int g, int i, int j, double, bool) { out.select[g](i, j) = 1; });
  return out;
}

PrioritySet compute_selection(const RelevanceMatrixSet& relevance, const ScheduleState& schedule,
                              Variant variant, SplitRng& randsel_rng) {
  switch (variant) {
    case Variant::kMsrl:
    case Variant::kMsrlWg:
    case Variant::kMsrlAg:
      return threshold_selection(relevance, schedule);
    case Variant::kRandselWg:
      return randsel_wg_selection(relevance, schedule, randsel_rng);
    case Variant::kRandselAg:
      return randsel_ag_selection(relevance, schedule, randsel_rng);
    case Variant::kPerImageBaseline:
    case Variant::kGroupRandom:
      return all_valid_selection(relevance);
  }
  throw ValidationError("compute_selection: bad variant");
}

MetricsSnapshot make_snapshot(long iteration, double loss, const RelevanceMatrixSet& relevance,
                              const PrioritySet& priorities, const ScheduleState& schedule,
                              const EncoderParams& params, const EvalSet& eval_set) {
  MetricsSnapshot ms;
  ms.iteration = iteration;
  ms.loss = loss;
  ms.mean_r_all = relevance.masked_mean();
  double sel_sum = 0;
  long sel_count = 0;
  relevance.for_each_valid([&](int g, int i, int j, double r, bool) {
    if (priorities.selected(g, i, j)) {
      sel_sum += r;
      ++sel_count;
    }
  });
  ms.mean_r_selected =
      sel_count == 0 ? std::numeric_limits<double>::quiet_NaN() : sel_sum / sel_count;
  ms.selected_total = priorities.total();
  ms.selected_per_group = priorities.counts_per_group();
  ms.lambda1 = schedule.lambda1;
  ms.lambda2 = schedule.lambda2;
  ms.gamma = schedule.gamma;
  const EvalOutcome eval = evaluate(params, eval_set);
  ms.val_acc = eval.overall;
  ms.val_acc_per_group = eval.per_group;
  return ms;
}

}  // namespace

TrainResult train(const GroupCatalog& catalog, const TrainerConfig& cfg, const TrainState* resume,
                  TrainHooks* hooks) {
  cfg.validate();
  catalog.validate();
  const SplitView split = split_catalog(catalog, cfg.eval_fraction);
  SplitRng eval_rng(cfg.seed, "eval");
  const EvalSet eval_set =
      build_eval_set(catalog, split.eval_members, cfg.eval_distractors, eval_rng);

  const MaskScope scope = scope_for(cfg.variant);
  BatchConfig bcfg;
  bcfg.anchors = cfg.anchors;
  bcfg.negatives = cfg.negatives;
  bcfg.split_ratio = cfg.split_ratio;
  bcfg.iou_filter = cfg.iou_filter;
  bcfg.same_image_negatives = cfg.variant == Variant::kPerImageBaseline;

  const bool lambda_updates = cfg.variant != Variant::kMsrlAg;   // pacing frozen for msrl-ag
  const bool gamma_updates = cfg.variant != Variant::kMsrlWg;    // across-group term removed

  TrainResult result;
  TrainState st;
  if (resume != nullptr) {
    st = *resume;
    if (st.priorities.anchors != cfg.anchors || st.priorities.negatives != cfg.negatives ||
        st.priorities.num_groups() != catalog.num_groups())
      throw ValidationError("train: resume state does not match catalog/config shapes");
  } else {
    st.schedule = cfg.schedule;
    if (cfg.variant == Variant::kMsrlWg) st.schedule.gamma = 0.0;
    SplitRng param_rng(cfg.seed, "params");
    EncoderDims dims;
    dims.d = static_cast<int>(catalog.groups[0].pairs[0].expression.word_embeddings.cols());
    dims.c = static_cast<int>(catalog.groups[0].pairs[0].region.grid_features.rows());
    dims.grid_cells = static_cast<int>(catalog.groups[0].pairs[0].region.grid_features.cols());
    st.params = init_encoder_params(dims, cfg.init, param_rng);
    st.adam = AdamState::zeros_like(st.params);
    st.batch_rng = SplitRng(cfg.seed, "batches");
    st.randsel_rng = SplitRng(cfg.seed, "randsel");
    st.dropout_rng = SplitRng(cfg.seed, "dropout");
    st.iteration = 0;

    // Initialization pass: priorities come from an initialization batch, and
    // the iteration-0 snapshot echoes the starting state.
    const TripletBatch batch = construct_batch(split.train, st.batch_rng, bcfg);
    const PairFeatureTable features = compute_pair_features(batch, catalog, st.params, scope);
    const RelevanceMatrixSet relevance = relevance_matrices(
        batch, catalog, features, cfg.relevance_mode, cfg.alpha_policy, scope);
    st.priorities = compute_selection(relevance, st.schedule, cfg.variant, st.randsel_rng);
    const ObjectiveResult obj = msrl_objective(
        batch, catalog, all_ones_selection(cfg.variant) ? nullptr : &st.priorities, st.schedule,
        st.params, cfg.variant, {}, /*want_gradients=*/false);
    result.metrics.push_back(make_snapshot(0, obj.total, relevance, st.priorities, st.schedule,
                                           st.params, eval_set));
  }

  for (long it = st.iteration + 1; it <= cfg.iterations; ++it) {
    const TripletBatch batch = construct_batch(split.train, st.batch_rng, bcfg);

    DropoutSpec dropout;
    if (cfg.dropout > 0) {
      dropout.rate = cfg.dropout;
      dropout.rng = &st.dropout_rng;
    }
    const PrioritySet* step_priorities =
        all_ones_selection(cfg.variant) ? nullptr : &st.priorities;
    const ObjectiveResult obj = msrl_objective(batch, catalog, step_priorities, st.schedule,
                                               st.params, cfg.variant, dropout,
                                               /*want_gradients=*/true);
    if (!std::isfinite(obj.total) || std::abs(obj.total) > 1e6)
      throw RuntimeFailure("train: objective diverged at iteration " + std::to_string(it));
    adam_step(st.params, obj.gradients, st.adam, learning_rate_at(cfg.lr, it - 1));

    const PairFeatureTable features = compute_pair_features(batch, catalog, st.params, scope);
    const RelevanceMatrixSet relevance = relevance_matrices(
        batch, catalog, features, cfg.relevance_mode, cfg.alpha_policy, scope);
    PrioritySet fresh = compute_selection(relevance, st.schedule, cfg.variant, st.randsel_rng);
    if (hooks != nullptr && hooks->on_alternation) hooks->on_alternation(it, st.priorities, fresh);
    st.priorities = std::move(fresh);

    if (it % st.schedule.update_period == 0) {
      if (lambda_updates) update_lambda(st.schedule, relevance, cfg.anchors, cfg.negatives);
      if (gamma_updates) update_gamma(st.schedule);
    }
    if (hooks != nullptr && hooks->on_relevance) hooks->on_relevance(it, relevance, st.schedule);

    st.iteration = it;
    if (it % cfg.snapshot_period == 0)
      result.metrics.push_back(make_snapshot(it, obj.total, relevance, st.priorities, st.schedule,
                                             st.params, eval_set));
    if (hooks != nullptr && hooks->checkpoint_at == it && hooks->on_checkpoint)
      hooks->on_checkpoint(st);
  }
  result.state = std::move(st);
  return result;
}

}  // namespace msrl
