#pragma once

#include <functional>
#include <optional>
#include <string>

#include "msrl/metrics.hpp"
#include "msrl/relevance.hpp"
#include "msrl/scheduler.hpp"

namespace msrl {

// Training variants, 1:1 with the comparison methods:
//   msrl               full schema (paced selection + both regularizers)
//   msrl-wg            no across-group term (gamma pinned to 0)
//   msrl-ag            no within-group pacing (lambdas frozen, l1 term dropped)
//   randsel-wg         per-group random selection of the paced counts
//   randsel-ag         relevance-ranked selection with random group quotas
//   per-image-baseline same-image negatives, every pair selected
//   group-random       group negatives, every pair selected
enum class Variant {
  kMsrl,
  kMsrlWg,
  kMsrlAg,
  kRandselWg,
  kRandselAg,
  kPerImageBaseline,
  kGroupRandom,
};

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);  // throws UsageError listing valid names
std::vector<std::string> variant_names();

struct LrSchedule {
  double initial = 4e-4;
  long warmup_iterations = 8000;  // constant-rate warm-up
  long halving_period = 8000;     // halved every period after warm-up
};
double learning_rate_at(const LrSchedule& schedule, long iteration);  // 0-based

struct TrainerConfig {
  Variant variant = Variant::kMsrl;
  long iterations = 3000;
  int anchors = 10;     // M
  int negatives = 60;   // M', multiple of M
  double split_ratio = 0.5;
  LrSchedule lr;
  ScheduleState schedule;  // initial paces plus constants, including the margin
  long snapshot_period = 100;
  double dropout = 0.0;
  RelevanceMode relevance_mode = RelevanceMode::kCosine01;
  AlphaPolicy alpha_policy = AlphaPolicy::kPerPair;
  IouFilterMode iou_filter = IouFilterMode::kPurposeConsistent;
  InitMode init = InitMode::kScaledUniform;
  double eval_fraction = 0.2;
  int eval_distractors = 10;
  std::uint64_t seed = 1;

  void validate() const;
};

// max(0, delta + score_neg - score_pos)
double triplet_margin(double score_pos, double score_neg, double delta);

struct GradientSet {
  std::vector<Mat> blocks;  // aligned with param_blocks order
};

struct ObjectiveResult {
  double total = 0;      // E: hinge sum minus the variant's regularizers
  double hinge_sum = 0;  // selected U*Q terms
  long selected_terms = 0;
  GradientSet gradients;  // empty unless gradients were requested
};

// Evaluates the objective on the current batch. `priorities` gates the
// hinge terms; pass nullptr to select every valid combination (the all-ones
// baselines). Gradients flow only through the hinge terms; the priorities
// and regularizers are constants within a parameter step.
ObjectiveResult msrl_objective(const TripletBatch& batch, const GroupCatalog& catalog,
                               const PrioritySet* priorities, const ScheduleState& schedule,
                               const EncoderParams& params, Variant variant,
                               const DropoutSpec& dropout = {}, bool want_gradients = true);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  long step = 0;
  std::vector<Mat> m, v;  // first/second moments per block
  static AdamState zeros_like(const EncoderParams& params);
};

// Bias-corrected adaptive-moment update. Throws on non-finite gradients
// (naming the block) and on non-finite parameters after the step.
void adam_step(EncoderParams& params, const GradientSet& grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

struct TrainState {
  EncoderParams params;
  AdamState adam;
  ScheduleState schedule;
  PrioritySet priorities;
  long iteration = 0;
  SplitRng batch_rng, randsel_rng, dropout_rng;
};

// Train/eval split: the eval suffix of each group is cut on an image
// boundary. eval_fraction <= 0 evaluates on the full catalog.
struct SplitView {
  CatalogView train;
  std::vector<std::vector<int>> eval_members;
};
SplitView split_catalog(const GroupCatalog& catalog, double eval_fraction);

struct TrainHooks {
  // (iteration, priorities used by the parameter step, freshly recomputed ones)
  std::function<void(long, const PrioritySet&, const PrioritySet&)> on_alternation;
  std::function<void(long, const RelevanceMatrixSet&, const ScheduleState&)> on_relevance;
  long checkpoint_at = -1;
  std::function<void(const TrainState&)> on_checkpoint;
};

struct TrainResult {
  std::vector<MetricsSnapshot> metrics;
  TrainState state;
};

// Alternating optimization: batch -> parameter step with the previous
// priorities -> recompute relevance and priorities -> schedule updates on
// period boundaries. Deterministic given (catalog, config, seed); pass a
// resume state to continue a checkpointed run bit-identically.
TrainResult train(const GroupCatalog& catalog, const TrainerConfig& cfg,
                  const TrainState* resume = nullptr, TrainHooks* hooks = nullptr);

}  // namespace msrl
