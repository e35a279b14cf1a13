#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "msrl/rng.hpp"

namespace msrl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Axis-aligned box in pixel coordinates of an image of size image_w x image_h.
struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double image_w = 0, image_h = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }

  // Throws ValidationError unless x1 < x2, y1 < y2, 0 <= x1,y1 and x2 <= W, y2 <= H.
  void validate(const std::string& context = {}) const;
};

// Intersection area over union area; symmetric, in [0, 1].
double compute_iou(const BoundingBox& a, const BoundingBox& b);

struct ContextNeighbor {
  Vec context_feature;  // d-dim semantic feature of the surrounding region
  BoundingBox box;      // neighbor box in the same image frame
};

struct RegionItem {
  std::int64_t region_id = 0;
  std::int64_t image_id = 0;
  int group_id = -1;
  BoundingBox box;
  Mat grid_features;  // c x B, one column per grid cell
  std::vector<ContextNeighbor> context_neighbors;  // at most 5
};

struct ExpressionItem {
  std::int64_t expression_id = 0;
  std::int64_t image_id = 0;
  int group_id = -1;
  Mat word_embeddings;  // T x d, one row per word
};

// Matched (anchor-positive) region/expression pair. Both members share
// image_id and group_id.
struct MatchedPair {
  RegionItem region;
  ExpressionItem expression;
};

struct LabeledPair {
  std::string group_label;
  MatchedPair pair;
};

struct Group {
  std::string label;
  std::vector<MatchedPair> pairs;
};

struct GroupCatalog {
  std::vector<Group> groups;  // label-lexicographic order

  int num_groups() const { return static_cast<int>(groups.size()); }
  int total_pairs() const;
  const MatchedPair& pair_at(int group, int member) const;

  // Enforces the structural invariants (membership consistency, box and
  // dimension validity). Throws ValidationError naming the offending pair.
  void validate() const;
};

// Partitions labeled pairs into groups ordered lexicographically by label and
// stamps group ids onto the contained items.
GroupCatalog build_catalog(std::vector<LabeledPair> items);

// Same-image candidate filtering during negative sampling.
//
// kPurposeConsistent discards a same-image candidate whose box overlaps the
// anchor region with IoU >= 0.5 (keeps hard same-image negatives, drops
// near-duplicates of the anchor). kPaperLiteral discards when IoU < 0.5.
enum class IouFilterMode { kPurposeConsistent, kPaperLiteral };

struct BatchConfig {
  int anchors = 10;               // M
  int negatives = 60;             // M', must be a multiple of anchors
  double split_ratio = 0.5;       // fraction of per-anchor negatives that are expressions
  IouFilterMode iou_filter = IouFilterMode::kPurposeConsistent;
  bool same_image_negatives = false;  // per-image baseline: draw negatives from the anchor's image
  int max_resample_attempts = 50;
};

struct AnchorRef {
  int group = -1;
  int member = -1;
};

// One sampled negative. `member` indexes the group member that supplies the
// negative expression (is_expression) or region.
struct NegativeRef {
  int anchor = -1;  // index into TripletBatch::anchors
  int group = -1;
  int member = -1;
  bool is_expression = true;
};

struct TripletBatch {
  std::vector<AnchorRef> anchors;          // M matched pairs
  std::vector<NegativeRef> neg_expressions;  // P'1
  std::vector<NegativeRef> neg_regions;      // P'2

  int num_anchors() const { return static_cast<int>(anchors.size()); }
  int num_negatives() const {
    return static_cast<int>(neg_expressions.size() + neg_regions.size());
  }
  // Column order of the relevance/priority matrices: P'1 first, then P'2.
  const NegativeRef& negative_at(int column) const;
  bool column_is_expression(int column) const {
    return column < static_cast<int>(neg_expressions.size());
  }

  std::string serialize() const;  // canonical text form for determinism checks
};

// Samples M anchors without replacement and k = M'/M negatives per anchor
// from the anchor's group (excluding its own positive), applying the
// same-image IoU filter. Pure function of (catalog, rng state, config).
TripletBatch construct_batch(const GroupCatalog& catalog, SplitRng& rng,
                             const BatchConfig& config);

// Restriction of a catalog to a subset of members per group (used for the
// train/eval split). Member indices refer to the underlying catalog.
struct CatalogView {
  const GroupCatalog* catalog = nullptr;
  std::vector<std::vector<int>> members;  // per group, ascending

  static CatalogView full(const GroupCatalog& catalog);
  int total_pairs() const;
};

TripletBatch construct_batch(const CatalogView& view, SplitRng& rng,
                             const BatchConfig& config);

}  // namespace msrl
