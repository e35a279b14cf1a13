#pragma once

#include <optional>
#include <vector>

#include "msrl/domain.hpp"
#include "msrl/encoders.hpp"

namespace msrl {

// kCosine01 maps cosine similarity to [0, 1]; kPaperLiteral normalizes raw
// dot products by their per-group, per-modality sum (audit mode).
enum class RelevanceMode { kCosine01, kPaperLiteral };

// Which modality compares an anchor with a negative. Per-pair uses the
// negative's own modality; the global overrides exist for ablations and
// produce sentinels where the counterpart modality is missing.
enum class AlphaPolicy { kPerPair, kGlobalVisual, kGlobalTextual };

// Which anchor/negative combinations are meaningful: every same-group pair,
// or only pairs drawn from the anchor's image (per-image baseline).
enum class MaskScope { kSameGroup, kSameImage };

// Concatenated 3d features for every batch member. Region negatives are
// encoded per anchor (the grid attention is conditioned on the anchor
// expression's subject), so their features are stored per (column, anchor).
struct PairFeatureTable {
  std::vector<Vec> anchor_region;
  std::vector<Vec> anchor_expression;
  std::vector<Vec> expression_negative;            // empty Vec for region columns
  std::vector<std::vector<Vec>> region_negative;   // [column][anchor], empty when unused
};

PairFeatureTable compute_pair_features(const TripletBatch& batch, const GroupCatalog& catalog,
                                       const EncoderParams& params,
                                       MaskScope scope = MaskScope::kSameGroup);

// Per-group M x M' relevance matrices with an explicit sentinel mask.
// Sentinel entries never enter any reduction; use the masked iteration API.
struct RelevanceMatrixSet {
  int anchors = 0;
  int negatives = 0;
  std::vector<Mat> values;  // one per group
  std::vector<Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>> valid;
  std::vector<std::uint8_t> column_is_visual;  // per column: compares region features

  int num_groups() const { return static_cast<int>(values.size()); }
  bool is_valid(int g, int i, int j) const { return valid[g](i, j) != 0; }
  double at(int g, int i, int j) const { return values[g](i, j); }

  template <class Fn>
  void for_each_valid(Fn&& fn) const {
    for (int g = 0; g < num_groups(); ++g)
      for (int i = 0; i < anchors; ++i)
        for (int j = 0; j < negatives; ++j)
          if (valid[g](i, j)) fn(g, i, j, values[g](i, j), column_is_visual[j] != 0);
  }

  long valid_count() const;
  double masked_mean() const;  // NaN when no valid entries
};

// Single-pair relevance term. The negative carries exactly one modality
// (null pointer for the missing one); a policy/modality mismatch yields the
// sentinel (nullopt). In kPaperLiteral mode the returned value is the raw
// dot product, to be normalized per group by relevance_matrices.
std::optional<double> pair_relevance(const Vec& anchor_region, const Vec& anchor_expression,
                                     const Vec* negative_region, const Vec* negative_expression,
                                     AlphaPolicy policy, RelevanceMode mode);

// True when the (anchor, column) combination is meaningful: same group,
// not the anchor's own positive, and inside the mask scope.
bool combo_valid(const TripletBatch& batch, const GroupCatalog& catalog, MaskScope scope,
                 int anchor, int column);

RelevanceMatrixSet relevance_matrices(const TripletBatch& batch, const GroupCatalog& catalog,
                                      const PairFeatureTable& features, RelevanceMode mode,
                                      AlphaPolicy policy = AlphaPolicy::kPerPair,
                                      MaskScope scope = MaskScope::kSameGroup);

}  // namespace msrl
