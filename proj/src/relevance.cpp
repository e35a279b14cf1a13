#include "msrl/relevance.hpp"

#include <cmath>
#include <limits>

#include "msrl/errors.hpp"

namespace msrl {

namespace {

double cosine01(const Vec& a, const Vec& b) {
  const double na = a.norm(), nb = b.norm();
  if (na < 1e-12 || nb < 1e-12)
    throw ValidationError("relevance: zero-norm feature in cosine mode");
  const double cos = a.dot(b) / (na * nb);
  return std::min(1.0, std::max(0.0, 0.5 * (1.0 + cos)));
}

}  // namespace

long RelevanceMatrixSet::valid_count() const {
  long n = 0;
  for (const auto& m : valid) n += m.cast<long>().sum();
  return n;
}

double RelevanceMatrixSet::masked_mean() const {
  long n = 0;
  double sum = 0;
  for_each_valid([&](int, int, int, double v, bool) {
    sum += v;
    ++n;
  });
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / n;
}

std::optional<double> pair_relevance(const Vec& anchor_region, const Vec& anchor_expression,
                                     const Vec* negative_region, const Vec* negative_expression,
                                     AlphaPolicy policy, RelevanceMode mode) {
  bool visual;
  switch (policy) {
    case AlphaPolicy::kPerPair:
      visual = negative_region != nullptr;
      break;
    case AlphaPolicy::kGlobalVisual:
      visual = true;
      break;
    case AlphaPolicy::kGlobalTextual:
      visual = false;
      break;
    default:
      throw ValidationError("pair_relevance: bad policy");
  }
  const Vec* negative = visual ? negative_region : negative_expression;
  if (negative == nullptr) return std::nullopt;  // missing modality -> sentinel
  const Vec& anchor = visual ? anchor_region : anchor_expression;
  if (mode == RelevanceMode::kCosine01) return cosine01(anchor, *negative);
  return anchor.dot(*negative);
}

bool combo_valid(const TripletBatch& batch, const GroupCatalog& catalog, MaskScope scope,
                 int anchor, int column) {
  const AnchorRef& a = batch.anchors[anchor];
  const NegativeRef& n = batch.negative_at(column);
  if (n.group != a.group) return false;
  if (n.member == a.member) return false;  // the anchor's own positive
  if (scope == MaskScope::kSameImage) {
    const auto& ap = catalog.pair_at(a.group, a.member);
    const auto& np = catalog.pair_at(n.group, n.member);
    if (ap.region.image_id != np.region.image_id) return false;
  }
  return true;
}

PairFeatureTable compute_pair_features(const TripletBatch& batch, const GroupCatalog& catalog,
                                       const EncoderParams& params, MaskScope scope) {
  const int m = batch.num_anchors();
  const int mprime = batch.num_negatives();
  PairFeatureTable table;
  table.anchor_region.resize(m);
  table.anchor_expression.resize(m);
  table.expression_negative.resize(mprime);
  table.region_negative.resize(mprime, std::vector<Vec>(m));

  std::vector<Vec> anchor_subject(m);
  for (int i = 0; i < m; ++i) {
    const auto& pair = catalog.pair_at(batch.anchors[i].group, batch.anchors[i].member);
    const ModularFeatures sf = encode_expression(pair.expression, params);
    anchor_subject[i] = sf.subject;
    table.anchor_expression[i] = sf.concatenated;
    table.anchor_region[i] = encode_region(pair.region, sf.subject, params).concatenated;
  }
  for (int j = 0; j < mprime; ++j) {
    const NegativeRef& neg = batch.negative_at(j);
    const auto& pair = catalog.pair_at(neg.group, neg.member);
    if (neg.is_expression) {
      table.expression_negative[j] = encode_expression(pair.expression, params).concatenated;
    } else {
      for (int i = 0; i < m; ++i) {
        if (!combo_valid(batch, catalog, scope, i, j)) continue;
        table.region_negative[j][i] =
            encode_region(pair.region, anchor_subject[i], params).concatenated;
      }
    }
  }
  return table;
}

RelevanceMatrixSet relevance_matrices(const TripletBatch& batch, const GroupCatalog& catalog,
                                      const PairFeatureTable& features, RelevanceMode mode,
                                      AlphaPolicy policy, MaskScope scope) {
  const int m = batch.num_anchors();
  const int mprime = batch.num_negatives();
  RelevanceMatrixSet set;
  set.anchors = m;
  set.negatives = mprime;
  set.values.assign(catalog.num_groups(), Mat::Zero(m, mprime));
  set.valid.assign(catalog.num_groups(),
                   Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(m, mprime));
  set.column_is_visual.resize(mprime);
  for (int j = 0; j < mprime; ++j)
    set.column_is_visual[j] = batch.negative_at(j).is_expression ? 0 : 1;

  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < mprime; ++j) {
      if (!combo_valid(batch, catalog, scope, i, j)) continue;
      const int g = batch.anchors[i].group;
      const NegativeRef& neg = batch.negative_at(j);
      const Vec* neg_region = nullptr;
      const Vec* neg_expression = nullptr;
      if (neg.is_expression) {
        neg_expression = &features.expression_negative[j];
        if (neg_expression->size() == 0)
          throw RuntimeFailure("relevance_matrices: missing expression feature");
      } else {
        neg_region = &features.region_negative[j][i];
        if (neg_region->size() == 0)
          throw RuntimeFailure("relevance_matrices: missing region feature");
      }
      const auto r = pair_relevance(features.anchor_region[i], features.anchor_expression[i],
                                    neg_region, neg_expression, policy, mode);
      if (!r) continue;  // sentinel
      set.values[g](i, j) = *r;
      set.valid[g](i, j) = 1;
    }
  }

  if (mode == RelevanceMode::kPaperLiteral) {
    // Normalize raw dots by the per-group, per-modality sum over valid entries.
    for (int g = 0; g < catalog.num_groups(); ++g) {
      for (const bool visual : {false, true}) {
        double denom = 0;
        bool any = false;
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < mprime; ++j)
            if (set.valid[g](i, j) && (set.column_is_visual[j] != 0) == visual) {
              denom += set.values[g](i, j);
              any = true;
            }
        if (!any) continue;
        if (std::abs(denom) <= 1e-9)
          throw ValidationError("relevance_matrices: degenerate normalization denominator");
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < mprime; ++j)
            if (set.valid[g](i, j) && (set.column_is_visual[j] != 0) == visual)
              set.values[g](i, j) /= denom;
      }
    }
  }
  return set;
}

}  // namespace msrl
