#include "msrl/domain.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "msrl/errors.hpp"

namespace msrl {

void BoundingBox::validate(const std::string& context) const {
  const auto fail = [&](const std::string& what) {
    throw ValidationError("invalid box" + (context.empty() ? "" : " (" + context + ")") +
                          ": " + what);
  };
  if (!(x1 < x2)) fail("x1 >= x2");
  if (!(y1 < y2)) fail("y1 >= y2");
  if (x1 < 0 || y1 < 0) fail("negative corner");
  if (x2 > image_w || y2 > image_h) fail("exceeds image bounds");
}

double compute_iou(const BoundingBox& a, const BoundingBox& b) {
  a.validate("iou lhs");
  b.validate("iou rhs");
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return inter / uni;
}

int GroupCatalog::total_pairs() const {
  int n = 0;
  for (const auto& g : groups) n += static_cast<int>(g.pairs.size());
  return n;
}

const MatchedPair& GroupCatalog::pair_at(int group, int member) const {
  return groups.at(group).pairs.at(member);
}

void GroupCatalog::validate() const {
  if (groups.empty()) throw ValidationError("catalog has no groups");
  Eigen::Index d = -1, c = -1, cells = -1;
  for (int g = 0; g < num_groups(); ++g) {
    const auto& group = groups[g];
    if (group.label.empty()) throw ValidationError("group " + std::to_string(g) + " has empty label");
    if (group.pairs.empty()) throw ValidationError("group '" + group.label + "' is empty");
    for (std::size_t p = 0; p < group.pairs.size(); ++p) {
      const std::string where = "group '" + group.label + "' pair " + std::to_string(p);
      const auto& pair = group.pairs[p];
      if (pair.region.group_id != g || pair.expression.group_id != g)
        throw ValidationError(where + ": group_id does not match containing group");
      if (pair.region.image_id != pair.expression.image_id)
        throw ValidationError(where + ": region and expression disagree on image_id");
      pair.region.box.validate(where);
      if (pair.expression.word_embeddings.rows() < 1)
        throw ValidationError(where + ": expression has no words");
      if (pair.region.context_neighbors.size() > 5)
        throw ValidationError(where + ": more than 5 context neighbors");
      if (d < 0) d = pair.expression.word_embeddings.cols();
      if (pair.expression.word_embeddings.cols() != d)
        throw ValidationError(where + ": word embedding size differs from catalog");
      if (c < 0) {
        c = pair.region.grid_features.rows();
        cells = pair.region.grid_features.cols();
      }
      if (pair.region.grid_features.rows() != c || pair.region.grid_features.cols() != cells)
        throw ValidationError(where + ": grid feature shape differs from catalog");
      for (const auto& nb : pair.region.context_neighbors) {
        if (nb.context_feature.size() != d)
          throw ValidationError(where + ": neighbor context feature size differs from embedding size");
        nb.box.validate(where + " neighbor");
      }
    }
  }
}

GroupCatalog build_catalog(std::vector<LabeledPair> items) {
  if (items.empty()) throw ValidationError("build_catalog: no input pairs");
  std::map<std::string, std::vector<MatchedPair>> by_label;  // keeps lexicographic order
  for (auto& item : items) {
    if (item.group_label.empty()) throw ValidationError("build_catalog: empty group label");
    by_label[item.group_label].push_back(std::move(item.pair));
  }
  GroupCatalog catalog;
  int g = 0;
  for (auto& [label, pairs] : by_label) {
    Group group;
    group.label = label;
    group.pairs = std::move(pairs);
    for (auto& pair : group.pairs) {
      pair.region.group_id = g;
      pair.expression.group_id = g;
    }
    catalog.groups.push_back(std::move(group));
    ++g;
  }
  catalog.validate();
  return catalog;
}

const NegativeRef& TripletBatch::negative_at(int column) const {
  const int n1 = static_cast<int>(neg_expressions.size());
  return column < n1 ? neg_expressions[column] : neg_regions[column - n1];
}

std::string TripletBatch::serialize() const {
  std::ostringstream out;
  out << "anchors";
  for (const auto& a : anchors) out << " " << a.group << ":" << a.member;
  out << "\nneg_expr";
  for (const auto& n : neg_expressions) out << " " << n.anchor << ">" << n.group << ":" << n.member;
  out << "\nneg_region";
  for (const auto& n : neg_regions) out << " " << n.anchor << ">" << n.group << ":" << n.member;
  out << "\n";
  return out.str();
}

CatalogView CatalogView::full(const GroupCatalog& catalog) {
  CatalogView view;
  view.catalog = &catalog;
  view.members.resize(catalog.groups.size());
  for (int g = 0; g < catalog.num_groups(); ++g) {
    view.members[g].resize(catalog.groups[g].pairs.size());
    for (std::size_t m = 0; m < view.members[g].size(); ++m)
      view.members[g][m] = static_cast<int>(m);
  }
  return view;
}

int CatalogView::total_pairs() const {
  int n = 0;
  for (const auto& g : members) n += static_cast<int>(g.size());
  return n;
}

namespace {

// A same-image candidate is discarded when the filter rule fires.
bool filter_rejects(const BoundingBox& anchor_box, const BoundingBox& cand_box,
                    IouFilterMode mode) {
  const double iou = compute_iou(anchor_box, cand_box);
  return mode == IouFilterMode::kPurposeConsistent ? iou >= 0.5 : iou < 0.5;
}

}  // namespace

TripletBatch construct_batch(const CatalogView& view, SplitRng& rng,
                             const BatchConfig& config) {
  const GroupCatalog& catalog = *view.catalog;
  if (config.anchors < 1) throw ValidationError("construct_batch: need at least one anchor");
  if (config.negatives % config.anchors != 0)
    throw ValidationError("construct_batch: negatives must be a multiple of anchors");
  const int k = config.negatives / config.anchors;
  const int n_expr = static_cast<int>(std::ceil(k * config.split_ratio));
  const int n_region = k - n_expr;

  std::vector<AnchorRef> flat;
  for (int g = 0; g < static_cast<int>(view.members.size()); ++g)
    for (int m : view.members[g]) flat.push_back({g, m});
  if (static_cast<int>(flat.size()) < config.anchors)
    throw ValidationError("construct_batch: catalog smaller than requested anchor count");

  TripletBatch batch;
  // Partial Fisher-Yates: M anchors without replacement, uniform over pairs.
  for (int i = 0; i < config.anchors; ++i) {
    const auto j = i + static_cast<int>(rng.next_below(flat.size() - i));
    std::swap(flat[i], flat[j]);
    batch.anchors.push_back(flat[i]);
  }

  struct Slot {
    bool expression;
    std::vector<NegativeRef>* out;
  };

  for (int i = 0; i < config.anchors; ++i) {
    const AnchorRef anchor = batch.anchors[i];
    const auto& group = catalog.groups[anchor.group];
    const auto& anchor_pair = group.pairs[anchor.member];

    std::vector<int> candidates;
    for (int m : view.members[anchor.group]) {
      if (m == anchor.member) continue;  // never the anchor's own positive
      if (config.same_image_negatives &&
          group.pairs[m].region.image_id != anchor_pair.region.image_id)
        continue;
      candidates.push_back(m);
    }
    if (candidates.empty())
      throw ValidationError("construct_batch: group '" + group.label +
                            "' cannot supply any negative for the sampled anchor");

    for (const Slot slot : {Slot{true, &batch.neg_expressions}, Slot{false, &batch.neg_regions}}) {
      const int wanted = slot.expression ? n_expr : n_region;
      std::vector<int> used;
      for (int s = 0; s < wanted; ++s) {
        bool placed = false;
        for (int attempt = 0; attempt < config.max_resample_attempts; ++attempt) {
          const int m = candidates[rng.next_below(candidates.size())];
          if (std::find(used.begin(), used.end(), m) != used.end()) continue;
          const auto& cand_pair = group.pairs[m];
          if (cand_pair.region.image_id == anchor_pair.region.image_id &&
              filter_rejects(anchor_pair.region.box, cand_pair.region.box, config.iou_filter))
            continue;
          used.push_back(m);
          slot.out->push_back({i, anchor.group, m, slot.expression});
          placed = true;
          break;
        }
        if (!placed)
          throw ValidationError("construct_batch: group '" + group.label +
                                "' too small to supply " + std::to_string(k) +
                                " distinct negatives after filtering");
      }
    }
  }
  return batch;
}

TripletBatch construct_batch(const GroupCatalog& catalog, SplitRng& rng,
                             const BatchConfig& config) {
  return construct_batch(CatalogView::full(catalog), rng, config);
}

}  // namespace msrl
