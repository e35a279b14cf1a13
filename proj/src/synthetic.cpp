#include "msrl/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "msrl/errors.hpp"

namespace msrl {

int AttributeSchema::total_codes() const {
  int n = 0;
  for (int card : values_per_attribute) n += card;
  return n;
}

void AttributeSchema::validate() const {
  if (n_attributes < 1) throw ValidationError("schema: need at least one attribute");
  if (static_cast<int>(values_per_attribute.size()) != n_attributes)
    throw ValidationError("schema: values_per_attribute length must equal n_attributes");
  for (int card : values_per_attribute)
    if (card < 2) throw ValidationError("schema: every attribute needs at least 2 values");
  if (embedding_dim < 4)
    throw ValidationError("schema: embedding_dim must be at least 4 (attention heads need headroom)");
  if (noise_sigma < 0) throw ValidationError("schema: negative noise_sigma");
  if (pairs_per_image < 1) throw ValidationError("schema: pairs_per_image must be positive");
  if (grid_cells < 1) throw ValidationError("schema: grid_cells must be positive");
  if (max_neighbors < 0 || max_neighbors > 5)
    throw ValidationError("schema: max_neighbors must be in [0, 5]");
  if (group_concentration < 0 || group_concentration > 1)
    throw ValidationError("schema: group_concentration must be in [0, 1]");
}

double oracle_relevance(const SyntheticEntity& a, const SyntheticEntity& b) {
  if (a.attribute_values.size() != b.attribute_values.size())
    throw ValidationError("oracle_relevance: entities from different schemas");
  if (a.attribute_values.empty()) throw ValidationError("oracle_relevance: empty entities");
  int shared = 0;
  for (std::size_t k = 0; k < a.attribute_values.size(); ++k)
    shared += a.attribute_values[k] == b.attribute_values[k];
  return static_cast<double>(shared) / static_cast<double>(a.attribute_values.size());
}

Vec SyntheticWorld::code_sum(const SyntheticEntity& e) const {
  Vec sum = Vec::Zero(schema.embedding_dim);
  int offset = 0;
  for (int k = 0; k < schema.n_attributes; ++k) {
    sum += codebook.col(offset + e.attribute_values[k]);
    offset += schema.values_per_attribute[k];
  }
  return sum;
}

namespace {

// Unit Gaussian draws, then orthonormalized (Gram-Schmidt) while the columns
// fit in d dimensions. Orthonormal codes make the zero-noise cosine an exact
// monotone transform of the shared-attribute fraction; beyond d codes only
// length normalization is possible.
Mat draw_codebook(const AttributeSchema& schema, SplitRng& rng) {
  const int d = schema.embedding_dim;
  const int n = schema.total_codes();
  Mat codes(d, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < d; ++i) codes(i, j) = rng.next_gaussian();
  if (n <= d) {
    for (int j = 0; j < n; ++j) {
      for (int prev = 0; prev < j; ++prev)
        codes.col(j) -= codes.col(prev).dot(codes.col(j)) * codes.col(prev);
      const double norm = codes.col(j).norm();
      if (norm < 1e-9) throw RuntimeFailure("degenerate codebook draw");
      codes.col(j) /= norm;
    }
  } else {
    for (int j = 0; j < n; ++j) codes.col(j) /= codes.col(j).norm();
  }
  return codes;
}

BoundingBox make_region_box(int slot, int pairs_per_image, double image_w, double image_h,
                            SplitRng& rng) {
  const int grid = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(pairs_per_image))));
  const double cell_w = image_w / grid;
  const double cell_h = image_h / grid;
  const double cx = (slot % grid) * cell_w;
  const double cy = (slot / grid) * cell_h;
  // Margins keep boxes inside disjoint cells, so same-image IoU is 0.
  const auto margin = [&rng](double extent) { return (0.05 + 0.15 * rng.next_unit()) * extent; };
  BoundingBox box;
  box.image_w = image_w;
  box.image_h = image_h;
  box.x1 = cx + margin(cell_w);
  box.x2 = cx + cell_w - margin(cell_w);
  box.y1 = cy + margin(cell_h);
  box.y2 = cy + cell_h - margin(cell_h);
  return box;
}

BoundingBox random_box(double image_w, double image_h, SplitRng& rng) {
  BoundingBox box;
  box.image_w = image_w;
  box.image_h = image_h;
  const double w = (0.1 + 0.4 * rng.next_unit()) * image_w;
  const double h = (0.1 + 0.4 * rng.next_unit()) * image_h;
  box.x1 = rng.next_unit() * (image_w - w);
  box.y1 = rng.next_unit() * (image_h - h);
  box.x2 = box.x1 + w;
  box.y2 = box.y1 + h;
  return box;
}

std::string group_label(int g) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "g%03d", g);
  return buf;
}

}  // namespace

SyntheticWorld generate_world(const AttributeSchema& schema, int n_groups,
                              int pairs_per_group, SplitRng& rng) {
  schema.validate();
  if (n_groups < 1) throw ValidationError("generate_world: need at least one group");
  if (pairs_per_group < 2) throw ValidationError("generate_world: need at least 2 pairs per group");

  constexpr double kImageW = 640, kImageH = 480;
  const int d = schema.embedding_dim;

  SyntheticWorld world;
  world.schema = schema;
  world.codebook = draw_codebook(schema, rng);
  world.entities.resize(n_groups);

  std::vector<LabeledPair> labeled;
  const int total = n_groups * pairs_per_group;
  for (int e = 0; e < total; ++e) {
    const int g = e % n_groups;  // round-robin group assignment
    const int member = e / n_groups;

    SyntheticEntity entity;
    entity.group_id = g;
    const double lean =
        n_groups > 1 ? schema.group_concentration * g / (n_groups - 1) : 0.0;
    for (int k = 0; k < schema.n_attributes; ++k) {
      const int card = schema.values_per_attribute[k];
      int value;
      if (lean > 0 && rng.next_unit() < lean)
        value = (g + k) % card;  // group-preferred value
      else
        value = static_cast<int>(rng.next_below(card));
      entity.attribute_values.push_back(value);
    }
    world.entities[g].push_back(entity);
    const Vec signal = world.code_sum(entity);

    MatchedPair pair;
    const std::int64_t image_id =
        static_cast<std::int64_t>(g) * 1000000 + member / schema.pairs_per_image;

    pair.expression.expression_id = e;
    pair.expression.image_id = image_id;
    pair.expression.word_embeddings.resize(schema.n_attributes, d);
    int offset = 0;
    for (int k = 0; k < schema.n_attributes; ++k) {
      for (int i = 0; i < d; ++i)
        pair.expression.word_embeddings(k, i) =
            world.codebook(i, offset + entity.attribute_values[k]) +
            schema.noise_sigma * rng.next_gaussian();
      offset += schema.values_per_attribute[k];
    }

    pair.region.region_id = e;
    pair.region.image_id = image_id;
    pair.region.grid_features.resize(d, schema.grid_cells);
    for (int b = 0; b < schema.grid_cells; ++b)
      for (int i = 0; i < d; ++i)
        pair.region.grid_features(i, b) = signal(i) + schema.noise_sigma * rng.next_gaussian();
    pair.region.box =
        make_region_box(member % schema.pairs_per_image, schema.pairs_per_image, kImageW, kImageH, rng);

    const int n_neighbors =
        static_cast<int>(rng.next_below(static_cast<std::uint64_t>(schema.max_neighbors) + 1));
    for (int j = 0; j < n_neighbors; ++j) {
      ContextNeighbor nb;
      // Context features come from another entity of the same group so the
      // relation path carries group-consistent semantics.
      const int other = static_cast<int>(rng.next_below(pairs_per_group));
      SyntheticEntity ghost;
      ghost.group_id = g;
      for (int k = 0; k < schema.n_attributes; ++k)
        ghost.attribute_values.push_back((other + entity.attribute_values[k]) %
                                         schema.values_per_attribute[k]);
      nb.context_feature = world.code_sum(ghost);
      for (int i = 0; i < d; ++i) nb.context_feature(i) += schema.noise_sigma * rng.next_gaussian();
      nb.box = random_box(kImageW, kImageH, rng);
      pair.region.context_neighbors.push_back(std::move(nb));
    }

    labeled.push_back({group_label(g), std::move(pair)});
  }

  world.catalog = build_catalog(std::move(labeled));
  if (world.catalog.num_groups() != n_groups)
    throw RuntimeFailure("generate_world: group count mismatch after catalog build");
  return world;
}

}  // namespace msrl
