#pragma once

#include <vector>

#include "msrl/domain.hpp"
#include "msrl/rng.hpp"

namespace msrl {

// Attribute-structured synthetic data with an exact relevance oracle.
//
// Entities carry one value per attribute. A fixed codebook maps each
// (attribute, value) to a d-vector; expressions observe the per-attribute
// codes as "words" and regions observe the summed code tiled over grid
// cells, both with optional Gaussian noise. Ground-truth relevance between
// two entities is the fraction of attributes on which they agree.
struct AttributeSchema {
  int n_attributes = 4;
  std::vector<int> values_per_attribute;  // each >= 2
  int embedding_dim = 16;                 // d
  double noise_sigma = 0.1;

  // World layout knobs (plumbing, not part of the attribute model).
  int pairs_per_image = 4;   // same-group pairs sharing one image; 1 = singleton images
  int grid_cells = 4;        // B
  int max_neighbors = 3;     // context neighbors per region, drawn in [0, max]
  // Per-group value skew: group g prefers value (g + attribute) mod cardinality
  // with probability concentration * g / (n_groups - 1). Zero keeps the draw
  // uniform for every group; positive values give groups distinct average
  // relevance levels.
  double group_concentration = 0.0;

  int total_codes() const;
  void validate() const;
};

struct SyntheticEntity {
  std::vector<int> attribute_values;
  int group_id = -1;
};

// Fraction of attributes with equal values, in [0, 1].
double oracle_relevance(const SyntheticEntity& a, const SyntheticEntity& b);

struct SyntheticWorld {
  AttributeSchema schema;
  GroupCatalog catalog;
  // Entity behind each catalog pair, addressed as entities[group][member].
  std::vector<std::vector<SyntheticEntity>> entities;
  Mat codebook;  // d x total_codes, one column per (attribute, value)

  const SyntheticEntity& entity_for(int group, int member) const {
    return entities.at(group).at(member);
  }
  // Noise-free signal for an entity: sum of its attribute code vectors.
  Vec code_sum(const SyntheticEntity& e) const;
};

// Builds a world with n_groups groups of pairs_per_group matched pairs each.
// Deterministic given the rng stream state.
SyntheticWorld generate_world(const AttributeSchema& schema, int n_groups,
                              int pairs_per_group, SplitRng& rng);

}  // namespace msrl
