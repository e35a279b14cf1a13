#pragma once

#include <utility>
#include <vector>

#include "msrl/autodiff.hpp"
#include "msrl/domain.hpp"
#include "msrl/rng.hpp"

namespace msrl {

struct EncoderDims {
  int d = 16;          // embedding size
  int c = 16;          // visual channels
  int grid_cells = 4;  // B
};

// Two affine layers with a tanh between them: in -> d -> d.
struct MlpParams {
  Mat w1, b1, w2, b2;
};

// All learnable blocks of the matching model. The linear context projection
// stands in for a recurrent context encoder behind the same contract.
struct EncoderParams {
  EncoderDims dims;
  Mat context_proj;       // d x d
  Mat w_subject;          // d x 1 textual attention vectors
  Mat w_location;         // d x 1
  Mat w_relation;         // d x 1
  Mat visual_map;         // W_v: d x c (also projects the pooled grid column)
  Mat subject_mix;        // W_s: d x d
  Mat visual_attention;   // w_a: d x 1
  Mat location_map;       // W_l: d x 10
  Mat location_bias;      // b_l: d x 1
  Mat relation_map;       // W_r: d x (d + 5)
  Mat relation_bias;      // b_r: d x 1
  MlpParams region_mlp;      // 3d -> d -> d
  MlpParams expression_mlp;  // 3d -> d -> d
};

enum class InitMode { kScaledUniform, kPaperLiteral };

EncoderParams init_encoder_params(const EncoderDims& dims, InitMode mode, SplitRng& rng);

// Named views over the parameter blocks in a fixed order (optimizer,
// checkpoints and gradient checks all iterate this order).
struct ParamBlock {
  const char* name;
  Mat* mat;
};
struct ConstParamBlock {
  const char* name;
  const Mat* mat;
};
std::vector<ParamBlock> param_blocks(EncoderParams& p);
std::vector<ConstParamBlock> param_blocks(const EncoderParams& p);

// Subject / location / relation parts plus their concatenation.
struct ModularFeatures {
  Vec subject, location, relation, concatenated;
};

// --- plain (value-only) forward path ---

using Vec5 = Eigen::Matrix<double, 5, 1>;

// l = [x1/W, y1/H, x2/W, y2/H, wh/WH]
Vec5 location_vector(const BoundingBox& box);
// Position offsets of a neighbor relative to the owning region.
Vec5 neighbor_offset(const BoundingBox& own, const BoundingBox& neighbor);
// Element-wise mean over 5 zero-padded neighbor-offset slots.
Vec5 pooled_neighbor_offsets(const BoundingBox& own,
                             const std::vector<ContextNeighbor>& neighbors);

// Hidden word features, one column per word: h_t = context_proj * e_t.
Mat context_encode(const Mat& word_embeddings, const EncoderParams& p);
// Softmax attention over hidden columns, weighted sum of embedding columns.
Vec textual_modular_attention(const Mat& hidden, const Mat& embeddings, const Mat& w);
Vec visual_subject_attention(const Mat& grid, const Vec& subject, const EncoderParams& p);
Vec location_feature(const BoundingBox& box, const std::vector<ContextNeighbor>& neighbors,
                     const EncoderParams& p);
Vec relation_feature(const std::vector<ContextNeighbor>& neighbors, const BoundingBox& own,
                     const EncoderParams& p);

ModularFeatures encode_expression(const ExpressionItem& item, const EncoderParams& p);
// Region encoding consumes the paired (anchor) expression's subject feature
// for the cross-modal grid attention.
ModularFeatures encode_region(const RegionItem& item, const Vec& anchor_subject,
                              const EncoderParams& p);

Vec mlp_embed(const MlpParams& mlp, const Vec& input);
// Cosine of the two L2-normalized MLP embeddings, in [-1, 1].
double match_score(const ModularFeatures& region, const ModularFeatures& expression,
                   const EncoderParams& p);

// --- taped forward path (identical math, gradients via the tape) ---

struct TapedMlp {
  ad::Var w1, b1, w2, b2;
};

struct TapedParams {
  ad::Var context_proj, w_subject, w_location, w_relation, visual_map, subject_mix,
      visual_attention, location_map, location_bias, relation_map, relation_bias;
  TapedMlp region_mlp, expression_mlp;
  std::vector<std::pair<const char*, ad::Var>> blocks;  // param_blocks order
};

TapedParams register_params(ad::Tape& tape, const EncoderParams& p);

// Inverted dropout on the word-embedding and hidden word features.
struct DropoutSpec {
  double rate = 0.0;
  SplitRng* rng = nullptr;
  bool active() const { return rate > 0.0 && rng != nullptr; }
};

struct TapedFeatures {
  ad::Var subject, location, relation, concatenated;
};

TapedFeatures taped_encode_expression(ad::Tape& tape, const TapedParams& tp,
                                      const EncoderParams& p, const ExpressionItem& item,
                                      const DropoutSpec& dropout = {});
TapedFeatures taped_encode_region(ad::Tape& tape, const TapedParams& tp,
                                  const EncoderParams& p, const RegionItem& item,
                                  ad::Var anchor_subject);
ad::Var taped_match_score(ad::Tape& tape, const TapedParams& tp, ad::Var region_concat,
                          ad::Var expression_concat);

}  // namespace msrl
