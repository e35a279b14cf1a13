#include "msrl/encoders.hpp"

#include <cmath>
#include <string_view>

#include "msrl/errors.hpp"

namespace msrl {

namespace {

void fill_uniform(Mat& m, double lo, double hi, SplitRng& rng) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = lo + (hi - lo) * rng.next_unit();
}

bool is_bias(const char* name) {
  const std::string_view n(name);
  return n.ends_with("bias") || n.ends_with(".b1") || n.ends_with(".b2");
}

}  // namespace

EncoderParams init_encoder_params(const EncoderDims& dims, InitMode mode, SplitRng& rng) {
  if (dims.d < 1 || dims.c < 1 || dims.grid_cells < 1)
    throw ValidationError("encoder dims must be positive");
  const int d = dims.d;
  EncoderParams p;
  p.dims = dims;
  p.context_proj.resize(d, d);
  p.w_subject.resize(d, 1);
  p.w_location.resize(d, 1);
  p.w_relation.resize(d, 1);
  p.visual_map.resize(d, dims.c);
  p.subject_mix.resize(d, d);
  p.visual_attention.resize(d, 1);
  p.location_map.resize(d, 10);
  p.location_bias.resize(d, 1);
  p.relation_map.resize(d, d + 5);
  p.relation_bias.resize(d, 1);
  for (MlpParams* mlp : {&p.region_mlp, &p.expression_mlp}) {
    mlp->w1.resize(d, 3 * d);
    mlp->b1.resize(d, 1);
    mlp->w2.resize(d, d);
    mlp->b2.resize(d, 1);
  }

  for (auto& block : param_blocks(p)) {
    if (mode == InitMode::kPaperLiteral) {
      fill_uniform(*block.mat, 0.0, 1.0, rng);
    } else if (is_bias(block.name)) {
      block.mat->setZero();
    } else {
      // Attention vectors score d-dim features; everything else has fan_in
      // equal to its column count.
      const double fan_in =
          block.mat->cols() == 1 ? static_cast<double>(d) : static_cast<double>(block.mat->cols());
      const double s = 1.0 / std::sqrt(fan_in);
      fill_uniform(*block.mat, -s, s, rng);
    }
  }
  return p;
}

std::vector<ParamBlock> param_blocks(EncoderParams& p) {
  return {
      {"context_proj", &p.context_proj},
      {"w_subject", &p.w_subject},
      {"w_location", &p.w_location},
      {"w_relation", &p.w_relation},
      {"visual_map", &p.visual_map},
      {"subject_mix", &p.subject_mix},
      {"visual_attention", &p.visual_attention},
      {"location_map", &p.location_map},
      {"location_bias", &p.location_bias},
      {"relation_map", &p.relation_map},
      {"relation_bias", &p.relation_bias},
      {"region_mlp.w1", &p.region_mlp.w1},
      {"region_mlp.b1", &p.region_mlp.b1},
      {"region_mlp.w2", &p.region_mlp.w2},
      {"region_mlp.b2", &p.region_mlp.b2},
      {"expression_mlp.w1", &p.expression_mlp.w1},
      {"expression_mlp.b1", &p.expression_mlp.b1},
      {"expression_mlp.w2", &p.expression_mlp.w2},
      {"expression_mlp.b2", &p.expression_mlp.b2},
  };
}

std::vector<ConstParamBlock> param_blocks(const EncoderParams& p) {
  std::vector<ConstParamBlock> out;
  for (auto& block : param_blocks(const_cast<EncoderParams&>(p)))
    out.push_back({block.name, block.mat});
  return out;
}

Vec5 location_vector(const BoundingBox& box) {
  box.validate("location_vector");
  Vec5 l;
  l << box.x1 / box.image_w, box.y1 / box.image_h, box.x2 / box.image_w, box.y2 / box.image_h,
      box.area() / (box.image_w * box.image_h);
  return l;
}

Vec5 neighbor_offset(const BoundingBox& own, const BoundingBox& neighbor) {
  Vec5 delta;
  delta << (neighbor.x1 - own.x1) / own.width(), (neighbor.y1 - own.y1) / own.height(),
      (neighbor.x2 - own.x2) / own.width(), (neighbor.y2 - own.y2) / own.height(),
      neighbor.area() / own.area();
  return delta;
}

Vec5 pooled_neighbor_offsets(const BoundingBox& own,
                             const std::vector<ContextNeighbor>& neighbors) {
  Vec5 pooled = Vec5::Zero();
  for (const auto& nb : neighbors) pooled += neighbor_offset(own, nb.box);
  return pooled / 5.0;  // five slots, missing ones zero-padded
}

Mat context_encode(const Mat& word_embeddings, const EncoderParams& p) {
  if (word_embeddings.cols() != p.dims.d)
    throw ValidationError("context_encode: embedding size mismatch");
  if (word_embeddings.rows() < 1) throw ValidationError("context_encode: empty expression");
  return p.context_proj * word_embeddings.transpose();  // d x T
}

namespace {
Vec softmax_vec(const Vec& logits) {
  Vec shifted = logits.array() - logits.maxCoeff();
  Vec e = shifted.array().exp();
  return e / e.sum();
}
}  // namespace

Vec textual_modular_attention(const Mat& hidden, const Mat& embeddings, const Mat& w) {
  if (hidden.cols() != embeddings.cols() || hidden.rows() != w.rows())
    throw ValidationError("textual_modular_attention: shape mismatch");
  const Vec logits = hidden.transpose() * w.col(0);
  return embeddings * softmax_vec(logits);
}

Vec visual_subject_attention(const Mat& grid, const Vec& subject, const EncoderParams& p) {
  if (grid.rows() != p.dims.c || grid.cols() != p.dims.grid_cells)
    throw ValidationError("visual_subject_attention: grid shape mismatch");
  if (subject.size() != p.dims.d)
    throw ValidationError("visual_subject_attention: subject size mismatch");
  const Mat pre = p.visual_map * grid +
                  p.subject_mix * subject.replicate(1, grid.cols());
  const Mat scores = pre.array().tanh();
  const Vec logits = scores.transpose() * p.visual_attention.col(0);
  const Vec weights = softmax_vec(logits);
  return p.visual_map * (grid * weights);
}

Vec location_feature(const BoundingBox& box, const std::vector<ContextNeighbor>& neighbors,
                     const EncoderParams& p) {
  Eigen::Matrix<double, 10, 1> input;
  input << location_vector(box), pooled_neighbor_offsets(box, neighbors);
  return p.location_map * input + p.location_bias.col(0);
}

Vec relation_feature(const std::vector<ContextNeighbor>& neighbors, const BoundingBox& own,
                     const EncoderParams& p) {
  if (neighbors.size() > 5) throw ValidationError("relation_feature: more than 5 neighbors");
  if (neighbors.empty()) return Vec::Zero(p.dims.d);
  Vec best;
  for (const auto& nb : neighbors) {
    if (nb.context_feature.size() != p.dims.d)
      throw ValidationError("relation_feature: context feature size mismatch");
    Vec input(p.dims.d + 5);
    input << nb.context_feature, neighbor_offset(own, nb.box);
    const Vec mapped = p.relation_map * input + p.relation_bias.col(0);
    if (best.size() == 0)
      best = mapped;
    else
      best = best.cwiseMax(mapped);
  }
  return best;
}

ModularFeatures encode_expression(const ExpressionItem& item, const EncoderParams& p) {
  const Mat hidden = context_encode(item.word_embeddings, p);
  const Mat embeddings = item.word_embeddings.transpose();
  ModularFeatures f;
  f.subject = textual_modular_attention(hidden, embeddings, p.w_subject);
  f.location = textual_modular_attention(hidden, embeddings, p.w_location);
  f.relation = textual_modular_attention(hidden, embeddings, p.w_relation);
  f.concatenated.resize(3 * p.dims.d);
  f.concatenated << f.subject, f.location, f.relation;
  return f;
}

ModularFeatures encode_region(const RegionItem& item, const Vec& anchor_subject,
                              const EncoderParams& p) {
  ModularFeatures f;
  f.subject = visual_subject_attention(item.grid_features, anchor_subject, p);
  f.location = location_feature(item.box, item.context_neighbors, p);
  f.relation = relation_feature(item.context_neighbors, item.box, p);
  f.concatenated.resize(3 * p.dims.d);
  f.concatenated << f.subject, f.location, f.relation;
  return f;
}

Vec mlp_embed(const MlpParams& mlp, const Vec& input) {
  if (input.size() != mlp.w1.cols()) throw ValidationError("mlp_embed: input size mismatch");
  const Vec hidden = (mlp.w1 * input + mlp.b1.col(0)).array().tanh();
  return mlp.w2 * hidden + mlp.b2.col(0);
}

double match_score(const ModularFeatures& region, const ModularFeatures& expression,
                   const EncoderParams& p) {
  const Vec x = mlp_embed(p.region_mlp, region.concatenated);
  const Vec y = mlp_embed(p.expression_mlp, expression.concatenated);
  const double nx = x.norm(), ny = y.norm();
  if (nx < 1e-12 || ny < 1e-12)
    throw ValidationError("match_score: degenerate (zero-norm) embedding");
  return (x / nx).dot(y / ny);
}

// --- taped path ---

TapedParams register_params(ad::Tape& tape, const EncoderParams& p) {
  TapedParams tp;
  std::vector<ad::Var*> slots = {
      &tp.context_proj, &tp.w_subject, &tp.w_location, &tp.w_relation, &tp.visual_map,
      &tp.subject_mix, &tp.visual_attention, &tp.location_map, &tp.location_bias,
      &tp.relation_map, &tp.relation_bias, &tp.region_mlp.w1, &tp.region_mlp.b1,
      &tp.region_mlp.w2, &tp.region_mlp.b2, &tp.expression_mlp.w1, &tp.expression_mlp.b1,
      &tp.expression_mlp.w2, &tp.expression_mlp.b2};
  const auto blocks = param_blocks(p);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    *slots[i] = tape.leaf(*blocks[i].mat);
    tp.blocks.emplace_back(blocks[i].name, *slots[i]);
  }
  return tp;
}

namespace {

Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, const DropoutSpec& spec) {
  Mat mask(rows, cols);
  const double keep = 1.0 - spec.rate;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      mask(i, j) = spec.rng->next_unit() < keep ? 1.0 / keep : 0.0;
  return mask;
}

ad::Var taped_attention(ad::Tape& tape, ad::Var hidden, ad::Var embeddings, ad::Var w) {
  ad::Var logits = tape.matmul_ta(hidden, w);
  return tape.matmul(embeddings, tape.softmax(logits));
}

ad::Var taped_mlp(ad::Tape& tape, const TapedMlp& mlp, ad::Var input) {
  ad::Var hidden = tape.tanh_of(tape.add(tape.matmul(mlp.w1, input), mlp.b1));
  return tape.add(tape.matmul(mlp.w2, hidden), mlp.b2);
}

}  // namespace

TapedFeatures taped_encode_expression(ad::Tape& tape, const TapedParams& tp,
                                      const EncoderParams& p, const ExpressionItem& item,
                                      const DropoutSpec& dropout) {
  if (item.word_embeddings.cols() != p.dims.d)
    throw ValidationError("taped_encode_expression: embedding size mismatch");
  ad::Var embeddings = tape.constant(item.word_embeddings.transpose());  // d x T
  if (dropout.active())
    embeddings = tape.cwise_mul(embeddings,
                                dropout_mask(p.dims.d, item.word_embeddings.rows(), dropout));
  ad::Var hidden = tape.matmul(tp.context_proj, embeddings);
  if (dropout.active())
    hidden =
        tape.cwise_mul(hidden, dropout_mask(p.dims.d, item.word_embeddings.rows(), dropout));
  TapedFeatures f;
  f.subject = taped_attention(tape, hidden, embeddings, tp.w_subject);
  f.location = taped_attention(tape, hidden, embeddings, tp.w_location);
  f.relation = taped_attention(tape, hidden, embeddings, tp.w_relation);
  f.concatenated = tape.vstack({f.subject, f.location, f.relation});
  return f;
}

TapedFeatures taped_encode_region(ad::Tape& tape, const TapedParams& tp,
                                  const EncoderParams& p, const RegionItem& item,
                                  ad::Var anchor_subject) {
  if (item.grid_features.rows() != p.dims.c || item.grid_features.cols() != p.dims.grid_cells)
    throw ValidationError("taped_encode_region: grid shape mismatch");
  ad::Var grid = tape.constant(item.grid_features);

  ad::Var pre = tape.add(tape.matmul(tp.visual_map, grid),
                         tape.matmul(tp.subject_mix,
                                     tape.broadcast_cols(anchor_subject,
                                                         p.dims.grid_cells)));
  ad::Var scores = tape.tanh_of(pre);
  ad::Var weights = tape.softmax(tape.matmul_ta(scores, tp.visual_attention));
  ad::Var subject = tape.matmul(tp.visual_map, tape.matmul(grid, weights));

  Eigen::Matrix<double, 10, 1> loc_input;
  loc_input << location_vector(item.box), pooled_neighbor_offsets(item.box, item.context_neighbors);
  ad::Var location =
      tape.add(tape.matmul(tp.location_map, tape.constant(loc_input)), tp.location_bias);

  ad::Var relation;
  if (item.context_neighbors.empty()) {
    relation = tape.constant(Mat::Zero(p.dims.d, 1));
  } else {
    for (const auto& nb : item.context_neighbors) {
      Vec input(p.dims.d + 5);
      input << nb.context_feature, neighbor_offset(item.box, nb.box);
      ad::Var mapped =
          tape.add(tape.matmul(tp.relation_map, tape.constant(input)), tp.relation_bias);
      relation = relation.valid() ? tape.cwise_max(relation, mapped) : mapped;
    }
  }

  TapedFeatures f;
  f.subject = subject;
  f.location = location;
  f.relation = relation;
  f.concatenated = tape.vstack({subject, location, relation});
  return f;
}

ad::Var taped_match_score(ad::Tape& tape, const TapedParams& tp, ad::Var region_concat,
                          ad::Var expression_concat) {
  ad::Var x = tape.l2_normalize(taped_mlp(tape, tp.region_mlp, region_concat));
  ad::Var y = tape.l2_normalize(taped_mlp(tape, tp.expression_mlp, expression_concat));
  return tape.dot(x, y);
}

}  // namespace msrl
