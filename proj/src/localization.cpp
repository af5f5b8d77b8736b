#include "afford/localization.hpp"

#include <set>

#include "afford/error.hpp"

namespace afford {

SceneImage apply_full_view_mask(const SceneImage& image, const FullViewMask& mask, bool bypass) {
  if (bypass) return image;
  if (mask.foreground.rows() != image.rows() || mask.foreground.cols() != image.cols())
    raise(ErrorCode::DimensionMismatch, "full-view mask size differs from the image");
  SceneImage out = image;
  for (auto& c : out.channels) c = mask.foreground.select(c, 0.0);
  return out;
}

TokenSequence extract_features(const SceneImage& image, const PatchBackbone& backbone, const WcbConfig& wcb_config) {
  return backbone.forward(image, wcb_config);
}

AffordanceChannels affordance_head(const TokenSequence& tokens, const AffordanceHead& head,
                                   const PredicateList& predicates) {
  if (head.channels() != static_cast<Eigen::Index>(predicates.size()))
    raise(ErrorCode::ShapeError, "head has " + std::to_string(head.channels()) + " channels for " +
                                     std::to_string(predicates.size()) + " predicates");
  const auto act = head.forward(tokens);
  AffordanceChannels out{{}, predicates};
  for (Eigen::Index c = 0; c < act.scores.cols(); ++c) {
    Plane<double> map(act.rows, act.cols);
    for (Eigen::Index r = 0; r < act.rows; ++r)
      for (Eigen::Index q = 0; q < act.cols; ++q) map(r, q) = act.scores(r * act.cols + q, c);
    out.maps.push_back(std::move(map));
  }
  return out;
}

namespace {

AffordanceMap finish(const Plane<double>& sum, Eigen::Index rows, Eigen::Index cols) {
  if (rows < 1 || cols < 1) raise(ErrorCode::ShapeError, "target size must be positive");
  return minmax_normalize(resize_bilinear(sum, rows, cols));
}

}  // namespace

AffordanceMap aggregate_affordance(const AffordanceChannels& channels, const std::vector<SubAction>& actions,
                                   Eigen::Index rows, Eigen::Index cols) {
  if (actions.empty()) raise(ErrorCode::EmptyActionSet, "no sub-actions to aggregate");
  if (channels.maps.empty()) raise(ErrorCode::ShapeError, "no affordance channels");
  std::set<std::size_t> selected;
  for (const auto& a : actions) {
    auto idx = channels.channel_order.index_of(a.predicate);
    if (!idx || *idx >= channels.maps.size())
      raise(ErrorCode::UnknownPredicate, "predicate '" + a.predicate + "' has no affordance channel");
    selected.insert(*idx);
  }
  Plane<double> sum = Plane<double>::Zero(channels.maps[0].rows(), channels.maps[0].cols());
  for (std::size_t i : selected) sum += channels.maps[i];
  return finish(sum, rows, cols);
}

AffordanceMap aggregate_all(const AffordanceChannels& channels, Eigen::Index rows, Eigen::Index cols) {
  if (channels.maps.empty()) raise(ErrorCode::ShapeError, "no affordance channels");
  Plane<double> sum = Plane<double>::Zero(channels.maps[0].rows(), channels.maps[0].cols());
  for (const auto& m : channels.maps) sum += m;
  return finish(sum, rows, cols);
}

AffordanceMap predict(const SceneImage& image, const std::optional<FullViewMask>& mask,
                      const std::vector<SubAction>& actions, const ModelState& model, const PredictOptions& options) {
  validate(image);
  SceneImage input = image;
  if (options.use_mask) {
    if (!mask) raise(ErrorCode::InvalidConfig, "masked prediction requested without a full-view mask");
    input = apply_full_view_mask(image, *mask);
  }
  const WcbConfig wcb_config = options.use_wcb ? model.wcb_config() : WcbConfig::disabled();
  const TokenSequence tokens = extract_features(input, model.backbone, wcb_config);
  const AffordanceChannels channels = affordance_head(tokens, model.head, model.meta.predicates);
  if (!options.use_actions) return aggregate_all(channels, image.rows(), image.cols());
  return aggregate_affordance(channels, actions, image.rows(), image.cols());
}

}  // namespace afford
