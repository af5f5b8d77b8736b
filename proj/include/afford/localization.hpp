#ifndef AFFORD_LOCALIZATION_HPP
#define AFFORD_LOCALIZATION_HPP

#include <optional>
#include <vector>

#include "afford/arcot.hpp"
#include "afford/grounding.hpp"
#include "afford/model.hpp"

namespace afford {

/// C maps of size h x w, in predicate-list order.
struct AffordanceChannels {
  std::vector<Plane<double>> maps;
  PredicateList channel_order;
};

/// Zeroes background pixels. With `bypass` the image is returned untouched
/// (the entire-image input variant).
SceneImage apply_full_view_mask(const SceneImage& image, const FullViewMask& mask, bool bypass = false);

TokenSequence extract_features(const SceneImage& image, const PatchBackbone& backbone, const WcbConfig& wcb_config);

AffordanceChannels affordance_head(const TokenSequence& tokens, const AffordanceHead& head,
                                   const PredicateList& predicates);

/// Sum of the distinct predicate channels named by `actions`, bilinearly
/// resized to rows x cols and min-max normalized.
AffordanceMap aggregate_affordance(const AffordanceChannels& channels, const std::vector<SubAction>& actions,
                                   Eigen::Index rows, Eigen::Index cols);

/// Uniform aggregation over every channel.
AffordanceMap aggregate_all(const AffordanceChannels& channels, Eigen::Index rows, Eigen::Index cols);

struct PredictOptions {
  bool use_mask = true;     // false: entire image as input
  bool use_wcb = true;      // false: no WCB injections
  bool use_actions = true;  // false: aggregate every channel
};

/// aggregate(head(features(mask(image)))). `mask` may be omitted when
/// `options.use_mask` is false.
AffordanceMap predict(const SceneImage& image, const std::optional<FullViewMask>& mask,
                      const std::vector<SubAction>& actions, const ModelState& model,
                      const PredictOptions& options = {});

}  // namespace afford

#endif  // AFFORD_LOCALIZATION_HPP
