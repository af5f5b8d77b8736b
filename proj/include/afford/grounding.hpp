#ifndef AFFORD_GROUNDING_HPP
#define AFFORD_GROUNDING_HPP

// Zero-shot multi-object grounding: mask proposals, region classification by
// a temperature softmax over cosine similarities, and the full-view mask.

#include <cmath>
#include <utility>
#include <vector>

#include "afford/arcot.hpp"
#include "afford/backends.hpp"
#include "afford/image.hpp"

namespace afford {

inline constexpr double kDefaultAlpha = 0.1;
inline constexpr double kDefaultBoundary = 0.5;
inline constexpr double kDefaultPadRatio = 0.1;
/// Proposals covering at least this fraction of the image are backdrop.
inline constexpr double kBackgroundAreaFraction = 0.95;

/// Inclusive pixel bounds.
struct BoundingBox {
  Eigen::Index row_min = 0, col_min = 0, row_max = 0, col_max = 0;

  Eigen::Index height() const { return row_max - row_min + 1; }
  Eigen::Index width() const { return col_max - col_min + 1; }
  bool operator==(const BoundingBox&) const = default;
};

struct MaskCandidate {
  BoolMask mask;
  BoundingBox bbox;
  Eigen::Index area = 0;
};

/// Computes the tight bbox and area; throws EmptyMask for an all-false mask.
MaskCandidate make_candidate(BoolMask mask);

struct RegionClassification {
  Eigen::VectorXd probabilities;
  Eigen::Index best_category = 0;
  double best_probability = 0.0;
};

struct FullViewMask {
  BoolMask foreground;
  /// (mask index, category index) of every valid mask.
  std::vector<std::pair<std::size_t, Eigen::Index>> contributing;

  BoolMask background() const { return !foreground; }
};

struct GroundingConfig {
  double alpha = kDefaultAlpha;
  double pad_ratio = kDefaultPadRatio;
  double boundary = kDefaultBoundary;
};

/// Cosine similarity; 0 when either vector has zero norm.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar na = a.norm(), nb = b.norm();
  if (na == Scalar(0) || nb == Scalar(0)) return Scalar(0);
  return a.dot(b) / (na * nb);
}

/// softmax(similarities / alpha), evaluated with the maximum subtracted.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> temperature_softmax(
    const Eigen::MatrixBase<Derived>& similarities, typename Derived::Scalar alpha) {
  using Scalar = typename Derived::Scalar;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Vector logits = similarities.derived().template cast<Scalar>() / alpha;
  const Scalar shift = logits.maxCoeff();
  Vector e = (logits.array() - shift).exp().matrix();
  return e / e.sum();
}

/// Classification from a precomputed similarity vector. Ties in the best
/// category resolve to the lowest index.
RegionClassification classify_similarities(const Eigen::VectorXd& similarities, double alpha);

std::vector<MaskCandidate> generate_masks(const SceneImage& image, Segmenter& segmenter,
                                          Segmenter* fallback = nullptr);

/// Bbox crop grown by ceil(pad_ratio * max(h, w)) pixels per side, clamped to
/// the image. Non-mask pixels inside the crop are kept as context.
SceneImage crop_region(const SceneImage& image, const MaskCandidate& candidate, double pad_ratio);

RegionClassification classify_region(const SceneImage& region, const ObjectCategorySet& categories,
                                     ImageEncoder& image_encoder, TextEncoder& text_encoder, double alpha);

/// Same, reusing text embeddings computed once per category.
RegionClassification classify_region(const SceneImage& region, const std::vector<Embedding>& category_embeddings,
                                     ImageEncoder& image_encoder, double alpha);

FullViewMask build_full_view_mask(Eigen::Index rows, Eigen::Index cols, const std::vector<MaskCandidate>& candidates,
                                  const std::vector<RegionClassification>& classifications, double boundary);

struct GroundingBackends {
  Segmenter* segmenter = nullptr;
  Segmenter* fallback = nullptr;
  ImageEncoder* image_encoder = nullptr;
  TextEncoder* text_encoder = nullptr;
};

struct GroundingResult {
  FullViewMask mask;
  std::vector<MaskCandidate> candidates;
  std::vector<RegionClassification> classifications;
};

GroundingResult ground_objects(const SceneImage& image, const ObjectCategorySet& categories,
                               const GroundingBackends& backends, const GroundingConfig& config);

void validate(const GroundingConfig& config);

}  // namespace afford

#endif  // AFFORD_GROUNDING_HPP
