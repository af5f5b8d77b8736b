#include "afford/grounding.hpp"

#include <algorithm>
#include <future>
#include <thread>

#include "afford/error.hpp"

namespace afford {

MaskCandidate make_candidate(BoolMask mask) {
  MaskCandidate c;
  c.area = mask.count();
  if (c.area == 0) raise(ErrorCode::EmptyMask, "mask has no foreground pixel");
  c.bbox = {mask.rows(), mask.cols(), -1, -1};
  for (Eigen::Index col = 0; col < mask.cols(); ++col)
    for (Eigen::Index row = 0; row < mask.rows(); ++row) {
      if (!mask(row, col)) continue;
      c.bbox.row_min = std::min(c.bbox.row_min, row);
      c.bbox.col_min = std::min(c.bbox.col_min, col);
      c.bbox.row_max = std::max(c.bbox.row_max, row);
      c.bbox.col_max = std::max(c.bbox.col_max, col);
    }
  c.mask = std::move(mask);
  return c;
}

RegionClassification classify_similarities(const Eigen::VectorXd& similarities, double alpha) {
  if (similarities.size() < 1) raise(ErrorCode::EmptyObjectSet, "no categories to classify against");
  if (!(alpha > 0.0)) raise(ErrorCode::InvalidConfig, "alpha must be > 0");
  if (!similarities.allFinite()) raise(ErrorCode::EncoderFailure, "non-finite similarity");
  RegionClassification out;
  out.probabilities = temperature_softmax(similarities, alpha);
  // argmax on the similarities themselves so ties do not depend on rounding
  // inside the exponentials
  similarities.maxCoeff(&out.best_category);
  out.best_probability = out.probabilities(out.best_category);
  return out;
}

std::vector<MaskCandidate> generate_masks(const SceneImage& image, Segmenter& segmenter, Segmenter* fallback) {
  validate(image);
  std::vector<BoolMask> raw;
  try {
    raw = segmenter.segment(image);
  } catch (const Error&) {
    if (fallback == nullptr) throw;
  }
  if (raw.empty() && fallback != nullptr) raw = fallback->segment(image);
  if (raw.empty()) raise(ErrorCode::SegmenterFailure, "segmenter produced no masks");

  const Eigen::Index total = image.rows() * image.cols();
  std::vector<MaskCandidate> out;
  for (auto& m : raw) {
    if (m.rows() != image.rows() || m.cols() != image.cols())
      raise(ErrorCode::DimensionMismatch, "segmenter mask size differs from the image");
    const Eigen::Index area = m.count();
    if (area == 0) continue;
    // a single-pixel image has no backdrop to separate from
    if (total > 1 && static_cast<double>(area) >= kBackgroundAreaFraction * static_cast<double>(total)) continue;
    out.push_back(make_candidate(std::move(m)));
  }
  return out;
}

SceneImage crop_region(const SceneImage& image, const MaskCandidate& candidate, double pad_ratio) {
  if (!(pad_ratio >= 0.0)) raise(ErrorCode::InvalidConfig, "pad ratio must be >= 0");
  if (candidate.mask.rows() != image.rows() || candidate.mask.cols() != image.cols())
    raise(ErrorCode::DimensionMismatch, "mask size differs from the image");
  if (!candidate.mask.any()) raise(ErrorCode::EmptyMask, "cannot crop an empty mask");
  const BoundingBox& b = candidate.bbox;
  const auto pad = static_cast<Eigen::Index>(std::ceil(pad_ratio * double(std::max(b.height(), b.width()))));
  const Eigen::Index r0 = std::max<Eigen::Index>(0, b.row_min - pad);
  const Eigen::Index c0 = std::max<Eigen::Index>(0, b.col_min - pad);
  const Eigen::Index r1 = std::min(image.rows() - 1, b.row_max + pad);
  const Eigen::Index c1 = std::min(image.cols() - 1, b.col_max + pad);
  SceneImage crop;
  for (int k = 0; k < 3; ++k) crop.channels[k] = image.channels[k].block(r0, c0, r1 - r0 + 1, c1 - c0 + 1);
  return crop;
}

RegionClassification classify_region(const SceneImage& region, const std::vector<Embedding>& category_embeddings,
                                     ImageEncoder& image_encoder, double alpha) {
  if (category_embeddings.empty()) raise(ErrorCode::EmptyObjectSet, "no categories to classify against");
  const Embedding v = image_encoder.embed(region);
  Eigen::VectorXd sims(static_cast<Eigen::Index>(category_embeddings.size()));
  for (std::size_t i = 0; i < category_embeddings.size(); ++i) {
    if (category_embeddings[i].size() != v.size())
      raise(ErrorCode::EncoderFailure, "image and text embeddings differ in length");
    sims(static_cast<Eigen::Index>(i)) = cosine_similarity(v, category_embeddings[i]);
  }
  return classify_similarities(sims, alpha);
}

RegionClassification classify_region(const SceneImage& region, const ObjectCategorySet& categories,
                                     ImageEncoder& image_encoder, TextEncoder& text_encoder, double alpha) {
  std::vector<Embedding> embeddings;
  for (const auto& name : categories.categories) embeddings.push_back(text_encoder.embed(name));
  return classify_region(region, embeddings, image_encoder, alpha);
}

FullViewMask build_full_view_mask(Eigen::Index rows, Eigen::Index cols, const std::vector<MaskCandidate>& candidates,
                                  const std::vector<RegionClassification>& classifications, double boundary) {
  if (!(boundary > 0.0 && boundary < 1.0)) raise(ErrorCode::InvalidConfig, "boundary must lie in (0,1)");
  if (candidates.size() != classifications.size())
    raise(ErrorCode::DimensionMismatch, "candidate and classification lists differ in length");
  FullViewMask out{BoolMask::Constant(rows, cols, false), {}};
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& m = candidates[i].mask;
    if (m.rows() != rows || m.cols() != cols) raise(ErrorCode::DimensionMismatch, "mask sizes differ");
    if (classifications[i].best_probability > boundary) {
      out.foreground = out.foreground || m;
      out.contributing.emplace_back(i, classifications[i].best_category);
    }
  }
  return out;
}

void validate(const GroundingConfig& config) {
  if (!(config.alpha > 0.0)) raise(ErrorCode::InvalidConfig, "alpha must be > 0");
  if (!(config.pad_ratio >= 0.0)) raise(ErrorCode::InvalidConfig, "pad ratio must be >= 0");
  if (!(config.boundary > 0.0 && config.boundary < 1.0))
    raise(ErrorCode::InvalidConfig, "boundary must lie in (0,1)");
}

GroundingResult ground_objects(const SceneImage& image, const ObjectCategorySet& categories,
                               const GroundingBackends& backends, const GroundingConfig& config) {
  validate(config);
  if (categories.categories.empty()) raise(ErrorCode::EmptyObjectSet, "object set is empty");
  if (!backends.segmenter || !backends.image_encoder || !backends.text_encoder)
    raise(ErrorCode::InvalidConfig, "grounding backends are not configured");

  GroundingResult result;
  result.candidates = generate_masks(image, *backends.segmenter, backends.fallback);

  std::vector<Embedding> text;
  for (const auto& name : categories.categories) text.push_back(backends.text_encoder->embed(name));

  const std::size_t n = result.candidates.size();
  result.classifications.resize(n);
  auto classify = [&](std::size_t i) {
    result.classifications[i] = classify_region(crop_region(image, result.candidates[i], config.pad_ratio), text,
                                                *backends.image_encoder, config.alpha);
  };
  const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  if (backends.image_encoder->concurrent_safe() && n > 1 && workers > 1) {
    const std::size_t threads = std::min<std::size_t>(workers, n);
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 0; w < threads; ++w)
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = w; i < n; i += threads) classify(i);
      }));
    for (auto& j : jobs) j.get();
  } else {
    for (std::size_t i = 0; i < n; ++i) classify(i);
  }

  result.mask = build_full_view_mask(image.rows(), image.cols(), result.candidates, result.classifications,
                                     config.boundary);
  return result;
}

}  // namespace afford
