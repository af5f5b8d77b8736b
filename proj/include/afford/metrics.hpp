#ifndef AFFORD_METRICS_HPP
#define AFFORD_METRICS_HPP

// KLD, SIM and NSS between a predicted affordance map and its ground truth.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "afford/error.hpp"
#include "afford/image.hpp"

namespace afford {

/// Regularizer inside the KLD logarithm (double machine epsilon, rounded).
inline constexpr double kKldEpsilon = 2.2204e-16;

namespace detail {

template <typename DA, typename DB>
void check_pair(const Eigen::ArrayBase<DA>& pred, const Eigen::ArrayBase<DB>& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    raise(ErrorCode::DimensionMismatch, "prediction is " + std::to_string(pred.rows()) + "x" +
                                            std::to_string(pred.cols()) + ", ground truth is " +
                                            std::to_string(gt.rows()) + "x" + std::to_string(gt.cols()));
  if (!pred.allFinite() || !gt.allFinite()) raise(ErrorCode::FormatError, "maps must be finite");
}

/// Scales a non-negative map to unit mass.
template <typename Derived>
Plane<typename Derived::Scalar> to_density(const Eigen::ArrayBase<Derived>& map, const char* which) {
  using Scalar = typename Derived::Scalar;
  if ((map < Scalar(0)).any()) raise(ErrorCode::FormatError, std::string(which) + " has negative values");
  const Scalar mass = map.sum();
  if (!(mass > Scalar(0))) raise(ErrorCode::ZeroMass, std::string(which) + " has zero mass");
  return map / mass;
}

}  // namespace detail

/// KL(gt || pred) over unit-mass maps: sum_i g_i * ln(eps + g_i / (eps + p_i)).
template <typename DA, typename DB>
typename DA::Scalar kld(const Eigen::ArrayBase<DA>& pred, const Eigen::ArrayBase<DB>& gt) {
  using Scalar = typename DA::Scalar;
  detail::check_pair(pred, gt);
  const auto p = detail::to_density(pred, "prediction");
  const auto g = detail::to_density(gt, "ground truth");
  const Scalar eps = Scalar(kKldEpsilon);
  return (g * (eps + g / (eps + p)).log()).sum();
}

/// Histogram intersection of the unit-mass maps.
template <typename DA, typename DB>
typename DA::Scalar sim(const Eigen::ArrayBase<DA>& pred, const Eigen::ArrayBase<DB>& gt) {
  detail::check_pair(pred, gt);
  const auto p = detail::to_density(pred, "prediction");
  const auto g = detail::to_density(gt, "ground truth");
  return p.min(g).sum();
}

struct NssResult {
  double value = 0.0;
  /// Prediction was constant; value is 0 by convention.
  bool degenerate = false;
};

/// Mean of the standardized prediction (population std) over fixation
/// pixels, i.e. pixels with gt > fixation_threshold.
template <typename DA, typename DB>
NssResult nss(const Eigen::ArrayBase<DA>& pred, const Eigen::ArrayBase<DB>& gt, double fixation_threshold = 0.0) {
  using Scalar = typename DA::Scalar;
  detail::check_pair(pred, gt);
  const auto fixations = (gt > typename DB::Scalar(fixation_threshold)).eval();
  const Eigen::Index count = fixations.count();
  if (count == 0) raise(ErrorCode::EmptyFixationSet, "ground truth has no pixel above the fixation threshold");
  const Scalar mean = pred.mean();
  const Scalar var = (pred - mean).square().mean();
  if (!(var > Scalar(0))) return {0.0, true};
  const Scalar sd = std::sqrt(var);
  Scalar total = 0;
  for (Eigen::Index c = 0; c < pred.cols(); ++c)
    for (Eigen::Index r = 0; r < pred.rows(); ++r)
      if (fixations(r, c)) total += (pred(r, c) - mean) / sd;
  return {static_cast<double>(total / Scalar(count)), false};
}

struct EvalPair {
  std::string id;
  std::optional<AffordanceMap> prediction;  // nullopt: prediction missing
  AffordanceMap ground_truth;
  std::string missing_reason = "missing prediction";
};

struct MetricRecord {
  std::string id;
  double kld = 0.0;
  double sim = 0.0;
  double nss = 0.0;
  bool nss_degenerate = false;
  bool skipped = false;
  std::string skip_reason;
};

struct MetricSummary {
  double mean_kld = 0.0;
  double mean_sim = 0.0;
  double mean_nss = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
  std::vector<MetricRecord> records;
};

/// Per-pair metrics and their means over the pairs that could be scored.
/// Pairs failing a precondition are kept as skipped records. Throws
/// AllPairsSkipped when nothing could be scored.
MetricSummary evaluate_batch(const std::vector<EvalPair>& pairs, double fixation_threshold = 0.0);

/// {"summary": {...}, "items": [{id, kld, sim, nss, nss_degenerate, skipped, skip_reason}]}
std::string report_json(const MetricSummary& summary);
std::string report_table(const MetricSummary& summary);

}  // namespace afford

#endif  // AFFORD_METRICS_HPP
