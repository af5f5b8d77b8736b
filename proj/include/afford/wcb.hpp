#ifndef AFFORD_WCB_HPP
#define AFFORD_WCB_HPP

#include <Eigen/Dense>

#include <set>

#include "afford/error.hpp"

namespace afford {

inline constexpr double kDefaultBeta = 0.88;

/// Token sequence laid out one token per row. Patch tokens tile a
/// grid_rows x grid_cols grid in row-major order; an optional class token
/// occupies row 0.
struct TokenSequence {
  Eigen::MatrixXd tokens;
  Eigen::Index grid_rows = 0;
  Eigen::Index grid_cols = 0;
  bool has_class_token = false;

  Eigen::Index patch_count() const { return tokens.rows() - (has_class_token ? 1 : 0); }
  Eigen::Index width() const { return tokens.cols(); }
};

struct WcbConfig {
  double beta = kDefaultBeta;
  /// Backbone layer indices after whose feed-forward output WCB runs.
  std::set<int> injection_layers;

  static WcbConfig all_layers(int depth, double beta = kDefaultBeta) {
    WcbConfig c{beta, {}};
    for (int i = 0; i < depth; ++i) c.injection_layers.insert(i);
    return c;
  }
  static WcbConfig disabled() { return WcbConfig{kDefaultBeta, {}}; }
};

/// Weighted context broadcasting over rows `skip..end`:
///   out_i = beta * x_i + (1 - beta) * mean_j x_j
/// Rows before `skip` (a class token) pass through unchanged.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> wcb(const Eigen::MatrixBase<Derived>& tokens,
                                                                             typename Derived::Scalar beta,
                                                                             Eigen::Index skip = 0) {
  using Scalar = typename Derived::Scalar;
  if (!(beta >= Scalar(0) && beta <= Scalar(1))) raise(ErrorCode::InvalidConfig, "WCB beta must lie in [0,1]");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out = tokens;
  const Eigen::Index n = tokens.rows() - skip;
  if (n <= 0) return out;
  auto patches = out.bottomRows(n);
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> context = patches.colwise().mean() * (Scalar(1) - beta);
  patches *= beta;
  patches.rowwise() += context;
  return out;
}

/// WCB is the symmetric linear map beta*I + (1-beta)/N * 11^T, so its
/// vector-Jacobian product is the map itself.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> wcb_backward(
    const Eigen::MatrixBase<Derived>& grad, typename Derived::Scalar beta, Eigen::Index skip = 0) {
  return wcb(grad, beta, skip);
}

inline TokenSequence wcb(const TokenSequence& seq, double beta) {
  TokenSequence out = seq;
  out.tokens = wcb(seq.tokens, beta, seq.has_class_token ? 1 : 0);
  return out;
}

}  // namespace afford

#endif  // AFFORD_WCB_HPP
