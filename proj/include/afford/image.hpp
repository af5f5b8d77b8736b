#ifndef AFFORD_IMAGE_HPP
#define AFFORD_IMAGE_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>

#include "afford/error.hpp"

namespace afford {

template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using BoolMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// H x W grid of activations in [0,1].
using AffordanceMap = Plane<double>;

/// Three planes (R, G, B) of identical size with intensities in [0,1].
template <typename Scalar>
struct RgbImage {
  std::array<Plane<Scalar>, 3> channels;

  RgbImage() = default;
  RgbImage(Eigen::Index rows, Eigen::Index cols) {
    for (auto& c : channels) c = Plane<Scalar>::Zero(rows, cols);
  }

  Eigen::Index rows() const { return channels[0].rows(); }
  Eigen::Index cols() const { return channels[0].cols(); }

  void set(Eigen::Index r, Eigen::Index c, Scalar red, Scalar green, Scalar blue) {
    channels[0](r, c) = red;
    channels[1](r, c) = green;
    channels[2](r, c) = blue;
  }

  bool operator==(const RgbImage& other) const {
    for (int k = 0; k < 3; ++k) {
      if (channels[k].rows() != other.channels[k].rows() || channels[k].cols() != other.channels[k].cols())
        return false;
      if ((channels[k] != other.channels[k]).any()) return false;
    }
    return true;
  }
};

using SceneImage = RgbImage<double>;

/// Throws FormatError unless the image is non-empty, has consistent planes and
/// every intensity lies in [0,1].
template <typename Scalar>
void validate(const RgbImage<Scalar>& image) {
  if (image.rows() < 1 || image.cols() < 1) raise(ErrorCode::FormatError, "image must be at least 1x1");
  for (const auto& c : image.channels) {
    if (c.rows() != image.rows() || c.cols() != image.cols())
      raise(ErrorCode::FormatError, "image planes differ in size");
    if (!c.allFinite() || (c < Scalar(0)).any() || (c > Scalar(1)).any())
      raise(ErrorCode::FormatError, "image intensities must lie in [0,1]");
  }
}

/// Bilinear resize with half-pixel centres (align_corners = false), borders
/// clamped. Identity when the size is unchanged.
template <typename Derived>
Plane<typename Derived::Scalar> resize_bilinear(const Eigen::ArrayBase<Derived>& src, Eigen::Index rows,
                                                Eigen::Index cols) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index sr = src.rows(), sc = src.cols();
  Plane<Scalar> out(rows, cols);
  if (sr == rows && sc == cols) {
    out = src;
    return out;
  }
  const Scalar ry = Scalar(sr) / Scalar(rows);
  const Scalar rx = Scalar(sc) / Scalar(cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    Scalar y = std::clamp((Scalar(r) + Scalar(0.5)) * ry - Scalar(0.5), Scalar(0), Scalar(sr - 1));
    auto y0 = static_cast<Eigen::Index>(std::floor(y));
    Eigen::Index y1 = std::min(y0 + 1, sr - 1);
    Scalar fy = y - Scalar(y0);
    for (Eigen::Index c = 0; c < cols; ++c) {
      Scalar x = std::clamp((Scalar(c) + Scalar(0.5)) * rx - Scalar(0.5), Scalar(0), Scalar(sc - 1));
      auto x0 = static_cast<Eigen::Index>(std::floor(x));
      Eigen::Index x1 = std::min(x0 + 1, sc - 1);
      Scalar fx = x - Scalar(x0);
      Scalar top = src(y0, x0) * (Scalar(1) - fx) + src(y0, x1) * fx;
      Scalar bottom = src(y1, x0) * (Scalar(1) - fx) + src(y1, x1) * fx;
      out(r, c) = top * (Scalar(1) - fy) + bottom * fy;
    }
  }
  return out;
}

/// (v - min) / (max - min). A constant input maps to all zeros.
template <typename Derived>
Plane<typename Derived::Scalar> minmax_normalize(const Eigen::ArrayBase<Derived>& values) {
  using Scalar = typename Derived::Scalar;
  const Plane<Scalar> v = values;
  const Scalar lo = v.minCoeff();
  const Scalar hi = v.maxCoeff();
  if (!(hi > lo)) return Plane<Scalar>::Zero(v.rows(), v.cols());
  Plane<Scalar> out = (v - lo) / (hi - lo);
  // pin the extremes so min == 0 and max == 1 hold exactly
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (v(i) == lo) out(i) = Scalar(0);
    if (v(i) == hi) out(i) = Scalar(1);
    out(i) = std::clamp(out(i), Scalar(0), Scalar(1));
  }
  return out;
}

}  // namespace afford

#endif  // AFFORD_IMAGE_HPP
