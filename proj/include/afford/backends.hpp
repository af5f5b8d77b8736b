#ifndef AFFORD_BACKENDS_HPP
#define AFFORD_BACKENDS_HPP

// Segmentation and embedding backends used by zero-shot grounding. External
// models (a promptable segmenter, an image/text embedding model) are reached
// through command adapters; the built-in implementations are deterministic
// and need no model weights.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "afford/image.hpp"

namespace afford {

/// COCO-style uncompressed run-length encoding: column-major pixel order,
/// runs alternate starting with a (possibly empty) run of false.
struct RleMask {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<std::uint32_t> counts;
};

RleMask rle_encode(const BoolMask& mask);
BoolMask rle_decode(const RleMask& rle);

class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::string id() const = 0;
  /// Raw proposals; every mask must match the image size.
  virtual std::vector<BoolMask> segment(const SceneImage& image) = 0;
};

/// Quantizes each channel to `levels` steps and returns the 4-connected
/// components of every quantized colour. When more than one colour is
/// present, the most frequent colour is treated as backdrop and skipped.
class ColorComponentSegmenter final : public Segmenter {
 public:
  explicit ColorComponentSegmenter(int levels = 4) : levels_(levels) {}
  std::string id() const override { return "color-components"; }
  std::vector<BoolMask> segment(const SceneImage& image) override;

 private:
  int levels_;
};

/// Runs `command <image.ppm>` and reads {"masks": [{"size": [h, w],
/// "counts": [...]}, ...]} from its stdout.
class CommandSegmenter final : public Segmenter {
 public:
  explicit CommandSegmenter(std::string command) : command_(std::move(command)) {}
  std::string id() const override { return "command:" + command_; }
  std::vector<BoolMask> segment(const SceneImage& image) override;

 private:
  std::string command_;
};

using Embedding = Eigen::VectorXd;

class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual Embedding embed(const SceneImage& region) = 0;
  virtual bool concurrent_safe() const { return false; }
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual Embedding embed(const std::string& text) = 0;
  virtual bool concurrent_safe() const { return false; }
};

/// Deterministic encoder pair living in RGB space. A region embeds as its
/// normalized mean colour. A category name embeds as the colour registered
/// for it (a registered key whose words all occur in the name), otherwise as
/// a colour derived from a seeded hash of the name.
class ColorKeyedEncoder final : public ImageEncoder, public TextEncoder {
 public:
  explicit ColorKeyedEncoder(std::map<std::string, std::array<double, 3>> colors = {}, std::uint64_t seed = 0);

  Embedding embed(const SceneImage& region) override;
  Embedding embed(const std::string& text) override;
  bool concurrent_safe() const override { return true; }

 private:
  std::map<std::string, std::array<double, 3>> colors_;
  std::uint64_t seed_;
};

/// `command <region.ppm>` must print a JSON array of numbers.
class CommandImageEncoder final : public ImageEncoder {
 public:
  explicit CommandImageEncoder(std::string command) : command_(std::move(command)) {}
  Embedding embed(const SceneImage& region) override;

 private:
  std::string command_;
};

/// `command` receives the text on stdin and must print a JSON array of numbers.
class CommandTextEncoder final : public TextEncoder {
 public:
  explicit CommandTextEncoder(std::string command) : command_(std::move(command)) {}
  Embedding embed(const std::string& text) override;

 private:
  std::string command_;
};

/// 64-bit FNV-1a; stable across platforms.
std::uint64_t fnv1a(const std::string& data, std::uint64_t seed = 0);

/// Runs a shell command, feeding `stdin_data`, and returns stdout. Throws
/// IoError on a nonzero exit status.
std::string run_command(const std::string& command, const std::string& stdin_data = {});

}  // namespace afford

#endif  // AFFORD_BACKENDS_HPP
