#ifndef AFFORD_MODEL_HPP
#define AFFORD_MODEL_HPP

// Feature backbone, affordance head and the persisted model state.
//
// Backbone: non-overlapping P x P patches are flattened (channel, row, col)
// and linearly embedded to width D; each of the `depth` blocks applies a
// residual position-wise feed-forward step x <- x + act(x W + b), optionally
// followed by WCB.
//
// Head: position-wise feed-forward D -> H with ReLU, two 3x3 convolutions
// H -> H with ReLU (zero padding), and a 1x1 projection H -> C, C being the
// predicate count.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "afford/arcot.hpp"
#include "afford/image.hpp"
#include "afford/wcb.hpp"

namespace afford {

/// Row-vector convention: y = x * weight + bias, bias stored as 1 x out.
struct Linear {
  Eigen::MatrixXd weight;
  Eigen::MatrixXd bias;

  Eigen::Index in() const { return weight.rows(); }
  Eigen::Index out() const { return weight.cols(); }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd y = x * weight;
    y.rowwise() += bias.row(0);
    return y;
  }
};

enum class Activation { Identity, Tanh };

struct NamedParameter {
  std::string name;
  Eigen::MatrixXd* value;
};

struct NamedConstParameter {
  std::string name;
  const Eigen::MatrixXd* value;
};

class PatchBackbone {
 public:
  std::string id = "mock-vit";
  int patch = 4;
  Activation activation = Activation::Tanh;
  Linear embed;
  std::vector<Linear> blocks;

  /// Fixed random weights drawn from `seed`.
  static PatchBackbone random(int patch, int width, int depth, std::uint64_t seed);

  int depth() const { return static_cast<int>(blocks.size()); }
  Eigen::Index width() const { return embed.out(); }

  /// Patch-embedded tokens before any block. Throws ShapeError when the image
  /// is smaller than one patch; trailing pixels that do not fill a patch are
  /// ignored.
  TokenSequence embed_patches(const SceneImage& image) const;

  struct Trace {
    TokenSequence output;
    Eigen::MatrixXd last_input;  // input of the final block
    Eigen::MatrixXd last_pre;    // x W + b of the final block
  };

  TokenSequence forward(const SceneImage& image, const WcbConfig& wcb_config) const;
  Trace forward_traced(const SceneImage& image, const WcbConfig& wcb_config) const;

  std::vector<NamedParameter> parameters();
  std::vector<NamedConstParameter> parameters() const;
};

/// Im2col for a 3x3 window with zero padding: tap t = (dr+1)*3 + (dc+1)
/// occupies columns [t*D, (t+1)*D).
Eigen::MatrixXd im2col3x3(const Eigen::MatrixXd& x, Eigen::Index rows, Eigen::Index cols);
/// Adjoint of im2col3x3.
Eigen::MatrixXd col2im3x3(const Eigen::MatrixXd& cols_matrix, Eigen::Index rows, Eigen::Index cols, Eigen::Index width);

class AffordanceHead {
 public:
  Linear ffn;    // D -> H
  Linear conv1;  // 9H -> H
  Linear conv2;  // 9H -> H
  Linear proj;   // H -> C

  static AffordanceHead random(Eigen::Index in_width, Eigen::Index hidden, Eigen::Index channels, std::uint64_t seed);
  /// FFN and convolutions pass features through unchanged (H = D); the
  /// projection averages the features into every channel.
  static AffordanceHead identity(Eigen::Index width, Eigen::Index channels);

  Eigen::Index channels() const { return proj.out(); }
  Eigen::Index hidden() const { return ffn.out(); }

  struct Activations {
    Eigen::MatrixXd input, ffn_pre, ffn_out, cols1, conv1_pre, conv1_out, cols2, conv2_pre, features, scores;
    Eigen::Index rows = 0, cols = 0;
  };

  /// Scores are N x C, one row per patch token.
  Activations forward(const TokenSequence& tokens) const;

  std::vector<NamedParameter> parameters();
  std::vector<NamedConstParameter> parameters() const;
};

struct ModelMetadata {
  PredicateList predicates;
  double beta = kDefaultBeta;
  std::set<int> injection_layers;
  std::string backbone_id = "mock-vit";
  std::uint64_t seed = 0;
};

struct ModelShape {
  int patch = 4;
  int width = 16;
  int depth = 2;
  int hidden = 16;
};

struct ModelState {
  ModelMetadata meta;
  PatchBackbone backbone;
  AffordanceHead head;

  WcbConfig wcb_config() const { return WcbConfig{meta.beta, meta.injection_layers}; }
};

/// Randomly initialized model; WCB injected after every block.
ModelState make_model(const PredicateList& predicates, const ModelShape& shape, std::uint64_t seed,
                      double beta = kDefaultBeta);

/// Directory layout: metadata.json plus one <group>.bin per parameter group.
/// Binary layout (little-endian): magic "WAFT", u32 version = 1, u32 dtype
/// (1 = float64), u32 ndim, ndim x u64 shape, then row-major data.
/// Hand-set mock: width-3 features are the patch mean RGB, blocks are zero
/// residuals, the head passes features through and channel c scores the dot
/// product with `predicate_colors[c]` (unlisted predicates score 0).
ModelState make_color_probe_model(const PredicateList& predicates,
                                  const std::map<std::string, std::array<double, 3>>& predicate_colors, int patch = 4,
                                  double beta = kDefaultBeta);

void save_model(const ModelState& model, const std::filesystem::path& dir);
ModelState load_model(const std::filesystem::path& dir);

void write_array(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_array(const std::filesystem::path& path);

}  // namespace afford

#endif  // AFFORD_MODEL_HPP
