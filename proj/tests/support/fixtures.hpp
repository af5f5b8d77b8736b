#ifndef AFFORD_TEST_FIXTURES_HPP
#define AFFORD_TEST_FIXTURES_HPP

// Synthetic scenes shared by the unit tests, the acceptance binary and the
// fixture writer. Every scene is painted from axis-aligned colour blobs on
// black, so oracles can reason about exact pixel sets.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "afford/arcot.hpp"
#include "afford/image.hpp"
#include "afford/pipeline.hpp"

namespace fixtures {

using afford::Rgb;
using afford::SceneImage;

inline constexpr Rgb kRed{1.0, 0.0, 0.0};
inline constexpr Rgb kGreen{0.0, 1.0, 0.0};
inline constexpr Rgb kBlue{0.0, 0.0, 1.0};
inline constexpr Rgb kMagenta{1.0, 0.0, 1.0};
inline constexpr Rgb kGray{0.5, 0.5, 0.5};

struct Blob {
  Eigen::Index row = 0, col = 0, height = 0, width = 0;
  Rgb color{};

  bool contains(Eigen::Index r, Eigen::Index c) const {
    return r >= row && r < row + height && c >= col && c < col + width;
  }
};

SceneImage paint(Eigen::Index rows, Eigen::Index cols, const std::vector<Blob>& blobs, Rgb background = {0, 0, 0});
afford::BoolMask blob_mask(Eigen::Index rows, Eigen::Index cols, const Blob& blob);

/// Red chair and blue cup, plus a magenta distractor whose colour ties
/// between the chair and cup keys and therefore never passes the boundary.
struct Scene {
  SceneImage image;
  Blob chair, cup, distractor;
};

/// 48x48; `variant` moves the blobs around.
Scene two_blob_scene(int variant = 0);

struct SceneRecord {
  std::string id;
  std::string instruction;
  std::string objects_response;
  std::string actions_response;
  bool chair_target = false;
  bool cup_target = false;
  int variant = 0;
};

const std::vector<SceneRecord>& scene_records();

/// Writes scene.ppm, llm_script.json and config.json (color-keyed encoders,
/// color-probe backbone, scripted LLM, cache under <dir>/cache). Returns the
/// config path.
std::filesystem::path write_run_fixture(const std::filesystem::path& dir);

/// Writes an LLMaFF-format dataset of the scene records to <dir>/dataset and
/// a config to <dir>/config.json. Returns the config path.
std::filesystem::path write_dataset_fixture(const std::filesystem::path& dir);

/// GT of a record: unit points on a 2-px grid over the target blobs, sigma 1.
afford::AffordanceMap scene_ground_truth(const SceneRecord& record);

struct ToySet {
  std::vector<SceneImage> exo, ego;
  std::vector<std::size_t> labels;
  std::vector<Blob> targets;  // target blob in each ego image
  afford::PredicateList predicates;
};

/// Ten 32x32 exo/ego pairs alternating "sit" (red object) and "hold" (blue
/// object). Exo images add a gray actor next to the object; ego images add a
/// distractor of the other class.
ToySet toy_training_set(std::uint64_t seed);

/// Fresh, empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace fixtures

#endif  // AFFORD_TEST_FIXTURES_HPP
