#ifndef AFFORD_PIPELINE_HPP
#define AFFORD_PIPELINE_HPP

// Orchestration of reasoning, grounding and localization, plus the batch
// evaluation and ablation drivers behind the command-line tool.

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "afford/arcot.hpp"
#include "afford/backends.hpp"
#include "afford/grounding.hpp"
#include "afford/llm.hpp"
#include "afford/metrics.hpp"
#include "afford/model.hpp"

namespace afford {

using Rgb = std::array<double, 3>;

struct AblationFlags {
  bool lmo = true;       // LLM object reasoning feeds grounding
  bool lma = true;       // LLM sub-actions select channels
  bool wcb = true;       // WCB injections in the backbone
  bool mask_off = true;  // false: entire image as input

  bool operator==(const AblationFlags&) const = default;
};

struct BackendConfig {
  std::string llm = "cache";  // cache | scripted | remote
  std::string llm_model = "gpt-4";
  std::filesystem::path llm_script;  // for "scripted"
  std::string segmenter = "color";   // color | command:<shell command>
  bool fallback_segmenter = true;    // color components when the primary yields nothing
  std::string image_encoder = "color-keyed";  // color-keyed | command:<shell command>
  std::string text_encoder = "color-keyed";
  std::string backbone = "color-probe";  // color-probe | model
  std::filesystem::path model_dir;
  int patch = 4;  // color-probe patch size
  std::map<std::string, Rgb> color_keys;        // object name -> RGB, color-keyed encoders
  std::map<std::string, Rgb> predicate_colors;  // predicate -> RGB, color-probe backbone
};

struct PipelineConfig {
  int k = kDefaultObjectCount;
  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;
  double boundary = kDefaultBoundary;
  double pad_ratio = kDefaultPadRatio;
  std::optional<double> sigma;  // rasterizer; default 2% of the diagonal
  std::filesystem::path predicates;  // empty: built-in list
  BackendConfig backends;
  AblationFlags flags;
  std::filesystem::path cache_dir;  // empty: in-memory transcripts only
  std::uint64_t seed = 0;
};

/// swing, carry, catch, pick up, sit, lie, hold.
PredicateList default_predicates();

/// Relative paths resolve against `base_dir`. Accepts either a config object
/// or a run record, whose "config" snapshot is used.
PipelineConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
std::string config_json(const PipelineConfig& config);
void validate(const PipelineConfig& config);

struct RunRecord {
  Instruction instruction;
  std::vector<std::string> objects;
  std::vector<SubAction> actions;
  std::vector<std::string> warnings;
  std::size_t mask_count = 0;
  /// (mask index, category name, probability) of each mask kept in the foreground.
  std::vector<std::tuple<std::size_t, std::string, double>> valid_masks;
  bool empty_foreground = false;
  std::string map_path;
  std::string overlay_path;
  std::map<std::string, double> stage_seconds;
  PipelineConfig config;
};

std::string run_record_json(const RunRecord& record);

struct RunOutput {
  AffordanceMap map;
  RunRecord record;
  std::optional<GroundingResult> grounding;
};

/// Holds the resolved backends for one configuration. Not thread-safe.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  const PipelineConfig& config() const { return config_; }
  const PredicateList& predicates() const { return predicates_; }
  const ModelState& model() const { return model_; }
  /// Set when the remote credential is missing and the client fell back to the cache.
  const std::optional<std::string>& diagnostic() const { return diagnostic_; }

  ObjectCategorySet reason_objects(const Instruction& instruction);
  ActionReasoning reason_actions(const ObjectCategorySet& objects, const Instruction& instruction);
  GroundingResult ground(const SceneImage& image, const ObjectCategorySet& objects);
  AffordanceMap localize(const SceneImage& image, const std::optional<FullViewMask>& mask,
                         const std::vector<SubAction>& actions);

  /// Full composition honouring the ablation flags. Stage failures are
  /// re-raised with the stage name attached.
  RunOutput run(const SceneImage& image, const Instruction& instruction);

 private:
  PipelineConfig config_;
  PredicateList predicates_;
  ModelState model_;
  std::unique_ptr<LlmClient> llm_;
  std::unique_ptr<Segmenter> segmenter_;
  std::unique_ptr<Segmenter> fallback_;
  std::unique_ptr<ImageEncoder> image_encoder_;
  std::unique_ptr<TextEncoder> text_encoder_;
  std::optional<std::string> diagnostic_;
};

/// Piecewise-linear "jet" ramp: r = clamp(1.5 - |4v - 3|), g = clamp(1.5 - |4v - 2|),
/// b = clamp(1.5 - |4v - 1|), v clamped to [0,1].
Rgb color_ramp(double v);

/// 0.5 * image + 0.5 * ramp(map), per pixel.
SceneImage render_overlay(const SceneImage& image, const AffordanceMap& map);

/// Writes <stem>.pgm (map), <stem>.overlay.ppm and <stem>.json (record) into `dir`
/// unless an explicit overlay path is given. Fills the record's output paths.
void write_run_outputs(RunOutput& output, const SceneImage& image, const std::filesystem::path& dir,
                       const std::string& stem,
                       const std::optional<std::filesystem::path>& overlay_path = std::nullopt);

/// Scores <predictions_dir>/<id>.pgm against each record's GT. Records without
/// a prediction file are reported as skipped. Throws NoMatchingPairs when no
/// record has a prediction.
MetricSummary evaluate_predictions(const std::filesystem::path& dataset_root, const std::filesystem::path& predictions_dir);

/// Runs the pipeline on each record (in manifest order) and scores the maps.
/// Throws NoMatchingPairs for an empty dataset.
MetricSummary evaluate_generated(const std::filesystem::path& dataset_root, const PipelineConfig& config);

struct AblationRow {
  AblationFlags flags;
  MetricSummary summary;
};

/// The eight (LMA, WCB, LMO) combinations: the seven reference rows, all-off first,
/// then the LMO-only row.
std::vector<AblationFlags> ablation_grid(const AblationFlags& base = {});
std::vector<AblationRow> run_ablation(const std::filesystem::path& dataset_root, const PipelineConfig& config);
std::string ablation_table(const std::vector<AblationRow>& rows);
std::string ablation_json(const std::vector<AblationRow>& rows);

}  // namespace afford

#endif  // AFFORD_PIPELINE_HPP
