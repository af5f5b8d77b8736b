#ifndef AFFORD_DATASET_HPP
#define AFFORD_DATASET_HPP

// LLMaFF-format datasets, the AGD20K directory layout, dense-point ground
// truth rasterization and dataset statistics.
//
// LLMaFF layout:
//   <root>/annotations.jsonl   one record per line:
//       {"id", "image", "instruction", "gt", "affordance_types": [...]}
//   <root>/images/             scene images (binary PPM)
//   <root>/gt/                 GT maps (binary PGM, activation = value / 255)

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "afford/arcot.hpp"
#include "afford/image.hpp"

namespace afford {

enum class AffordanceType { Handheld, Operable, Situable, Containable, Supportive, Decorative, Informative };

inline constexpr std::array<AffordanceType, 7> kAffordanceTypes = {
    AffordanceType::Handheld,   AffordanceType::Operable,   AffordanceType::Situable,   AffordanceType::Containable,
    AffordanceType::Supportive, AffordanceType::Decorative, AffordanceType::Informative};

std::string_view to_string(AffordanceType type);
std::optional<AffordanceType> parse_affordance_type(std::string_view name);

struct DatasetRecord {
  std::string id;
  std::filesystem::path image;  // relative to the dataset root
  Instruction instruction;
  std::filesystem::path gt;  // relative to the dataset root
  std::vector<AffordanceType> affordance_types;

  bool operator==(const DatasetRecord& other) const;
};

inline constexpr const char* kManifestName = "annotations.jsonl";

/// Validates every record; load order is manifest order.
std::vector<DatasetRecord> load_llmaff(const std::filesystem::path& root);

/// Writes a manifest for `records` under `dest` and copies their image and
/// GT files byte for byte from `source`.
void save_llmaff(const std::filesystem::path& source, const std::vector<DatasetRecord>& records,
                 const std::filesystem::path& dest);

/// Appends one manifest line while holding an exclusive lock on the manifest.
void append_record(const std::filesystem::path& root, const DatasetRecord& record);

std::string record_to_json_line(const DatasetRecord& record);

struct WeightedPoint {
  double row = 0.0;
  double col = 0.0;
  double weight = 1.0;
};

struct PointAnnotation {
  std::string id;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<WeightedPoint> points;
};

/// {"id", "points": [[row, col, weight], ...]} with optional "height" and
/// "width"; missing sizes must be supplied by the caller.
PointAnnotation load_point_annotation(const std::filesystem::path& path);

/// 2% of the image diagonal.
double default_sigma(Eigen::Index rows, Eigen::Index cols);

/// sum_k w_k * exp(-d_k^2 / (2 sigma^2)) per pixel, before normalization.
Plane<double> accumulate_points(const PointAnnotation& annotation, double sigma);

/// accumulate_points followed by min-max normalization to [0,1].
AffordanceMap rasterize_points(const PointAnnotation& annotation, double sigma);

enum class Split { Seen, Unseen };

struct Agd20kSample {
  std::filesystem::path image;
  std::string action;  // canonical predicate name
  std::string object;
};

/// Egocentric test images under <root>/<Seen|Unseen>/testset/egocentric/<action>/<object>/.
std::vector<Agd20kSample> load_agd20k_layout(const std::filesystem::path& root, Split split,
                                             const PredicateList& predicates);

struct Agd20kTraining {
  std::vector<Agd20kSample> exocentric;
  std::vector<Agd20kSample> egocentric;
};

/// Training images under <root>/<Seen|Unseen>/trainset/{exocentric,egocentric}/<action>/<object>/.
Agd20kTraining load_agd20k_training(const std::filesystem::path& root, Split split, const PredicateList& predicates);

struct DatasetStats {
  std::size_t records = 0;
  std::map<AffordanceType, std::size_t> type_counts;  // all seven types present
  std::map<std::size_t, std::size_t> word_length_histogram;
};

DatasetStats dataset_stats(const std::vector<DatasetRecord>& records);
std::string stats_json(const DatasetStats& stats);

}  // namespace afford

#endif  // AFFORD_DATASET_HPP
