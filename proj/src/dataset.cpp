#include "afford/dataset.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "afford/error.hpp"
#include "afford/pnm.hpp"

namespace afford {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(AffordanceType type) {
  switch (type) {
    case AffordanceType::Handheld: return "handheld";
    case AffordanceType::Operable: return "operable";
    case AffordanceType::Situable: return "situable";
    case AffordanceType::Containable: return "containable";
    case AffordanceType::Supportive: return "supportive";
    case AffordanceType::Decorative: return "decorative";
    case AffordanceType::Informative: return "informative";
  }
  return "unknown";
}

std::optional<AffordanceType> parse_affordance_type(std::string_view name) {
  const std::string key = text::normalize(name);
  for (AffordanceType t : kAffordanceTypes)
    if (to_string(t) == key) return t;
  return std::nullopt;
}

bool DatasetRecord::operator==(const DatasetRecord& other) const {
  return id == other.id && image == other.image && instruction.text == other.instruction.text && gt == other.gt &&
         affordance_types == other.affordance_types;
}

std::string record_to_json_line(const DatasetRecord& record) {
  json types = json::array();
  for (auto t : record.affordance_types) types.push_back(std::string(to_string(t)));
  json j = {{"id", record.id},
            {"image", record.image.generic_string()},
            {"instruction", record.instruction.text},
            {"gt", record.gt.generic_string()},
            {"affordance_types", types}};
  return j.dump();
}

namespace {

[[noreturn]] void broken(const std::string& id, const std::string& reason) {
  raise(ErrorCode::BrokenRecord, "record '" + id + "': " + reason);
}

DatasetRecord parse_record(const json& j, std::size_t lineno) {
  std::string id = "line " + std::to_string(lineno);
  try {
    id = j.at("id").get<std::string>();
    DatasetRecord r;
    r.id = id;
    r.image = j.at("image").get<std::string>();
    r.gt = j.at("gt").get<std::string>();
    const std::string text = j.at("instruction").get<std::string>();
    if (text::trim(text).empty()) broken(id, "empty instruction");
    r.instruction = Instruction{text, id};
    for (const auto& t : j.value("affordance_types", json::array())) {
      auto type = parse_affordance_type(t.get<std::string>());
      if (!type) broken(id, "unknown affordance type '" + t.get<std::string>() + "'");
      r.affordance_types.push_back(*type);
    }
    return r;
  } catch (const json::exception& e) {
    broken(id, e.what());
  }
}

}  // namespace

std::vector<DatasetRecord> load_llmaff(const fs::path& root) {
  const fs::path manifest = root / kManifestName;
  if (!fs::exists(manifest)) raise(ErrorCode::MissingManifest, "no " + std::string(kManifestName) + " in " + root.string());
  std::ifstream in(manifest);
  std::vector<DatasetRecord> records;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      broken("line " + std::to_string(lineno), e.what());
    }
    DatasetRecord r = parse_record(j, lineno);
    if (!ids.insert(r.id).second) broken(r.id, "duplicate id");
    if (!fs::exists(root / r.image)) broken(r.id, "missing image " + r.image.string());
    if (!fs::exists(root / r.gt)) broken(r.id, "missing GT " + r.gt.string());
    try {
      const Gray8 gt = read_pgm(root / r.gt);
      const SceneImage image = read_ppm(root / r.image);
      if (gt.rows() != image.rows() || gt.cols() != image.cols()) broken(r.id, "GT and image sizes differ");
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BrokenRecord) throw;
      broken(r.id, e.what());
    }
    records.push_back(std::move(r));
  }
  return records;
}

void save_llmaff(const fs::path& source, const std::vector<DatasetRecord>& records, const fs::path& dest) {
  fs::create_directories(dest);
  std::string manifest;
  for (const auto& r : records) {
    for (const fs::path* rel : {&r.image, &r.gt}) {
      const fs::path target = dest / *rel;
      if (fs::equivalent(source, dest)) continue;
      write_file(target, read_file(source / *rel));
    }
    manifest += record_to_json_line(r) + "\n";
  }
  write_file(dest / kManifestName, manifest);
}

void append_record(const fs::path& root, const DatasetRecord& record) {
  fs::create_directories(root);
  const fs::path manifest = root / kManifestName;
  const int fd = ::open(manifest.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) raise(ErrorCode::IoError, "cannot open " + manifest.string());
  if (::flock(fd, LOCK_EX) != 0) {
    ::close(fd);
    raise(ErrorCode::IoError, "cannot lock " + manifest.string());
  }
  const std::string line = record_to_json_line(record) + "\n";
  const ssize_t written = ::write(fd, line.data(), line.size());
  ::flock(fd, LOCK_UN);
  ::close(fd);
  if (written != static_cast<ssize_t>(line.size())) raise(ErrorCode::IoError, "short write to " + manifest.string());
}

PointAnnotation load_point_annotation(const fs::path& path) {
  PointAnnotation a;
  try {
    const json j = json::parse(read_file(path));
    a.id = j.value("id", path.stem().string());
    a.rows = j.value("height", Eigen::Index{0});
    a.cols = j.value("width", Eigen::Index{0});
    for (const auto& p : j.at("points")) {
      WeightedPoint wp{p.at(0).get<double>(), p.at(1).get<double>(), p.size() > 2 ? p.at(2).get<double>() : 1.0};
      a.points.push_back(wp);
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
  return a;
}

double default_sigma(Eigen::Index rows, Eigen::Index cols) {
  return 0.02 * std::hypot(static_cast<double>(rows), static_cast<double>(cols));
}

Plane<double> accumulate_points(const PointAnnotation& annotation, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) raise(ErrorCode::InvalidSigma, "sigma must be a positive number");
  if (annotation.rows < 1 || annotation.cols < 1) raise(ErrorCode::ShapeError, "annotation has no image size");
  if (annotation.points.empty()) raise(ErrorCode::OutOfBoundsPoint, "annotation has no points");
  for (const auto& p : annotation.points) {
    if (!(p.row >= 0.0 && p.col >= 0.0 && p.row <= double(annotation.rows - 1) && p.col <= double(annotation.cols - 1)))
      raise(ErrorCode::OutOfBoundsPoint, "point (" + std::to_string(p.row) + ", " + std::to_string(p.col) +
                                             ") lies outside the " + std::to_string(annotation.rows) + "x" +
                                             std::to_string(annotation.cols) + " image");
    if (!(p.weight > 0.0)) raise(ErrorCode::FormatError, "point weights must be > 0");
  }
  const double inv = 1.0 / (2.0 * sigma * sigma);
  const Eigen::ArrayXd rows = Eigen::ArrayXd::LinSpaced(annotation.rows, 0.0, double(annotation.rows - 1));
  const Eigen::ArrayXd cols = Eigen::ArrayXd::LinSpaced(annotation.cols, 0.0, double(annotation.cols - 1));
  Plane<double> heat = Plane<double>::Zero(annotation.rows, annotation.cols);
  for (const auto& p : annotation.points) {
    // separable kernel: exp(-(dr^2 + dc^2) k) = exp(-dr^2 k) * exp(-dc^2 k)
    const Eigen::ArrayXd gr = (-(rows - p.row).square() * inv).exp();
    const Eigen::ArrayXd gc = (-(cols - p.col).square() * inv).exp();
    heat += p.weight * (gr.matrix() * gc.matrix().transpose()).array();
  }
  return heat;
}

AffordanceMap rasterize_points(const PointAnnotation& annotation, double sigma) {
  return minmax_normalize(accumulate_points(annotation, sigma));
}

namespace {

fs::path split_dir(const fs::path& root, Split split) {
  const std::string name = split == Split::Seen ? "Seen" : "Unseen";
  for (const std::string& candidate : {name, text::casefold(name)})
    if (fs::is_directory(root / candidate)) return root / candidate;
  raise(ErrorCode::MissingSplit, "no " + name + " split under " + root.string());
}

bool is_image_file(const fs::path& p) {
  static const std::set<std::string> exts = {".ppm", ".pgm", ".png", ".jpg", ".jpeg", ".bmp"};
  return fs::is_regular_file(p) && exts.count(text::casefold(p.extension().string()));
}

std::vector<fs::path> sorted_entries(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Agd20kSample> scan_view(const fs::path& view_dir, const PredicateList& predicates) {
  std::vector<Agd20kSample> out;
  if (!fs::is_directory(view_dir)) raise(ErrorCode::MissingSplit, "missing directory " + view_dir.string());
  for (const auto& action_dir : sorted_entries(view_dir)) {
    if (!fs::is_directory(action_dir)) continue;
    const std::string action = action_dir.filename().string();
    auto idx = predicates.index_of(action);
    if (!idx) raise(ErrorCode::UnknownActionLabel, "action directory '" + action + "' is not in the predicate list");
    for (const auto& object_dir : sorted_entries(action_dir)) {
      if (!fs::is_directory(object_dir)) continue;
      for (const auto& file : sorted_entries(object_dir))
        if (is_image_file(file)) out.push_back({file, predicates[*idx], object_dir.filename().string()});
    }
  }
  return out;
}

}  // namespace

std::vector<Agd20kSample> load_agd20k_layout(const fs::path& root, Split split, const PredicateList& predicates) {
  return scan_view(split_dir(root, split) / "testset" / "egocentric", predicates);
}

Agd20kTraining load_agd20k_training(const fs::path& root, Split split, const PredicateList& predicates) {
  const fs::path base = split_dir(root, split) / "trainset";
  return {scan_view(base / "exocentric", predicates), scan_view(base / "egocentric", predicates)};
}

DatasetStats dataset_stats(const std::vector<DatasetRecord>& records) {
  DatasetStats s;
  for (AffordanceType t : kAffordanceTypes) s.type_counts[t] = 0;
  for (const auto& r : records) {
    ++s.records;
    for (AffordanceType t : r.affordance_types) ++s.type_counts[t];
    std::istringstream words(r.instruction.text);
    std::size_t n = 0;
    for (std::string w; words >> w;) ++n;
    ++s.word_length_histogram[n];
  }
  return s;
}

std::string stats_json(const DatasetStats& stats) {
  json types = json::object();
  for (const auto& [t, n] : stats.type_counts) types[std::string(to_string(t))] = n;
  json hist = json::object();
  for (const auto& [len, n] : stats.word_length_histogram) hist[std::to_string(len)] = n;
  return json{{"records", stats.records}, {"affordance_types", types}, {"instruction_word_lengths", hist}}.dump(2) + "\n";
}

}  // namespace afford
