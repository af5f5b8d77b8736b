#include "fixtures.hpp"

#include <unistd.h>

#include <random>

#include <json.hpp>

#include "afford/dataset.hpp"
#include "afford/pnm.hpp"

namespace fixtures {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace afford;

SceneImage paint(Eigen::Index rows, Eigen::Index cols, const std::vector<Blob>& blobs, Rgb background) {
  SceneImage img;
  for (int k = 0; k < 3; ++k) img.channels[k] = Plane<double>::Constant(rows, cols, background[k]);
  for (const Blob& b : blobs)
    for (int k = 0; k < 3; ++k) img.channels[k].block(b.row, b.col, b.height, b.width).setConstant(b.color[k]);
  return img;
}

BoolMask blob_mask(Eigen::Index rows, Eigen::Index cols, const Blob& blob) {
  BoolMask m = BoolMask::Constant(rows, cols, false);
  m.block(blob.row, blob.col, blob.height, blob.width).setConstant(true);
  return m;
}

Scene two_blob_scene(int variant) {
  static const Eigen::Index layouts[3][3][2] = {
      {{4, 4}, {4, 32}, {32, 16}},
      {{28, 28}, {4, 4}, {8, 24}},
      {{32, 4}, {32, 32}, {4, 18}},
  };
  const auto& l = layouts[variant % 3];
  Scene s;
  s.chair = {l[0][0], l[0][1], 12, 12, kRed};
  s.cup = {l[1][0], l[1][1], 12, 12, kBlue};
  s.distractor = {l[2][0], l[2][1], 12, 12, kMagenta};
  s.image = paint(48, 48, {s.chair, s.cup, s.distractor});
  return s;
}

const std::vector<SceneRecord>& scene_records() {
  static const std::vector<SceneRecord> records = {
      {"rest", "I am tired and want to rest", "1. Chair\n2. Sofa\n3. Cup", "Sit on the chair.", true, false, 0},
      {"drink", "I am thirsty and want a drink", "1. Cup\n2. Chair\n3. Sofa", "Hold the cup.", false, true, 1},
      {"tea", "I want to sit and sip some tea", "Chair, cup, sofa", "1. Sit on the chair.\n2. Hold the cup.", true,
       true, 2},
  };
  return records;
}

namespace {

json script_json() {
  json rules = json::array();
  for (const auto& r : scene_records()) {
    rules.push_back({{"match", "can be used if " + r.instruction + "?"}, {"response", r.objects_response}});
    rules.push_back({{"match", "to help me if " + r.instruction + "?"}, {"response", r.actions_response}});
  }
  return {{"model", "scripted-fixture"}, {"rules", rules}};
}

json config_json_for(const std::string& script, const std::string& cache) {
  return {{"k", 3},
          {"seed", 7},
          {"predicates", "predicates.txt"},
          {"cache_dir", cache},
          {"backends",
           {{"llm", "scripted"},
            {"llm_script", script},
            {"segmenter", "color"},
            {"image_encoder", "color-keyed"},
            {"text_encoder", "color-keyed"},
            {"backbone", "color-probe"},
            {"patch", 4},
            {"color_keys", {{"chair", {1, 0, 0}}, {"cup", {0, 0, 1}}, {"sofa", {0, 1, 0}}}},
            {"predicate_colors", {{"sit", {1, 0, 0}}, {"hold", {0, 0, 1}}}}}}};
}

void write_common(const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "llm_script.json", script_json().dump(2) + "\n");
  write_file(dir / "predicates.txt", "# one predicate per line\nswing\ncarry\ncatch\npick up\nsit\nlie\nhold\n");
  write_file(dir / "config.json", config_json_for("llm_script.json", "cache").dump(2) + "\n");
}

}  // namespace

fs::path write_run_fixture(const fs::path& dir) {
  write_common(dir);
  write_ppm(dir / "scene.ppm", two_blob_scene(0).image);
  return dir / "config.json";
}

AffordanceMap scene_ground_truth(const SceneRecord& record) {
  const Scene s = two_blob_scene(record.variant);
  PointAnnotation a{record.id, 48, 48, {}};
  for (const Blob* b : {&s.chair, &s.cup}) {
    if ((b == &s.chair && !record.chair_target) || (b == &s.cup && !record.cup_target)) continue;
    for (Eigen::Index r = b->row + 1; r < b->row + b->height; r += 2)
      for (Eigen::Index c = b->col + 1; c < b->col + b->width; c += 2) a.points.push_back({double(r), double(c), 1.0});
  }
  return rasterize_points(a, 1.0);
}

fs::path write_dataset_fixture(const fs::path& dir) {
  write_common(dir);
  const fs::path root = dir / "dataset";
  fs::create_directories(root / "images");
  fs::create_directories(root / "gt");
  std::string manifest;
  for (const auto& r : scene_records()) {
    write_ppm(root / "images" / (r.id + ".ppm"), two_blob_scene(r.variant).image);
    write_pgm(root / "gt" / (r.id + ".pgm"), to_gray8(scene_ground_truth(r)));
    DatasetRecord rec{r.id, "images/" + r.id + ".ppm", make_instruction(r.instruction, r.id), "gt/" + r.id + ".pgm", {}};
    if (r.chair_target) rec.affordance_types.push_back(AffordanceType::Situable);
    if (r.cup_target) rec.affordance_types.push_back(AffordanceType::Handheld);
    manifest += record_to_json_line(rec) + "\n";
  }
  write_file(root / kManifestName, manifest);
  return dir / "config.json";
}

ToySet toy_training_set(std::uint64_t seed) {
  ToySet set;
  set.predicates = default_predicates();
  const std::size_t sit = *set.predicates.index_of("sit");
  const std::size_t hold = *set.predicates.index_of("hold");
  std::mt19937_64 rng(seed);
  auto pick = [&](Eigen::Index lo, Eigen::Index hi) {
    return std::uniform_int_distribution<Eigen::Index>(lo, hi)(rng);
  };
  constexpr Eigen::Index N = 32;
  for (int i = 0; i < 10; ++i) {
    const bool is_sit = i % 2 == 0;
    const Rgb target = is_sit ? kRed : kBlue;
    const Rgb other = is_sit ? kBlue : kRed;

    // exo: object in the left half, actor in the right half
    const Eigen::Index size = pick(8, 12);
    Blob object{pick(0, N - size), pick(0, 16 - size), size, size, target};
    Blob actor{pick(0, N - 14), pick(18, N - 8), 14, 8, kGray};
    set.exo.push_back(paint(N, N, {object, actor}));

    // ego: target and distractor in opposite halves, side chosen at random
    const bool target_left = pick(0, 1) == 0;
    const Eigen::Index ts = pick(8, 12), ds = pick(8, 12);
    Blob t{pick(0, N - ts), target_left ? pick(0, 16 - ts) : pick(16, N - ts), ts, ts, target};
    Blob d{pick(0, N - ds), target_left ? pick(16, N - ds) : pick(0, 16 - ds), ds, ds, other};
    set.ego.push_back(paint(N, N, {t, d}));
    set.targets.push_back(t);
    set.labels.push_back(is_sit ? sit : hold);
  }
  return set;
}

fs::path scratch_dir(const std::string& name) {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() /
                       ("afford-" + name + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace fixtures
