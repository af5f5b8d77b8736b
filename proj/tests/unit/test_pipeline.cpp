#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <set>
#include <tuple>

#include <json.hpp>

#include "fixtures.hpp"
#include "afford/error.hpp"
#include "afford/pipeline.hpp"
#include "afford/pnm.hpp"

using namespace afford;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::IoError;
}

json stripped(const RunRecord& r) {
  json j = json::parse(run_record_json(r));
  j.erase("stage_seconds");
  return j;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(AFFORD_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing, defaults and validation") {
  const PipelineConfig d = parse_config("{}");
  CHECK(d.k == 3);
  CHECK(d.alpha == 0.1);
  CHECK(d.beta == 0.88);
  CHECK(d.boundary == 0.5);
  CHECK(d.flags == AblationFlags{});
  CHECK(!d.sigma);

  const PipelineConfig c = parse_config(R"({"k": 5, "sigma": 3, "predicates": "p.txt", "flags": {"wcb": false}})", "/base");
  CHECK(c.k == 5);
  CHECK(c.sigma == 3.0);
  CHECK(c.predicates == fs::path("/base/p.txt"));
  CHECK(!c.flags.wcb);
  CHECK(c.flags.lmo);

  CHECK(code_of([] { parse_config(R"({"kk": 3})"); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { parse_config(R"({"backends": {"segmentr": "color"}})"); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { parse_config("{not json"); }) == ErrorCode::InvalidConfig);

  PipelineConfig bad = d;
  bad.k = 0;
  CHECK(code_of([&] { validate(bad); }) == ErrorCode::InvalidK);
  bad = d;
  bad.sigma = -1.0;
  CHECK(code_of([&] { validate(bad); }) == ErrorCode::InvalidSigma);
  bad = d;
  bad.boundary = 1.5;
  CHECK(code_of([&] { validate(bad); }) == ErrorCode::InvalidConfig);
  bad = d;
  bad.backends.llm = "oracle";
  CHECK(code_of([&] { validate(bad); }) == ErrorCode::InvalidConfig);

  // serialization round trip
  CHECK(config_json(parse_config(config_json(c))) == config_json(c));
}

TEST_CASE("end-to-end run on the fixture scene") {
  const fs::path dir = fixtures::scratch_dir("run");
  const PipelineConfig cfg = load_config(fixtures::write_run_fixture(dir));
  const SceneImage scene = read_ppm(dir / "scene.ppm");
  const fixtures::Scene s = fixtures::two_blob_scene(0);

  Pipeline p(cfg);
  const RunOutput out = p.run(scene, make_instruction("I am tired and want to rest"));
  CHECK(out.record.objects == std::vector<std::string>{"Chair", "Sofa", "Cup"});
  CHECK(out.record.actions == std::vector<SubAction>{{"sit", "Chair"}});
  CHECK(out.record.mask_count == 3);
  CHECK(out.record.valid_masks.size() == 2);
  CHECK(!out.record.empty_foreground);
  Eigen::Index r = 0, c = 0;
  out.map.maxCoeff(&r, &c);
  CHECK(s.chair.contains(r, c));
  for (const char* stage : {"input", "reason_objects", "reason_actions", "grounding", "localization"})
    CHECK(out.record.stage_seconds.count(stage) == 1);

  // a second pipeline answers from the cache and reproduces the run
  Pipeline again(cfg);
  const RunOutput out2 = again.run(scene, make_instruction("I am tired and want to rest"));
  CHECK((out2.map == out.map).all());
  CHECK(stripped(out2.record) == stripped(out.record));

  RunOutput written = out;
  write_run_outputs(written, scene, dir / "out", "result");
  CHECK(fs::exists(dir / "out" / "result.pgm"));
  CHECK(fs::exists(dir / "out" / "result.overlay.ppm"));
  CHECK(read_pgm(dir / "out" / "result.pgm").cwiseEqual(to_gray8(out.map)).all());
  const json rec = json::parse(read_file(dir / "out" / "result.json"));
  CHECK(rec["valid_mask_count"] == 2);
  CHECK(rec["map_path"].get<std::string>().find("result.pgm") != std::string::npos);
}

TEST_CASE("a run record replays from the transcript cache alone") {
  const fs::path dir = fixtures::scratch_dir("replay");
  const PipelineConfig cfg = load_config(fixtures::write_run_fixture(dir));
  const SceneImage scene = read_ppm(dir / "scene.ppm");
  RunOutput first = Pipeline(cfg).run(scene, make_instruction("I am tired and want to rest"));
  write_run_outputs(first, scene, dir / "out", "result");

  fs::remove(dir / "llm_script.json");
  PipelineConfig replay = load_config(dir / "out" / "result.json");
  replay.backends.llm = "cache";
  const RunOutput second = Pipeline(replay).run(scene, make_instruction("I am tired and want to rest"));
  CHECK((second.map == first.map).all());
  CHECK(second.record.actions == first.record.actions);

  const Instruction unseen = make_instruction("I want to read");
  try {
    Pipeline(replay).run(scene, unseen);
    FAIL("expected LLMUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LlmUnavailable);
    CHECK(e.stage() == "reason_objects");
  }
}

TEST_CASE("stage errors carry the stage name") {
  const fs::path dir = fixtures::scratch_dir("stage");
  PipelineConfig cfg = load_config(fixtures::write_run_fixture(dir));
  const SceneImage scene = read_ppm(dir / "scene.ppm");
  // a segmenter command that always fails, with no fallback behind it
  cfg.backends.segmenter = "command:false";
  cfg.backends.fallback_segmenter = false;
  try {
    Pipeline(cfg).run(scene, make_instruction("I am tired and want to rest"));
    FAIL("expected a grounding failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SegmenterFailure);
    CHECK(e.stage() == "grounding");
    CHECK(std::string(e.what()).rfind("grounding stage: ", 0) == 0);
  }
}

TEST_CASE("evaluation of predictions against the fixture dataset") {
  const fs::path dir = fixtures::scratch_dir("eval");
  fixtures::write_dataset_fixture(dir);
  const fs::path root = dir / "dataset";

  // GT maps scored against themselves
  const MetricSummary self = evaluate_predictions(root, root / "gt");
  CHECK(self.evaluated == 3);
  CHECK(self.mean_kld == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(self.mean_sim == doctest::Approx(1.0));

  fs::create_directories(dir / "pred");
  fs::copy_file(root / "gt" / "rest.pgm", dir / "pred" / "rest.pgm");
  const MetricSummary partial = evaluate_predictions(root, dir / "pred");
  CHECK(partial.evaluated == 1);
  CHECK(partial.skipped == 2);

  fs::create_directories(dir / "none");
  CHECK(code_of([&] { evaluate_predictions(root, dir / "none"); }) == ErrorCode::NoMatchingPairs);
}

TEST_CASE("ablation grid and generated evaluation") {
  const auto grid = ablation_grid();
  REQUIRE(grid.size() == 8);
  CHECK(grid.front() == AblationFlags{false, false, false, true});
  CHECK(grid[6] == AblationFlags{});
  CHECK(grid[7] == AblationFlags{true, false, false, true});
  std::set<std::tuple<bool, bool, bool>> distinct;
  for (const auto& f : grid) distinct.insert({f.lma, f.wcb, f.lmo});
  CHECK(distinct.size() == 8);

  const fs::path dir = fixtures::scratch_dir("ablate");
  const PipelineConfig cfg = load_config(fixtures::write_dataset_fixture(dir));
  const auto rows = run_ablation(dir / "dataset", cfg);
  REQUIRE(rows.size() == 8);
  const MetricSummary plain = evaluate_generated(dir / "dataset", cfg);
  CHECK(rows[6].summary.mean_sim == doctest::Approx(plain.mean_sim));
  CHECK(rows[6].summary.mean_kld == doctest::Approx(plain.mean_kld));
  CHECK(rows[0].summary.mean_sim < rows[6].summary.mean_sim);
  CHECK(rows[0].summary.mean_kld > rows[6].summary.mean_kld);
  const std::string table = ablation_table(rows);
  CHECK(table.rfind("# input: mask off\n", 0) == 0);
  CHECK(json::parse(ablation_json(rows)).size() == 8);
}

TEST_CASE("overlay ramp endpoints") {
  CHECK(color_ramp(0.0) == Rgb{0.0, 0.0, 0.5});
  CHECK(color_ramp(0.5) == Rgb{0.5, 1.0, 0.5});
  CHECK(color_ramp(1.0) == Rgb{0.5, 0.0, 0.0});
  CHECK(color_ramp(-3.0) == color_ramp(0.0));
  const SceneImage img = fixtures::paint(2, 2, {}, fixtures::kGray);
  const SceneImage o = render_overlay(img, AffordanceMap::Zero(2, 2));
  CHECK(o.channels[2](0, 0) == doctest::Approx(0.5));
  CHECK(o.channels[0](0, 0) == doctest::Approx(0.25));
}

TEST_CASE("command-line exit codes") {
  const fs::path dir = fixtures::scratch_dir("cli");
  fixtures::write_run_fixture(dir);
  fixtures::write_dataset_fixture(dir);
  const std::string cfg = "--config " + (dir / "config.json").string();
  const std::string img = (dir / "scene.ppm").string();

  CHECK(cli("run " + cfg + " --image " + img + " -t 'I am tired and want to rest' --out-dir " +
            (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out" / "result.pgm"));
  CHECK(cli("eval " + cfg + " --dataset " + (dir / "dataset").string()) == 0);
  CHECK(cli("stats --dataset " + (dir / "dataset").string()) == 0);

  CHECK(cli("run " + cfg + " --k 0 --image " + img + " -t rest --out-dir " + (dir / "o2").string()) == 2);
  CHECK(cli("frobnicate") == 2);
  CHECK(cli("run " + cfg + " --image " + (dir / "missing.ppm").string() + " -t rest --out-dir " +
            (dir / "o3").string()) == 3);
  CHECK(cli("eval " + cfg + " --dataset " + (dir / "nowhere").string()) == 3);
  // the scripted LLM has no rule for this instruction and nothing is cached
  CHECK(cli("run " + cfg + " --image " + img + " -t 'I want to read' --out-dir " + (dir / "o4").string()) == 4);
  CHECK(cli("localize " + cfg + " --image " + img + " --actions teleport:chair --out " +
            (dir / "o5.pgm").string()) == 6);
  write_file(dir / "pts.json", R"({"points": [[-1, 0]]})");
  CHECK(cli("rasterize --points " + (dir / "pts.json").string() + " --height 8 --width 8 --out " +
            (dir / "g.pgm").string()) == 7);
  fs::create_directories(dir / "empty_pred");
  CHECK(cli("eval " + cfg + " --dataset " + (dir / "dataset").string() + " --predictions " +
            (dir / "empty_pred").string()) == 8);
}
