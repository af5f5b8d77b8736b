#include "afford/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "afford/dataset.hpp"
#include "afford/error.hpp"
#include "afford/localization.hpp"
#include "afford/pnm.hpp"

namespace afford {

using nlohmann::json;
namespace fs = std::filesystem;

PredicateList default_predicates() {
  return PredicateList({"swing", "carry", "catch", "pick up", "sit", "lie", "hold"});
}

namespace {

constexpr const char* kCommandPrefix = "command:";

bool is_command(const std::string& backend) { return backend.rfind(kCommandPrefix, 0) == 0; }
std::string command_of(const std::string& backend) { return backend.substr(std::string(kCommandPrefix).size()); }

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

std::map<std::string, Rgb> read_colors(const json& j, const char* key) {
  std::map<std::string, Rgb> out;
  if (!j.contains(key)) return out;
  for (const auto& [name, rgb] : j.at(key).items()) {
    const auto v = rgb.get<std::vector<double>>();
    if (v.size() != 3) raise(ErrorCode::InvalidConfig, std::string(key) + "." + name + " must have three components");
    out[name] = {v[0], v[1], v[2]};
  }
  return out;
}

json colors_json(const std::map<std::string, Rgb>& colors) {
  json out = json::object();
  for (const auto& [name, rgb] : colors) out[name] = {rgb[0], rgb[1], rgb[2]};
  return out;
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) raise(ErrorCode::InvalidConfig, "unknown " + where + " field '" + key + "'");
}

}  // namespace

PipelineConfig parse_config(const std::string& json_text, const fs::path& base_dir) {
  PipelineConfig c;
  try {
    json j = json::parse(json_text);
    if (j.contains("config") && j.contains("instruction")) j = j.at("config");  // run record
    reject_unknown(j, {"k", "alpha", "beta", "boundary", "pad_ratio", "sigma", "predicates", "backends", "flags",
                       "cache_dir", "seed"},
                   "config");
    c.k = j.value("k", c.k);
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.boundary = j.value("boundary", c.boundary);
    c.pad_ratio = j.value("pad_ratio", c.pad_ratio);
    if (j.contains("sigma") && !j.at("sigma").is_null()) c.sigma = j.at("sigma").get<double>();
    c.predicates = resolve(j.value("predicates", std::string()), base_dir);
    c.cache_dir = resolve(j.value("cache_dir", std::string()), base_dir);
    c.seed = j.value("seed", c.seed);
    if (j.contains("flags")) {
      const json& f = j.at("flags");
      reject_unknown(f, {"lmo", "lma", "wcb", "mask_off"}, "flags");
      c.flags.lmo = f.value("lmo", true);
      c.flags.lma = f.value("lma", true);
      c.flags.wcb = f.value("wcb", true);
      c.flags.mask_off = f.value("mask_off", true);
    }
    if (j.contains("backends")) {
      const json& b = j.at("backends");
      reject_unknown(b, {"llm", "llm_model", "llm_script", "segmenter", "fallback_segmenter", "image_encoder",
                         "text_encoder", "backbone", "model_dir", "patch", "color_keys", "predicate_colors"},
                     "backends");
      BackendConfig& be = c.backends;
      be.llm = b.value("llm", be.llm);
      be.llm_model = b.value("llm_model", be.llm_model);
      be.llm_script = resolve(b.value("llm_script", std::string()), base_dir);
      be.segmenter = b.value("segmenter", be.segmenter);
      be.fallback_segmenter = b.value("fallback_segmenter", be.fallback_segmenter);
      be.image_encoder = b.value("image_encoder", be.image_encoder);
      be.text_encoder = b.value("text_encoder", be.text_encoder);
      be.backbone = b.value("backbone", be.backbone);
      be.model_dir = resolve(b.value("model_dir", std::string()), base_dir);
      be.patch = b.value("patch", be.patch);
      be.color_keys = read_colors(b, "color_keys");
      be.predicate_colors = read_colors(b, "predicate_colors");
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::InvalidConfig, e.what());
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) raise(ErrorCode::IoError, "config file not found: " + path.string());
  return parse_config(read_file(path), fs::absolute(path).parent_path());
}

std::string config_json(const PipelineConfig& c) {
  const BackendConfig& b = c.backends;
  json j = {{"k", c.k},
            {"alpha", c.alpha},
            {"beta", c.beta},
            {"boundary", c.boundary},
            {"pad_ratio", c.pad_ratio},
            {"sigma", c.sigma ? json(*c.sigma) : json(nullptr)},
            {"predicates", c.predicates.string()},
            {"cache_dir", c.cache_dir.string()},
            {"seed", c.seed},
            {"flags", {{"lmo", c.flags.lmo}, {"lma", c.flags.lma}, {"wcb", c.flags.wcb}, {"mask_off", c.flags.mask_off}}},
            {"backends",
             {{"llm", b.llm},
              {"llm_model", b.llm_model},
              {"llm_script", b.llm_script.string()},
              {"segmenter", b.segmenter},
              {"fallback_segmenter", b.fallback_segmenter},
              {"image_encoder", b.image_encoder},
              {"text_encoder", b.text_encoder},
              {"backbone", b.backbone},
              {"model_dir", b.model_dir.string()},
              {"patch", b.patch},
              {"color_keys", colors_json(b.color_keys)},
              {"predicate_colors", colors_json(b.predicate_colors)}}}};
  return j.dump(2) + "\n";
}

void validate(const PipelineConfig& c) {
  auto bad = [](const std::string& what) { raise(ErrorCode::InvalidConfig, what); };
  if (c.k < 1) raise(ErrorCode::InvalidK, "k must be at least 1, got " + std::to_string(c.k));
  if (!(c.alpha > 0.0) || !std::isfinite(c.alpha)) bad("alpha must be a positive number");
  if (!(c.beta >= 0.0 && c.beta <= 1.0)) bad("beta must lie in [0,1]");
  if (!(c.boundary > 0.0 && c.boundary < 1.0)) bad("boundary must lie in (0,1)");
  if (!(c.pad_ratio >= 0.0) || !std::isfinite(c.pad_ratio)) bad("pad_ratio must be >= 0");
  if (c.sigma && !(*c.sigma > 0.0 && std::isfinite(*c.sigma))) raise(ErrorCode::InvalidSigma, "sigma must be > 0");
  if (!c.predicates.empty() && !fs::exists(c.predicates)) bad("predicate list not found: " + c.predicates.string());
  const BackendConfig& b = c.backends;
  if (b.llm != "cache" && b.llm != "scripted" && b.llm != "remote") bad("llm backend must be cache, scripted or remote");
  if (b.llm == "scripted" && !fs::exists(b.llm_script)) bad("llm script not found: " + b.llm_script.string());
  if (b.segmenter != "color" && !is_command(b.segmenter)) bad("segmenter must be color or command:<cmd>");
  if (b.image_encoder != "color-keyed" && !is_command(b.image_encoder))
    bad("image_encoder must be color-keyed or command:<cmd>");
  if (b.text_encoder != "color-keyed" && !is_command(b.text_encoder))
    bad("text_encoder must be color-keyed or command:<cmd>");
  if (b.backbone != "color-probe" && b.backbone != "model") bad("backbone must be color-probe or model");
  if (b.backbone == "model" && !fs::is_directory(b.model_dir)) bad("model directory not found: " + b.model_dir.string());
  if (b.patch < 1) bad("patch must be >= 1");
}

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
  validate(config_);
  const BackendConfig& b = config_.backends;
  predicates_ = config_.predicates.empty() ? default_predicates() : PredicateList::load(config_.predicates);

  if (b.backbone == "model") {
    model_ = load_model(b.model_dir);
    if (!(model_.meta.predicates == predicates_))
      raise(ErrorCode::InvalidConfig, "model channels do not match the configured predicate list");
    model_.meta.beta = config_.beta;
  } else {
    model_ = make_color_probe_model(predicates_, b.predicate_colors, b.patch, config_.beta);
  }

  auto cache = std::make_shared<TranscriptCache>();
  if (!config_.cache_dir.empty()) {
    fs::create_directories(config_.cache_dir);
    cache = std::make_shared<TranscriptCache>(config_.cache_dir / "transcripts.jsonl");
  }
  std::unique_ptr<LlmClient> upstream;
  std::string model_id = b.llm_model;
  if (b.llm == "scripted") {
    upstream = ScriptedLlmClient::from_file(b.llm_script);
    model_id = upstream->model_id();
    config_.backends.llm_model = model_id;  // lets a run record replay from the cache alone
  } else if (b.llm == "remote") {
    upstream = remote_client_from_env(b.llm_model);
    if (!upstream)
      diagnostic_ = std::string(kLlmCredentialEnv) + " is not set; answering from cached transcripts only";
  }
  llm_ = std::make_unique<CachedLlmClient>(cache, model_id, std::move(upstream));

  if (is_command(b.segmenter))
    segmenter_ = std::make_unique<CommandSegmenter>(command_of(b.segmenter));
  else
    segmenter_ = std::make_unique<ColorComponentSegmenter>();
  if (b.fallback_segmenter && is_command(b.segmenter)) fallback_ = std::make_unique<ColorComponentSegmenter>();

  if (is_command(b.image_encoder))
    image_encoder_ = std::make_unique<CommandImageEncoder>(command_of(b.image_encoder));
  else
    image_encoder_ = std::make_unique<ColorKeyedEncoder>(b.color_keys, config_.seed);
  if (is_command(b.text_encoder))
    text_encoder_ = std::make_unique<CommandTextEncoder>(command_of(b.text_encoder));
  else
    text_encoder_ = std::make_unique<ColorKeyedEncoder>(b.color_keys, config_.seed);
}

Pipeline::~Pipeline() = default;

ObjectCategorySet Pipeline::reason_objects(const Instruction& instruction) {
  return afford::reason_objects(instruction, config_.k, *llm_);
}

ActionReasoning Pipeline::reason_actions(const ObjectCategorySet& objects, const Instruction& instruction) {
  return afford::reason_actions(objects, predicates_, instruction, *llm_);
}

GroundingResult Pipeline::ground(const SceneImage& image, const ObjectCategorySet& objects) {
  GroundingBackends backends{segmenter_.get(), fallback_.get(), image_encoder_.get(), text_encoder_.get()};
  return ground_objects(image, objects, backends, GroundingConfig{config_.alpha, config_.pad_ratio, config_.boundary});
}

AffordanceMap Pipeline::localize(const SceneImage& image, const std::optional<FullViewMask>& mask,
                                 const std::vector<SubAction>& actions) {
  const PredictOptions options{mask.has_value(), config_.flags.wcb, config_.flags.lma};
  return predict(image, mask, actions, model_, options);
}

namespace {

template <typename F>
auto timed(const char* stage, std::map<std::string, double>& seconds, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  try {
    auto result = body();
    seconds[stage] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
  } catch (const Error& e) {
    if (!e.stage().empty()) throw;
    throw Error(stage, e);
  } catch (const std::exception& e) {
    throw Error(stage, Error(ErrorCode::IoError, e.what()));
  }
}

}  // namespace

RunOutput Pipeline::run(const SceneImage& image, const Instruction& instruction) {
  RunOutput out;
  RunRecord& rec = out.record;
  rec.instruction = instruction;
  rec.config = config_;
  const AblationFlags& f = config_.flags;

  timed("input", rec.stage_seconds, [&] {
    validate(image);
    if (text::trim(instruction.text).empty()) raise(ErrorCode::EmptyInstruction, "instruction is empty");
    return 0;
  });

  ObjectCategorySet objects;
  if (f.lmo || f.lma) {
    objects = timed("reason_objects", rec.stage_seconds, [&] { return reason_objects(instruction); });
    rec.objects = objects.categories;
  }
  if (f.lma) {
    ActionReasoning reasoning =
        timed("reason_actions", rec.stage_seconds, [&] { return reason_actions(objects, instruction); });
    rec.actions = std::move(reasoning.actions);
    rec.warnings = std::move(reasoning.warnings);
  }

  std::optional<FullViewMask> mask;
  if (f.lmo && f.mask_off) {
    out.grounding = timed("grounding", rec.stage_seconds, [&] { return ground(image, objects); });
    rec.mask_count = out.grounding->candidates.size();
    for (const auto& [mask_index, category] : out.grounding->mask.contributing)
      rec.valid_masks.emplace_back(mask_index, objects.categories[std::size_t(category)],
                                   out.grounding->classifications[mask_index].best_probability);
    rec.empty_foreground = !out.grounding->mask.foreground.any();
    mask = out.grounding->mask;
  }

  out.map = timed("localization", rec.stage_seconds, [&] { return localize(image, mask, rec.actions); });
  return out;
}

std::string run_record_json(const RunRecord& r) {
  json actions = json::array();
  for (const auto& a : r.actions) actions.push_back({{"predicate", a.predicate}, {"object", a.object}});
  json valid = json::array();
  for (const auto& [index, category, probability] : r.valid_masks)
    valid.push_back({{"mask", index}, {"category", category}, {"probability", probability}});
  json j = {{"instruction", r.instruction.text},
            {"instruction_id", r.instruction.id ? json(*r.instruction.id) : json(nullptr)},
            {"objects", r.objects},
            {"actions", actions},
            {"warnings", r.warnings},
            {"mask_count", r.mask_count},
            {"valid_mask_count", r.valid_masks.size()},
            {"valid_masks", valid},
            {"empty_foreground", r.empty_foreground},
            {"map_path", r.map_path},
            {"overlay_path", r.overlay_path},
            {"stage_seconds", r.stage_seconds},
            {"config", json::parse(config_json(r.config))}};
  return j.dump(2) + "\n";
}

Rgb color_ramp(double v) {
  v = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
  auto lobe = [v](double centre) { return std::clamp(1.5 - std::abs(4.0 * v - centre), 0.0, 1.0); };
  return {lobe(3.0), lobe(2.0), lobe(1.0)};
}

SceneImage render_overlay(const SceneImage& image, const AffordanceMap& map) {
  if (image.rows() != map.rows() || image.cols() != map.cols())
    raise(ErrorCode::DimensionMismatch, "overlay map and image sizes differ");
  SceneImage out = image;
  for (Eigen::Index c = 0; c < map.cols(); ++c)
    for (Eigen::Index r = 0; r < map.rows(); ++r) {
      const Rgb rgb = color_ramp(map(r, c));
      for (int k = 0; k < 3; ++k) out.channels[k](r, c) = 0.5 * image.channels[k](r, c) + 0.5 * rgb[k];
    }
  return out;
}

void write_run_outputs(RunOutput& output, const SceneImage& image, const fs::path& dir, const std::string& stem,
                       const std::optional<fs::path>& overlay_path) {
  fs::create_directories(dir);
  const fs::path map_path = dir / (stem + ".pgm");
  const fs::path overlay = overlay_path ? *overlay_path : dir / (stem + ".overlay.ppm");
  write_pgm(map_path, to_gray8(output.map));
  if (!overlay.parent_path().empty()) fs::create_directories(overlay.parent_path());
  write_ppm(overlay, render_overlay(image, output.map));
  output.record.map_path = map_path.string();
  output.record.overlay_path = overlay.string();
  write_file(dir / (stem + ".json"), run_record_json(output.record));
}

namespace {

AffordanceMap load_gt(const fs::path& root, const DatasetRecord& r) { return from_gray8(read_pgm(root / r.gt)); }

}  // namespace

MetricSummary evaluate_predictions(const fs::path& dataset_root, const fs::path& predictions_dir) {
  const auto records = load_llmaff(dataset_root);
  std::vector<EvalPair> pairs;
  std::size_t matched = 0;
  for (const auto& r : records) {
    EvalPair pair{r.id, std::nullopt, load_gt(dataset_root, r)};
    const fs::path pred = predictions_dir / (r.id + ".pgm");
    if (fs::exists(pred)) {
      pair.prediction = from_gray8(read_pgm(pred));
      ++matched;
    }
    pairs.push_back(std::move(pair));
  }
  if (matched == 0)
    raise(ErrorCode::NoMatchingPairs, "no prediction in " + predictions_dir.string() + " matches a record id");
  return evaluate_batch(pairs);
}

MetricSummary evaluate_generated(const fs::path& dataset_root, const PipelineConfig& config) {
  const auto records = load_llmaff(dataset_root);
  if (records.empty()) raise(ErrorCode::NoMatchingPairs, "dataset has no records");
  Pipeline pipeline(config);
  std::vector<EvalPair> pairs;
  // Generation stays sequential so transcripts reach the cache in manifest
  // order; scoring is parallel inside evaluate_batch.
  for (const auto& r : records) {
    EvalPair pair{r.id, std::nullopt, load_gt(dataset_root, r)};
    try {
      pair.prediction = pipeline.run(read_ppm(dataset_root / r.image), r.instruction).map;
    } catch (const Error& e) {
      pair.missing_reason = e.what();
    }
    pairs.push_back(std::move(pair));
  }
  return evaluate_batch(pairs);
}

std::vector<AblationFlags> ablation_grid(const AblationFlags& base) {
  // (lma, wcb, lmo)
  constexpr bool rows[8][3] = {{false, false, false}, {false, true, false}, {true, false, false},
                               {true, true, false},   {false, true, true},  {true, false, true},
                               {true, true, true},    {false, false, true}};
  std::vector<AblationFlags> grid;
  for (const auto& row : rows) {
    AblationFlags f = base;
    f.lma = row[0];
    f.wcb = row[1];
    f.lmo = row[2];
    grid.push_back(f);
  }
  return grid;
}

std::vector<AblationRow> run_ablation(const fs::path& dataset_root, const PipelineConfig& config) {
  std::vector<AblationRow> rows;
  for (const AblationFlags& flags : ablation_grid(config.flags)) {
    PipelineConfig c = config;
    c.flags = flags;
    rows.push_back({flags, evaluate_generated(dataset_root, c)});
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  const bool masked = rows.empty() || rows.front().flags.mask_off;
  os << "# input: " << (masked ? "mask off" : "entire image") << "\n";
  os << "LMA  WCB  LMO       KLD       SIM       NSS  scored  skipped\n";
  os << std::fixed << std::setprecision(4);
  auto mark = [](bool on) { return on ? " on  " : "  -  "; };
  for (const auto& r : rows) {
    os << mark(r.flags.lma) << mark(r.flags.wcb) << mark(r.flags.lmo) << std::setw(8) << r.summary.mean_kld
       << std::setw(10) << r.summary.mean_sim << std::setw(10) << r.summary.mean_nss << std::setw(8)
       << r.summary.evaluated << std::setw(9) << r.summary.skipped << "\n";
  }
  return os.str();
}

std::string ablation_json(const std::vector<AblationRow>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"lma", r.flags.lma},
                   {"wcb", r.flags.wcb},
                   {"lmo", r.flags.lmo},
                   {"mask_off", r.flags.mask_off},
                   {"kld", r.summary.mean_kld},
                   {"sim", r.summary.mean_sim},
                   {"nss", r.summary.mean_nss},
                   {"evaluated", r.summary.evaluated},
                   {"skipped", r.summary.skipped}});
  return out.dump(2) + "\n";
}

}  // namespace afford
