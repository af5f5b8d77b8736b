// Command-line front end. Exit codes:
//   0 success
//   1 unexpected failure
//   2 usage or configuration error (InvalidConfig, InvalidK, InvalidSigma)
//   3 input/output (IOError, FormatError, MissingManifest, BrokenRecord, MissingSplit)
//   4 reasoning (LLMUnavailable, EmptyInstruction, EmptyObjectSet, EmptyPredicateList, EmptySubActionSet)
//   5 grounding (SegmenterFailure, EmptyMask, EncoderFailure)
//   6 localization (BackboneFailure, ShapeError, UnknownPredicate, EmptyActionSet, DimensionMismatch)
//   7 data and training (EmptyDataset, LabelOutOfRange, UnknownActionLabel, OutOfBoundsPoint)
//   8 evaluation (ZeroMass, EmptyFixationSet, AllPairsSkipped, NoMatchingPairs)

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "afford/dataset.hpp"
#include "afford/error.hpp"
#include "afford/localization.hpp"
#include "afford/pipeline.hpp"
#include "afford/pnm.hpp"
#include "afford/training.hpp"

namespace fs = std::filesystem;
using namespace afford;
using nlohmann::json;

namespace {

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidK:
    case ErrorCode::InvalidSigma:
      return 2;
    case ErrorCode::IoError:
    case ErrorCode::FormatError:
    case ErrorCode::MissingManifest:
    case ErrorCode::BrokenRecord:
    case ErrorCode::MissingSplit:
      return 3;
    case ErrorCode::LlmUnavailable:
    case ErrorCode::EmptyInstruction:
    case ErrorCode::EmptyObjectSet:
    case ErrorCode::EmptyPredicateList:
    case ErrorCode::EmptySubActionSet:
      return 4;
    case ErrorCode::SegmenterFailure:
    case ErrorCode::EmptyMask:
    case ErrorCode::EncoderFailure:
      return 5;
    case ErrorCode::BackboneFailure:
    case ErrorCode::ShapeError:
    case ErrorCode::UnknownPredicate:
    case ErrorCode::EmptyActionSet:
    case ErrorCode::DimensionMismatch:
      return 6;
    case ErrorCode::EmptyDataset:
    case ErrorCode::LabelOutOfRange:
    case ErrorCode::UnknownActionLabel:
    case ErrorCode::OutOfBoundsPoint:
      return 7;
    case ErrorCode::ZeroMass:
    case ErrorCode::EmptyFixationSet:
    case ErrorCode::AllPairsSkipped:
    case ErrorCode::NoMatchingPairs:
      return 8;
  }
  return 1;
}

struct Overrides {
  std::string config;
  std::optional<int> k;
  std::optional<double> alpha, beta, boundary, pad_ratio, sigma;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> cache_dir, predicates;
  bool no_lmo = false, no_lma = false, no_wcb = false, entire_image = false;
};

void add_pipeline_options(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "pipeline config (JSON) or a run record to replay");
  app->add_option("--k", o.k, "number of candidate objects");
  app->add_option("--alpha", o.alpha, "classification temperature");
  app->add_option("--beta", o.beta, "WCB weight");
  app->add_option("--boundary", o.boundary, "mask validity boundary");
  app->add_option("--pad-ratio", o.pad_ratio, "crop padding ratio");
  app->add_option("--sigma", o.sigma, "rasterizer kernel width in pixels");
  app->add_option("--seed", o.seed, "random seed");
  app->add_option("--cache-dir", o.cache_dir, "LLM transcript cache directory");
  app->add_option("--predicates", o.predicates, "predicate list file");
  app->add_flag("--no-lmo", o.no_lmo, "skip object grounding; use the entire image");
  app->add_flag("--no-lma", o.no_lma, "aggregate every predicate channel");
  app->add_flag("--no-wcb", o.no_wcb, "disable WCB injections");
  app->add_flag("--entire-image", o.entire_image, "feed the entire image instead of the masked one");
}

PipelineConfig make_config(const Overrides& o) {
  PipelineConfig c = o.config.empty() ? PipelineConfig{} : load_config(o.config);
  if (o.k) c.k = *o.k;
  if (o.alpha) c.alpha = *o.alpha;
  if (o.beta) c.beta = *o.beta;
  if (o.boundary) c.boundary = *o.boundary;
  if (o.pad_ratio) c.pad_ratio = *o.pad_ratio;
  if (o.sigma) c.sigma = *o.sigma;
  if (o.seed) c.seed = *o.seed;
  if (o.cache_dir) c.cache_dir = *o.cache_dir;
  if (o.predicates) c.predicates = *o.predicates;
  if (o.no_lmo) c.flags.lmo = false;
  if (o.no_lma) c.flags.lma = false;
  if (o.no_wcb) c.flags.wcb = false;
  if (o.entire_image) c.flags.mask_off = false;
  validate(c);
  return c;
}

void report_diagnostic(const Pipeline& p) {
  if (p.diagnostic()) std::cerr << "note: " << *p.diagnostic() << "\n";
}

Instruction instruction_from(const std::string& text) {
  try {
    return make_instruction(text);
  } catch (const Error& e) {
    throw Error("input", e);
  }
}

SceneImage load_image(const std::string& path) {
  try {
    return read_ppm(path);
  } catch (const Error& e) {
    throw Error("input", e);
  }
}

/// "sit:chair;hold:cup" -> sub-actions.
std::vector<SubAction> parse_actions(const std::string& list, const PredicateList& predicates) {
  std::vector<SubAction> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t end = std::min(list.find(';', start), list.size());
    const std::string item = text::trim(std::string_view(list).substr(start, end - start));
    if (!item.empty()) {
      const auto colon = item.find(':');
      SubAction a{text::trim(item.substr(0, colon)), colon == std::string::npos ? "" : text::trim(item.substr(colon + 1))};
      const auto idx = predicates.index_of(a.predicate);
      if (!idx) raise(ErrorCode::UnknownPredicate, "'" + a.predicate + "' is not in the predicate list");
      a.predicate = predicates[*idx];
      out.push_back(a);
    }
    start = end + 1;
  }
  return out;
}

SceneImage resized(const SceneImage& image, Eigen::Index size) {
  SceneImage out;
  for (int k = 0; k < 3; ++k) out.channels[k] = resize_bilinear(image.channels[k], size, size);
  return out;
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-")
    std::cout << text;
  else
    write_file(path, text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Affordance grounding from natural-language instructions"};
  app.require_subcommand(1);
  Overrides o;

  auto* reason = app.add_subcommand("reason", "infer candidate objects and sub-actions");
  std::string instruction_text;
  add_pipeline_options(reason, o);
  reason->add_option("--instruction,-t", instruction_text, "instruction text")->required();

  auto* ground = app.add_subcommand("ground", "build the full-view mask for an image");
  std::string image_path, objects_csv, out_path;
  add_pipeline_options(ground, o);
  ground->add_option("--image", image_path, "scene image (PPM)")->required();
  ground->add_option("--instruction,-t", instruction_text, "instruction text");
  ground->add_option("--objects", objects_csv, "comma-separated categories instead of reasoning");
  ground->add_option("--out", out_path, "mask output (PGM)")->required();

  auto* localize = app.add_subcommand("localize", "predict an affordance map");
  std::string mask_path, actions_spec;
  add_pipeline_options(localize, o);
  localize->add_option("--image", image_path, "scene image (PPM)")->required();
  localize->add_option("--mask", mask_path, "full-view mask (PGM, nonzero = foreground)");
  localize->add_option("--actions", actions_spec, "sub-actions, e.g. \"sit:chair;hold:cup\"");
  localize->add_option("--out", out_path, "map output (PGM)")->required();

  auto* run = app.add_subcommand("run", "reason, ground and localize in one pass");
  std::string out_dir, stem = "result", overlay_out;
  add_pipeline_options(run, o);
  run->add_option("--image", image_path, "scene image (PPM)")->required();
  run->add_option("--instruction,-t", instruction_text, "instruction text")->required();
  run->add_option("--out-dir", out_dir, "output directory")->required();
  run->add_option("--stem", stem, "output file stem");
  run->add_option("--overlay-out", overlay_out, "overlay path (PPM)");

  auto* eval = app.add_subcommand("eval", "score predictions against a dataset");
  std::string dataset_root, predictions_dir, report_path, table_path;
  add_pipeline_options(eval, o);
  eval->add_option("--dataset", dataset_root, "LLMaFF-format dataset root")->required();
  eval->add_option("--predictions", predictions_dir, "directory of <id>.pgm maps; omit to generate");
  eval->add_option("--report", report_path, "JSON report path (default stdout)");
  eval->add_option("--table", table_path, "plain-text report path");

  auto* ablation = app.add_subcommand("ablation", "evaluate every LMA/WCB/LMO combination");
  std::string json_path;
  add_pipeline_options(ablation, o);
  ablation->add_option("--dataset", dataset_root, "LLMaFF-format dataset root")->required();
  ablation->add_option("--out", table_path, "table path (default stdout)");
  ablation->add_option("--json", json_path, "JSON rows path");

  auto* train_cmd = app.add_subcommand("train", "train the head on an exo/ego directory layout");
  std::string data_root, model_out, split_name = "seen", init_model;
  Hyperparameters hyper;
  int image_size = 32;
  ModelShape shape;
  add_pipeline_options(train_cmd, o);
  train_cmd->add_option("--data", data_root, "root holding <Split>/trainset/{exocentric,egocentric}")->required();
  train_cmd->add_option("--split", split_name, "seen or unseen");
  train_cmd->add_option("--out", model_out, "model output directory")->required();
  train_cmd->add_option("--init", init_model, "start from this model directory");
  train_cmd->add_option("--epochs", hyper.epochs, "epochs");
  train_cmd->add_option("--lr", hyper.learning_rate, "learning rate");
  train_cmd->add_option("--weight-decay", hyper.weight_decay, "L2 weight decay");
  train_cmd->add_option("--batch", hyper.batch_size, "batch size");
  train_cmd->add_option("--align-weight", hyper.align_weight, "exo/ego alignment weight");
  train_cmd->add_option("--size", image_size, "square training resolution");

  auto* init_cmd = app.add_subcommand("init-model", "write a randomly initialised model");
  add_pipeline_options(init_cmd, o);
  init_cmd->add_option("--out", model_out, "model output directory")->required();
  init_cmd->add_option("--patch", shape.patch, "patch size");
  init_cmd->add_option("--width", shape.width, "token width");
  init_cmd->add_option("--depth", shape.depth, "backbone depth");
  init_cmd->add_option("--hidden", shape.hidden, "head width");

  auto* rasterize = app.add_subcommand("rasterize", "turn point annotations into a GT map");
  std::string points_path;
  Eigen::Index height = 0, width = 0;
  std::optional<double> sigma;
  rasterize->add_option("--points", points_path, "point annotation JSON")->required();
  rasterize->add_option("--height", height, "image height when the file has none");
  rasterize->add_option("--width", width, "image width when the file has none");
  rasterize->add_option("--sigma", sigma, "kernel width (default 2% of the diagonal)");
  rasterize->add_option("--out", out_path, "GT output (PGM)")->required();

  auto* stats = app.add_subcommand("stats", "affordance type counts and instruction lengths");
  stats->add_option("--dataset", dataset_root, "LLMaFF-format dataset root")->required();
  stats->add_option("--out", out_path, "JSON output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int status = app.exit(e);
    return status == 0 ? 0 : 2;
  }

  try {
    if (reason->parsed()) {
      Pipeline p(make_config(o));
      report_diagnostic(p);
      const Instruction t = instruction_from(instruction_text);
      const ObjectCategorySet objects = p.reason_objects(t);
      const ActionReasoning actions = p.reason_actions(objects, t);
      json acts = json::array();
      for (const auto& a : actions.actions) acts.push_back({{"predicate", a.predicate}, {"object", a.object}});
      std::cout << json{{"objects", objects.categories}, {"actions", acts}, {"warnings", actions.warnings}}.dump(2)
                << "\n";
    } else if (ground->parsed()) {
      Pipeline p(make_config(o));
      report_diagnostic(p);
      const SceneImage image = load_image(image_path);
      ObjectCategorySet objects{{}, p.config().k};
      if (!objects_csv.empty()) {
        objects.categories = filter_object_output(objects_csv, p.config().k);
      } else {
        if (instruction_text.empty()) raise(ErrorCode::InvalidConfig, "ground needs --instruction or --objects");
        objects = p.reason_objects(instruction_from(instruction_text));
      }
      const GroundingResult g = p.ground(image, objects);
      write_pgm(out_path, mask_to_gray8(g.mask.foreground));
      json valid = json::array();
      for (const auto& [m, c] : g.mask.contributing)
        valid.push_back({{"mask", m}, {"category", objects.categories[std::size_t(c)]},
                         {"probability", g.classifications[m].best_probability}});
      std::cout << json{{"objects", objects.categories}, {"mask_count", g.candidates.size()}, {"valid_masks", valid}}
                       .dump(2)
                << "\n";
    } else if (localize->parsed()) {
      Pipeline p(make_config(o));
      const SceneImage image = load_image(image_path);
      std::optional<FullViewMask> mask;
      if (!mask_path.empty()) mask = FullViewMask{read_pgm(mask_path) > 0, {}};
      std::vector<SubAction> actions = parse_actions(actions_spec, p.predicates());
      if (actions.empty() && p.config().flags.lma)
        raise(ErrorCode::EmptyActionSet, "give --actions or pass --no-lma to aggregate every channel");
      write_pgm(out_path, to_gray8(p.localize(image, mask, actions)));
    } else if (run->parsed()) {
      Pipeline p(make_config(o));
      report_diagnostic(p);
      const SceneImage image = load_image(image_path);
      RunOutput result = p.run(image, instruction_from(instruction_text));
      write_run_outputs(result, image, out_dir, stem,
                        overlay_out.empty() ? std::nullopt : std::optional<fs::path>(overlay_out));
      if (result.record.empty_foreground) std::cerr << "warning: no mask passed the validity boundary\n";
      std::cout << result.record.map_path << "\n";
    } else if (eval->parsed()) {
      const MetricSummary summary = predictions_dir.empty() ? evaluate_generated(dataset_root, make_config(o))
                                                            : evaluate_predictions(dataset_root, predictions_dir);
      write_or_print(report_path, report_json(summary));
      if (!table_path.empty()) write_or_print(table_path, report_table(summary));
    } else if (ablation->parsed()) {
      const auto rows = run_ablation(dataset_root, make_config(o));
      write_or_print(table_path, ablation_table(rows));
      if (!json_path.empty()) write_file(json_path, ablation_json(rows));
    } else if (train_cmd->parsed()) {
      const PipelineConfig c = make_config(o);
      const PredicateList predicates = c.predicates.empty() ? default_predicates() : PredicateList::load(c.predicates);
      const Split split = text::casefold(split_name) == "unseen" ? Split::Unseen : Split::Seen;
      const Agd20kTraining layout = load_agd20k_training(data_root, split, predicates);
      // each action's exo images are paired cyclically with its ego images
      std::map<std::string, std::vector<fs::path>> ego_by_action;
      for (const auto& s : layout.egocentric) ego_by_action[s.action].push_back(s.image);
      std::map<std::string, std::size_t> cursor;
      std::vector<SceneImage> exo, ego;
      std::vector<std::size_t> labels;
      for (const auto& s : layout.exocentric) {
        const auto& egos = ego_by_action[s.action];
        if (egos.empty()) continue;
        exo.push_back(resized(read_ppm(s.image), image_size));
        ego.push_back(resized(read_ppm(egos[cursor[s.action]++ % egos.size()]), image_size));
        labels.push_back(*predicates.index_of(s.action));
      }
      ModelState model = init_model.empty() ? make_model(predicates, shape, c.seed, c.beta) : load_model(init_model);
      hyper.seed = c.seed;
      const TrainResult result = train(model, exo, ego, labels, hyper, [](int epoch, double loss) {
        std::cerr << "epoch " << epoch + 1 << " loss " << loss << "\n";
      });
      save_model(model, model_out);
      write_file(fs::path(model_out) / "loss_history.json", json(result.loss_history).dump() + "\n");
    } else if (init_cmd->parsed()) {
      const PipelineConfig c = make_config(o);
      const PredicateList predicates = c.predicates.empty() ? default_predicates() : PredicateList::load(c.predicates);
      save_model(make_model(predicates, shape, c.seed, c.beta), model_out);
    } else if (rasterize->parsed()) {
      PointAnnotation a = load_point_annotation(points_path);
      if (height > 0) a.rows = height;
      if (width > 0) a.cols = width;
      write_pgm(out_path, to_gray8(rasterize_points(a, sigma.value_or(default_sigma(a.rows, a.cols)))));
    } else if (stats->parsed()) {
      write_or_print(out_path, stats_json(dataset_stats(load_llmaff(dataset_root))));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
