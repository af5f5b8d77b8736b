#include <doctest.h>

#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "afford/arcot.hpp"
#include "afford/error.hpp"
#include "afford/llm.hpp"
#include "afford/pnm.hpp"

using namespace afford;

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

const PredicateList kPredicates({"swing", "carry", "catch", "pick up", "sit", "lie", "hold"});

}  // namespace

TEST_CASE("object prompt template") {
  CHECK(render_object_prompt(make_instruction("I am tired and want to rest"), 3) ==
        "What are the 3 most common objects that can be used if I am tired and want to rest?");
  CHECK(render_object_prompt(make_instruction("x"), 1) == "What are the 1 most common objects that can be used if x?");
  CHECK(code_of([] { render_object_prompt(make_instruction("x"), 0); }) == ErrorCode::InvalidK);
  CHECK(code_of([] { make_instruction("   "); }) == ErrorCode::EmptyInstruction);
}

TEST_CASE("action prompt template") {
  const ObjectCategorySet objects{{"chair"}, 3};
  const PredicateList predicates({"sit", "hold"});
  const std::string p = render_action_prompt(objects, predicates, make_instruction("rest"));
  CHECK(p == "Select skills from sit, hold to interact with the above chair to help me if rest?");
  CHECK(render_action_prompt(ObjectCategorySet{{"a"}, 1}, PredicateList({"b"}), make_instruction("c")) ==
        "Select skills from b to interact with the above a to help me if c?");
  CHECK(code_of([] { PredicateList(std::vector<std::string>{}); }) == ErrorCode::EmptyPredicateList);
  CHECK(code_of([&] { render_action_prompt(ObjectCategorySet{{}, 3}, predicates, make_instruction("c")); }) ==
        ErrorCode::EmptyObjectSet);
  // pure: identical inputs give identical bytes
  CHECK(render_action_prompt(objects, predicates, make_instruction("rest")) == p);
}

TEST_CASE("filter object output") {
  CHECK(filter_object_output("1. Chair — a seat with a back\n2. Hammock: suspended bed", 3) ==
        std::vector<std::string>{"Chair", "Hammock"});
  CHECK(filter_object_output("Chair", 3) == std::vector<std::string>{"Chair"});
  CHECK(code_of([] { filter_object_output("", 3); }) == ErrorCode::EmptyObjectSet);
  CHECK(filter_object_output("Chair..., Hammock..., Blanket and Pillows...", 3) ==
        std::vector<std::string>{"Chair", "Hammock", "Blanket and Pillows"});
  CHECK(filter_object_output("- Cup\n- cup\n- Mug. Good for tea", 3) == std::vector<std::string>{"Cup", "Mug"});
  CHECK(filter_object_output("Sure! Here you go:\n1) Bed\n2) Sofa\n3) Chair\n4) Rug", 3) ==
        std::vector<std::string>{"Bed", "Sofa", "Chair"});
}

TEST_CASE("filter output never exceeds k and never contains a line break") {
  std::mt19937_64 rng(11);
  const std::vector<std::string> pieces = {"1. ", "2) ", "- ", "* ", "Chair", "Big lamp", " — note", ": detail",
                                           ". More", "\n", ", ", "...", "(x)", "Table", "cup", "  "};
  for (int trial = 0; trial < 1000; ++trial) {
    std::string raw;
    const int len = std::uniform_int_distribution<int>(1, 20)(rng);
    for (int i = 0; i < len; ++i) raw += pieces[std::uniform_int_distribution<std::size_t>(0, pieces.size() - 1)(rng)];
    const int k = std::uniform_int_distribution<int>(1, 5)(rng);
    try {
      const auto items = filter_object_output(raw, k);
      CHECK(items.size() <= std::size_t(k));
      CHECK(!items.empty());
      for (const auto& item : items) {
        CHECK(item.find('\n') == std::string::npos);
        CHECK(!item.empty());
      }
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyObjectSet);
    }
  }
}

TEST_CASE("reason objects replays a worked transcript") {
  const Instruction t = make_instruction("I am tired and want to rest");
  ScriptedLlmClient llm;
  llm.on(render_object_prompt(t, 3), "Chair..., Hammock..., Blanket and Pillows...");
  const ObjectCategorySet o = reason_objects(t, 3, llm);
  CHECK(o.categories == std::vector<std::string>{"Chair", "Hammock", "Blanket and Pillows"});
  CHECK(o.k == 3);
}

TEST_CASE("reason objects keeps the first k enumerated items") {
  ScriptedLlmClient llm;
  llm.then("1. Bed\n2. Sofa\n3. Hammock\n4. Recliner\n5. Bench");
  CHECK(reason_objects(make_instruction("rest"), 3, llm).categories ==
        std::vector<std::string>{"Bed", "Sofa", "Hammock"});
  CHECK(code_of([&] { reason_objects(Instruction{"", std::nullopt}, 3, llm); }) == ErrorCode::EmptyInstruction);
}

TEST_CASE("reason actions replays a worked transcript") {
  const Instruction t = make_instruction("I am tired and want to rest");
  const ObjectCategorySet o{{"Chair", "Hammock", "Blanket and Pillows"}, 3};
  ScriptedLlmClient llm;
  llm.then("sit on the chair..., lie on the hammock..., hold the blanket and pillows...");
  const ActionReasoning r = reason_actions(o, kPredicates, t, llm);
  const std::vector<SubAction> expected = {{"sit", "Chair"}, {"lie", "Hammock"}, {"hold", "Blanket and Pillows"}};
  CHECK(r.actions == expected);
  CHECK(r.warnings.empty());
  CHECK(llm.prompts().front() == render_action_prompt(o, kPredicates, t));
}

TEST_CASE("unknown verbs are dropped with a warning") {
  const ObjectCategorySet o{{"chair"}, 3};
  ScriptedLlmClient llm;
  llm.then("1. Sit on the chair.\n2. Teleport the chair.");
  const ActionReasoning r = reason_actions(o, PredicateList({"sit"}), make_instruction("rest"), llm);
  CHECK(r.actions == std::vector<SubAction>{{"sit", "chair"}});
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("Teleport") != std::string::npos);

  ScriptedLlmClient only_bad;
  only_bad.then("Teleport the chair.");
  CHECK(code_of([&] { reason_actions(o, PredicateList({"sit"}), make_instruction("rest"), only_bad); }) ==
        ErrorCode::EmptySubActionSet);
  CHECK(code_of([&] { reason_actions(ObjectCategorySet{{}, 3}, PredicateList({"sit"}), make_instruction("r"), llm); }) ==
        ErrorCode::EmptySubActionSet);
}

TEST_CASE("predicate matching tiers") {
  const PredicateList p({"pick up", "sit", "hold", "carry"});
  auto match = [&](const std::string& clause) { return match_predicate(text::split_words(clause), p); };
  REQUIRE(match("Sit on it"));
  CHECK(match("Sit on it")->kind == PredicateMatchKind::Exact);
  REQUIRE(match("then pick up the cup"));
  CHECK(p[match("then pick up the cup")->predicate] == "pick up");
  REQUIRE(match("try pick_up the cup"));
  CHECK(p[match("try pick_up the cup")->predicate] == "pick up");
  REQUIRE(match("holding the cup"));
  CHECK(match("holding the cup")->kind == PredicateMatchKind::Stem);
  CHECK(p[match("carrying it")->predicate] == "carry");
  CHECK(!match("teleport the chair"));
  CHECK(!match("sitter"));  // shares only "sit", shorter than four characters
}

TEST_CASE("sub-actions satisfy their invariants on fuzzed transcripts") {
  const PredicateList predicates({"sit", "hold", "carry", "pick up", "lie"});
  const ObjectCategorySet objects{{"chair", "cup", "big box"}, 3};
  const std::vector<std::string> verbs = {"sit on", "hold", "carrying", "pick up", "lie on", "teleport", "eat", ""};
  const std::vector<std::string> nouns = {"the chair", "a cup", "the big box", "the moon", "it", ""};
  std::mt19937_64 rng(5);
  auto any = [&](const auto& v) { return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)]; };
  for (int trial = 0; trial < 1000; ++trial) {
    std::string raw;
    const int n = std::uniform_int_distribution<int>(1, 4)(rng);
    for (int i = 0; i < n; ++i) raw += std::to_string(i + 1) + ". " + any(verbs) + " " + any(nouns) + ".\n";
    const ActionReasoning r = parse_sub_actions(raw, objects, predicates);
    for (const auto& a : r.actions) {
      CHECK(predicates.index_of(a.predicate).has_value());
      CHECK(std::find(objects.categories.begin(), objects.categories.end(), a.object) != objects.categories.end());
    }
  }
}

TEST_CASE("predicate list file") {
  const PredicateList p = PredicateList::parse("# comment\nsit\n\n  Pick Up  \nhold # trailing\n");
  CHECK(p.names() == std::vector<std::string>{"sit", "Pick Up", "hold"});
  CHECK(p.index_of("pick_up") == std::optional<std::size_t>(1));
  CHECK(code_of([] { PredicateList::parse("sit\nSIT\n"); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("transcript cache keys, persistence and replay") {
  const std::string prompt = "What are the 3 most common objects that can be used if rest?";
  CHECK(transcript_key("gpt-4", prompt) == "c04dde36325afb8315a664af5bd2e1017417aad0647d7dabfb518ad5f03b4175");

  const auto dir = fixtures::scratch_dir("cache");
  const auto path = dir / "transcripts.jsonl";
  {
    auto cache = std::make_shared<TranscriptCache>(path);
    auto upstream = std::make_unique<ScriptedLlmClient>("gpt-4");
    upstream->then("1. Bed\n2. Sofa");
    CachedLlmClient client(cache, "gpt-4", std::move(upstream));
    CHECK(client.complete(prompt) == "1. Bed\n2. Sofa");
    CHECK(cache->size() == 1);
  }
  // a fresh process sees the cached response without any upstream
  auto cache = std::make_shared<TranscriptCache>(path);
  CachedLlmClient replay(cache, "gpt-4");
  CHECK(replay.complete(prompt) == "1. Bed\n2. Sofa");
  CHECK(reason_objects(make_instruction("rest"), 3, replay).categories == std::vector<std::string>{"Bed", "Sofa"});
  CHECK(code_of([&] { replay.complete("unseen prompt"); }) == ErrorCode::LlmUnavailable);

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  for (const char* field : {"\"key\"", "\"model\"", "\"prompt\"", "\"response\"", "\"ts\""})
    CHECK(line.find(field) != std::string::npos);
}
