#ifndef AFFORD_ARCOT_HPP
#define AFFORD_ARCOT_HPP

// Affordance reasoning chain-of-thought: object-oriented prompting, output
// filtering, and action-oriented decomposition into (predicate, object)
// sub-actions drawn from a closed predicate list.

#include <compare>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "afford/llm.hpp"

namespace afford {

inline constexpr int kDefaultObjectCount = 3;

struct Instruction {
  std::string text;
  std::optional<std::string> id;
};

/// Throws EmptyInstruction when the text is blank.
Instruction make_instruction(std::string text, std::optional<std::string> id = std::nullopt);

/// Ordered, case-fold-unique action vocabulary. Its order fixes the channel
/// order of the localization head.
class PredicateList {
 public:
  PredicateList() = default;
  explicit PredicateList(std::vector<std::string> predicates);

  /// One predicate per line, '#' starts a comment, blank lines ignored.
  static PredicateList parse(std::string_view text);
  static PredicateList load(const std::filesystem::path& path);

  std::size_t size() const { return predicates_.size(); }
  bool empty() const { return predicates_.empty(); }
  const std::string& operator[](std::size_t i) const { return predicates_[i]; }
  const std::vector<std::string>& names() const { return predicates_; }
  /// Index of the predicate equal to `name` after case-folding and whitespace
  /// normalization ('_' counts as whitespace).
  std::optional<std::size_t> index_of(std::string_view name) const;

  bool operator==(const PredicateList&) const = default;

 private:
  std::vector<std::string> predicates_;
};

struct ObjectCategorySet {
  std::vector<std::string> categories;
  int k = kDefaultObjectCount;
};

struct SubAction {
  std::string predicate;
  std::string object;

  auto operator<=>(const SubAction&) const = default;
};

struct ActionReasoning {
  std::vector<SubAction> actions;
  std::vector<std::string> warnings;
};

std::string render_object_prompt(const Instruction& instruction, int k);

/// Extracts at most k clean category names from free-form LLM prose.
std::vector<std::string> filter_object_output(std::string_view raw, int k);

ObjectCategorySet reason_objects(const Instruction& instruction, int k, LlmClient& llm);

std::string render_action_prompt(const ObjectCategorySet& objects, const PredicateList& predicates,
                                 const Instruction& instruction);

/// Parses "predicate the object" clauses. Clauses with no usable predicate or
/// no matching object are dropped and reported in `warnings`.
ActionReasoning parse_sub_actions(std::string_view raw, const ObjectCategorySet& objects,
                                  const PredicateList& predicates);

ActionReasoning reason_actions(const ObjectCategorySet& objects, const PredicateList& predicates,
                               const Instruction& instruction, LlmClient& llm);

enum class PredicateMatchKind { Exact, Normalized, Stem };

struct PredicateMatch {
  std::size_t predicate;
  PredicateMatchKind kind;
  std::size_t word_begin;  // index of the first matched word
  std::size_t word_count;
};

/// Finds the first predicate occurrence in a tokenized clause: case-folded
/// exact word match, then whitespace-normalized match (multi-word predicates,
/// '_' joins), then a longest-common-prefix stem match of at least 4 chars.
std::optional<PredicateMatch> match_predicate(const std::vector<std::string>& words,
                                              const PredicateList& predicates);

namespace text {
std::string trim(std::string_view s);
std::string casefold(std::string_view s);
/// Case-folds, maps '_' to ' ', collapses whitespace runs and trims.
std::string normalize(std::string_view s);
std::vector<std::string> split_words(std::string_view s);
}  // namespace text

}  // namespace afford

#endif  // AFFORD_ARCOT_HPP
