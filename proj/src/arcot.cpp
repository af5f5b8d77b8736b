#include "afford/arcot.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "afford/error.hpp"
#include "afford/pnm.hpp"

namespace afford {

namespace text {

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string casefold(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string normalize(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : casefold(s)) {
    if (std::isspace(c) || c == '_') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(c));
  }
  return out;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '\'' || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

}  // namespace text

namespace {

bool starts_with_at(std::string_view s, std::size_t pos, std::string_view prefix) {
  return s.substr(pos, prefix.size()) == prefix;
}

// Length of an enumeration marker ("12. ", "3) ", "- ", "* ", "• ") starting
// at `pos`, or 0.
std::size_t marker_length(std::string_view s, std::size_t pos) {
  std::size_t i = pos;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > pos && i < s.size() && (s[i] == '.' || s[i] == ')') &&
      (i + 1 == s.size() || std::isspace(static_cast<unsigned char>(s[i + 1]))))
    return i + 1 - pos;
  for (std::string_view bullet : {"- ", "* ", "+ ", "\xE2\x80\xA2"}) {
    if (starts_with_at(s, pos, bullet)) return bullet.size();
  }
  return 0;
}

struct Segment {
  std::string body;
  bool enumerated;
};

// Splits text into lines and then at enumeration markers, remembering which
// pieces were introduced by a marker.
std::vector<Segment> segment(std::string_view raw) {
  std::vector<Segment> out;
  std::size_t line_start = 0;
  while (line_start <= raw.size()) {
    std::size_t line_end = raw.find('\n', line_start);
    if (line_end == std::string_view::npos) line_end = raw.size();
    std::string_view line = raw.substr(line_start, line_end - line_start);

    std::size_t lead = 0;
    while (lead < line.size() && std::isspace(static_cast<unsigned char>(line[lead]))) ++lead;
    // strip markdown emphasis around a leading marker, e.g. "**1. Chair**"
    while (starts_with_at(line, lead, "**")) lead += 2;

    std::size_t cur = lead;
    bool cur_enum = false;
    if (std::size_t m = marker_length(line, lead)) {
      cur = lead + m;
      cur_enum = true;
    }
    std::size_t scan = cur;
    while (scan < line.size()) {
      // inline numbered markers must follow whitespace: "... 2. Hammock"
      if (std::isspace(static_cast<unsigned char>(line[scan])) && scan + 1 < line.size() &&
          std::isdigit(static_cast<unsigned char>(line[scan + 1]))) {
        std::size_t m = marker_length(line, scan + 1);
        if (m > 0) {
          out.push_back({std::string(line.substr(cur, scan - cur)), cur_enum});
          cur = scan + 1 + m;
          cur_enum = true;
          scan = cur;
          continue;
        }
      }
      ++scan;
    }
    out.push_back({std::string(line.substr(cur)), cur_enum});
    line_start = line_end + 1;
  }
  return out;
}

std::string strip_emphasis(std::string s) {
  for (std::string_view mark : {"**", "__", "`"}) {
    std::size_t pos;
    while ((pos = s.find(mark)) != std::string::npos) s.erase(pos, mark.size());
  }
  return s;
}

// Cuts an item at the first explanatory delimiter.
std::string truncate_explanation(const std::string& item) {
  static const std::vector<std::string> delimiters = {
      "\xE2\x80\x94",  // em dash
      "\xE2\x80\x93",  // en dash
      "\xE2\x80\xA6",  // ellipsis character
      " - ", ":", "...", "(", ",", ";", ". ",
  };
  std::size_t cut = item.size();
  for (const auto& d : delimiters) cut = std::min(cut, item.find(d));
  std::string out = text::trim(std::string_view(item).substr(0, cut));
  while (!out.empty() && std::string_view(".!?\"'").find(out.back()) != std::string_view::npos) out.pop_back();
  return text::trim(out);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t pos; (pos = s.find(sep, start)) != std::string::npos; start = pos + 1)
    parts.push_back(s.substr(start, pos - start));
  parts.push_back(s.substr(start));
  return parts;
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::size_t common_prefix(std::string_view a, std::string_view b) {
  std::size_t n = 0;
  while (n < a.size() && n < b.size() && a[n] == b[n]) ++n;
  return n;
}

bool contains_phrase(const std::vector<std::string>& haystack, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i)
    if (std::equal(needle.begin(), needle.end(), haystack.begin() + static_cast<std::ptrdiff_t>(i))) return true;
  return false;
}

const std::set<std::string>& filler_words() {
  static const std::set<std::string> words = {"the", "a", "an", "on", "in", "into", "onto", "at", "with",
                                              "to", "from", "up", "of", "your", "my", "some", "it"};
  return words;
}

// Object from the trailing noun phrase: the longest category whose words occur
// in the phrase, or else the category that contains the (filler-stripped)
// phrase.
std::optional<std::string> match_object(const std::vector<std::string>& tail, const ObjectCategorySet& objects) {
  std::optional<std::string> best;
  std::size_t best_len = 0;
  for (const auto& name : objects.categories) {
    auto words = text::split_words(name);
    if (contains_phrase(tail, words) && words.size() > best_len) {
      best = name;
      best_len = words.size();
    }
  }
  if (best) return best;
  std::vector<std::string> core;
  for (const auto& w : tail)
    if (!filler_words().count(w)) core.push_back(w);
  if (core.empty()) return std::nullopt;
  for (const auto& name : objects.categories)
    if (contains_phrase(text::split_words(name), core)) return name;
  return std::nullopt;
}

bool mentions_any_object(const std::vector<std::string>& words, const ObjectCategorySet& objects) {
  for (const auto& name : objects.categories)
    if (contains_phrase(words, text::split_words(name))) return true;
  return false;
}

}  // namespace

Instruction make_instruction(std::string text, std::optional<std::string> id) {
  if (text::trim(text).empty()) raise(ErrorCode::EmptyInstruction, "instruction text is empty");
  return Instruction{std::move(text), std::move(id)};
}

PredicateList::PredicateList(std::vector<std::string> predicates) {
  std::set<std::string> seen;
  for (auto& p : predicates) {
    std::string t = text::trim(p);
    if (t.empty()) raise(ErrorCode::EmptyPredicateList, "predicate names must be non-empty");
    if (!seen.insert(text::normalize(t)).second)
      raise(ErrorCode::InvalidConfig, "duplicate predicate '" + t + "'");
    predicates_.push_back(std::move(t));
  }
  if (predicates_.empty()) raise(ErrorCode::EmptyPredicateList, "predicate list is empty");
}

PredicateList PredicateList::parse(std::string_view content) {
  std::vector<std::string> names;
  for (const auto& line : split_on(std::string(content), '\n')) {
    std::string body = line.substr(0, line.find('#'));
    body = text::trim(body);
    if (!body.empty()) names.push_back(body);
  }
  return PredicateList(std::move(names));
}

PredicateList PredicateList::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::optional<std::size_t> PredicateList::index_of(std::string_view name) const {
  const std::string key = text::normalize(name);
  for (std::size_t i = 0; i < predicates_.size(); ++i)
    if (text::normalize(predicates_[i]) == key) return i;
  return std::nullopt;
}

std::string render_object_prompt(const Instruction& instruction, int k) {
  if (k < 1) raise(ErrorCode::InvalidK, "k must be >= 1, got " + std::to_string(k));
  if (text::trim(instruction.text).empty()) raise(ErrorCode::EmptyInstruction, "instruction text is empty");
  return "What are the " + std::to_string(k) + " most common objects that can be used if " +
         text::trim(instruction.text) + "?";
}

std::vector<std::string> filter_object_output(std::string_view raw, int k) {
  if (k < 1) raise(ErrorCode::InvalidK, "k must be >= 1, got " + std::to_string(k));
  std::string cleaned(raw);
  cleaned.erase(std::remove(cleaned.begin(), cleaned.end(), '\r'), cleaned.end());

  std::vector<Segment> segments = segment(cleaned);
  const bool any_enumerated =
      std::any_of(segments.begin(), segments.end(), [](const Segment& s) { return s.enumerated; });

  std::vector<std::string> items;
  if (any_enumerated) {
    // enumerated answers: surrounding prose (preambles, closing remarks) is dropped
    for (auto& s : segments)
      if (s.enumerated) items.push_back(s.body);
  } else {
    std::vector<std::string> lines;
    for (auto& s : segments)
      if (!text::trim(s.body).empty()) lines.push_back(s.body);
    if (lines.size() == 1 && lines[0].find(',') != std::string::npos)
      items = split_on(lines[0], ',');
    else
      items = lines;
  }

  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& item : items) {
    std::string name = truncate_explanation(strip_emphasis(item));
    if (name.empty() || name.find('\n') != std::string::npos) continue;
    if (!seen.insert(text::normalize(name)).second) continue;
    out.push_back(std::move(name));
    if (out.size() == static_cast<std::size_t>(k)) break;
  }
  if (out.empty()) raise(ErrorCode::EmptyObjectSet, "no object names could be extracted from the LLM output");
  return out;
}

ObjectCategorySet reason_objects(const Instruction& instruction, int k, LlmClient& llm) {
  const std::string prompt = render_object_prompt(instruction, k);
  const std::string response = llm.complete(prompt);
  return ObjectCategorySet{filter_object_output(response, k), k};
}

std::string render_action_prompt(const ObjectCategorySet& objects, const PredicateList& predicates,
                                 const Instruction& instruction) {
  if (objects.categories.empty()) raise(ErrorCode::EmptyObjectSet, "object set is empty");
  if (predicates.empty()) raise(ErrorCode::EmptyPredicateList, "predicate list is empty");
  return "Select skills from " + join(predicates.names(), ", ") + " to interact with the above " +
         join(objects.categories, ", ") + " to help me if " + text::trim(instruction.text) + "?";
}

std::optional<PredicateMatch> match_predicate(const std::vector<std::string>& words,
                                              const PredicateList& predicates) {
  std::vector<std::vector<std::string>> pred_words;
  std::vector<std::string> pred_folded;
  for (const auto& p : predicates.names()) {
    pred_words.push_back(text::split_words(text::normalize(p)));
    pred_folded.push_back(text::casefold(p));
  }
  for (std::size_t i = 0; i < words.size(); ++i) {
    std::optional<PredicateMatch> best;
    auto better = [&](const PredicateMatch& m) {
      return !best || m.kind < best->kind || (m.kind == best->kind && m.word_count > best->word_count);
    };
    for (std::size_t p = 0; p < pred_words.size(); ++p) {
      const auto& pw = pred_words[p];
      if (pw.empty() || i + pw.size() > words.size()) continue;
      bool head_equal = true;
      for (std::size_t j = 0; j + 1 < pw.size(); ++j) head_equal = head_equal && words[i + j] == pw[j];
      if (!head_equal) continue;
      const std::string& last = words[i + pw.size() - 1];
      std::vector<std::string> span(words.begin() + static_cast<std::ptrdiff_t>(i),
                                    words.begin() + static_cast<std::ptrdiff_t>(i + pw.size()));
      PredicateMatch m{p, PredicateMatchKind::Stem, i, pw.size()};
      if (last == pw.back()) {
        m.kind = join(span, " ") == pred_folded[p] ? PredicateMatchKind::Exact : PredicateMatchKind::Normalized;
      } else if (common_prefix(last, pw.back()) < 4) {
        continue;
      }
      if (better(m)) best = m;
    }
    if (best) return best;
  }
  return std::nullopt;
}

ActionReasoning parse_sub_actions(std::string_view raw, const ObjectCategorySet& objects,
                                  const PredicateList& predicates) {
  ActionReasoning result;
  std::set<SubAction> seen;
  std::string cleaned(raw);
  cleaned.erase(std::remove(cleaned.begin(), cleaned.end(), '\r'), cleaned.end());

  for (const auto& seg : segment(cleaned)) {
    std::string body = strip_emphasis(seg.body);
    for (char& c : body)
      if (c == ';') c = ',';
    for (const auto& clause : split_on(body, ',')) {
      const std::string trimmed = text::trim(clause);
      const auto words = text::split_words(trimmed);
      if (words.empty()) continue;
      auto match = match_predicate(words, predicates);
      if (!match) {
        if (mentions_any_object(words, objects))
          result.warnings.push_back("dropped '" + trimmed + "': no predicate from the predicate list");
        continue;
      }
      std::vector<std::string> tail(words.begin() + static_cast<std::ptrdiff_t>(match->word_begin + match->word_count),
                                    words.end());
      auto object = match_object(tail, objects);
      if (!object) {
        result.warnings.push_back("dropped '" + trimmed + "': no object from the object set");
        continue;
      }
      SubAction action{predicates[match->predicate], *object};
      if (seen.insert(action).second) result.actions.push_back(std::move(action));
    }
  }
  return result;
}

ActionReasoning reason_actions(const ObjectCategorySet& objects, const PredicateList& predicates,
                               const Instruction& instruction, LlmClient& llm) {
  if (objects.categories.empty()) raise(ErrorCode::EmptySubActionSet, "object set is empty");
  if (predicates.empty()) raise(ErrorCode::EmptyPredicateList, "predicate list is empty");
  const std::string response = llm.complete(render_action_prompt(objects, predicates, instruction));
  ActionReasoning result = parse_sub_actions(response, objects, predicates);
  if (result.actions.empty())
    raise(ErrorCode::EmptySubActionSet, "no valid (predicate, object) pair in the LLM output");
  return result;
}

}  // namespace afford
