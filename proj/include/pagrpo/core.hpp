#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pagrpo/error.hpp"

namespace pagrpo {

enum class Task { mcq, judge };

// Candidate count: 4 for multiple choice, 2 for pairwise judging.
constexpr int candidate_count(Task task) noexcept { return task == Task::mcq ? 4 : 2; }

inline std::string_view to_string(Task task) noexcept { return task == Task::mcq ? "mcq" : "judge"; }

inline Task parse_task(std::string_view s) {
  if (s == "mcq") return Task::mcq;
  if (s == "judge") return Task::judge;
  throw InputError("unknown task '" + std::string(s) + "' (expected mcq or judge)");
}

/// How a permutation is applied to an instance.
///   coupled    - symbols stay in slot order, content moves (standard shuffling)
///   label_only - content stays put, symbols move
///   order_only - content moves and carries its symbol with it
enum class Protocol { coupled, label_only, order_only };

inline constexpr std::array<Protocol, 3> kAllProtocols{Protocol::coupled, Protocol::label_only,
                                                       Protocol::order_only};

inline std::string_view to_string(Protocol p) noexcept {
  switch (p) {
    case Protocol::coupled: return "coupled";
    case Protocol::label_only: return "label_only";
    case Protocol::order_only: return "order_only";
  }
  return "?";
}

inline Protocol parse_protocol(std::string_view s) {
  if (s == "coupled") return Protocol::coupled;
  if (s == "label_only") return Protocol::label_only;
  if (s == "order_only") return Protocol::order_only;
  throw InputError("unknown protocol '" + std::string(s) + "'");
}

inline constexpr std::array<char, 4> kAlphabet{'A', 'B', 'C', 'D'};

// 1-based index of a canonical symbol, 0 if not a symbol.
constexpr int symbol_index(char symbol) noexcept {
  return (symbol >= 'A' && symbol <= 'D') ? symbol - 'A' + 1 : 0;
}

constexpr char symbol_at(int index) noexcept { return kAlphabet[static_cast<std::size_t>(index - 1)]; }

struct Instance {
  std::string id;
  std::string question;
  std::vector<std::string> candidates;  // semantic index k lives at candidates[k-1]
  int ground_truth = 1;                 // 1-based semantic index
  Task task = Task::mcq;

  int n() const noexcept { return static_cast<int>(candidates.size()); }
};

inline void validate(const Instance& inst) {
  const std::string where = "instance '" + inst.id + "': ";
  if (inst.id.empty()) throw InputError("instance with empty id");
  if (inst.n() != candidate_count(inst.task)) {
    throw InputError(where + "expected " + std::to_string(candidate_count(inst.task)) +
                     " candidates for task " + std::string(to_string(inst.task)) + ", got " +
                     std::to_string(inst.n()));
  }
  if (inst.ground_truth < 1 || inst.ground_truth > inst.n()) {
    throw InputError(where + "answer_index " + std::to_string(inst.ground_truth) + " out of range");
  }
  for (const auto& c : inst.candidates) {
    if (c.empty()) throw InputError(where + "empty candidate text");
  }
}

inline void validate_unique_ids(const std::vector<Instance>& instances) {
  std::set<std::string_view> seen;
  for (const auto& inst : instances) {
    if (!seen.insert(inst.id).second) throw InputError("duplicate instance id '" + inst.id + "'");
  }
}

/// order[k] is the semantic index displayed at label slot k+1
/// ("BCDA" = slot A shows candidate 2, slot B shows candidate 3, ...).
struct Permutation {
  std::vector<int> order;

  int n() const noexcept { return static_cast<int>(order.size()); }

  static Permutation identity(int n) {
    Permutation p;
    for (int k = 1; k <= n; ++k) p.order.push_back(k);
    return p;
  }

  bool is_bijection() const {
    std::vector<bool> seen(order.size() + 1, false);
    for (int v : order) {
      if (v < 1 || v > n() || seen[static_cast<std::size_t>(v)]) return false;
      seen[static_cast<std::size_t>(v)] = true;
    }
    return true;
  }

  std::string to_string() const {
    std::string s;
    for (int v : order) s.push_back(symbol_at(v));
    return s;
  }

  static Permutation from_string(std::string_view s) {
    Permutation p;
    for (char c : s) {
      const int idx = symbol_index(c);
      if (idx == 0) throw InvalidPermutation("bad permutation symbol '" + std::string(1, c) + "'");
      p.order.push_back(idx);
    }
    if (p.order.empty() || !p.is_bijection()) {
      throw InvalidPermutation("'" + std::string(s) + "' is not a permutation");
    }
    return p;
  }

  auto operator<=>(const Permutation&) const = default;
};

// All n! bijections in lexicographic order of their order lists.
inline std::vector<Permutation> all_permutations(int n) {
  std::vector<Permutation> out;
  Permutation p = Permutation::identity(n);
  do {
    out.push_back(p);
  } while (std::next_permutation(p.order.begin(), p.order.end()));
  return out;
}

// The n cyclic shifts of the identity, starting at the identity.
inline std::vector<Permutation> cyclic_shifts(int n) {
  std::vector<Permutation> out;
  for (int shift = 0; shift < n; ++shift) {
    Permutation p;
    for (int k = 0; k < n; ++k) p.order.push_back((k + shift) % n + 1);
    out.push_back(std::move(p));
  }
  return out;
}

inline Permutation reversed(int n) {
  Permutation p;
  for (int k = n; k >= 1; --k) p.order.push_back(k);
  return p;
}

enum class McqPermMode { cyclic4, structured5, full24 };

inline std::vector<Permutation> mcq_permutation_set(McqPermMode mode) {
  switch (mode) {
    case McqPermMode::cyclic4: return cyclic_shifts(4);
    case McqPermMode::structured5: {
      auto perms = cyclic_shifts(4);
      perms.push_back(reversed(4));
      return perms;
    }
    case McqPermMode::full24: return all_permutations(4);
  }
  return {};
}

inline std::vector<Permutation> judge_permutation_set() { return {Permutation{{1, 2}}, Permutation{{2, 1}}}; }

/// Named permutation sets usable for training groups. `identity` (P = 1)
/// exists only to compare group-level and per-prompt estimators on a single row.
enum class PermSet { identity, cyclic4, structured5, full24, judge_pair };

inline std::string_view to_string(PermSet s) noexcept {
  switch (s) {
    case PermSet::identity: return "identity";
    case PermSet::cyclic4: return "cyclic4";
    case PermSet::structured5: return "structured5";
    case PermSet::full24: return "full24";
    case PermSet::judge_pair: return "judge_pair";
  }
  return "?";
}

inline PermSet parse_perm_set(std::string_view s) {
  if (s == "identity") return PermSet::identity;
  if (s == "cyclic4" || s == "4") return PermSet::cyclic4;
  if (s == "structured5" || s == "5") return PermSet::structured5;
  if (s == "full24" || s == "24") return PermSet::full24;
  if (s == "judge_pair" || s == "2") return PermSet::judge_pair;
  throw ConfigError("unknown permutation set '" + std::string(s) + "'");
}

inline std::vector<Permutation> permutation_set(PermSet set, Task task) {
  const bool mcq = task == Task::mcq;
  switch (set) {
    case PermSet::identity: return {Permutation::identity(candidate_count(task))};
    case PermSet::cyclic4:
      if (mcq) return mcq_permutation_set(McqPermMode::cyclic4);
      break;
    case PermSet::structured5:
      if (mcq) return mcq_permutation_set(McqPermMode::structured5);
      break;
    case PermSet::full24:
      if (mcq) return mcq_permutation_set(McqPermMode::full24);
      break;
    case PermSet::judge_pair:
      if (!mcq) return judge_permutation_set();
      break;
  }
  throw ConfigError("permutation set " + std::string(to_string(set)) + " is not valid for task " +
                    std::string(to_string(task)));
}

struct PermutationGroup {
  std::string instance_id;
  std::vector<Permutation> permutations;
  Protocol protocol = Protocol::coupled;

  std::size_t size() const noexcept { return permutations.size(); }
};

inline PermutationGroup make_group(const Instance& inst, std::vector<Permutation> perms,
                                   Protocol protocol = Protocol::coupled) {
  const std::size_t p = perms.size();
  const bool ok_size = p == 1 || (inst.task == Task::judge ? p == 2 : (p == 4 || p == 5 || p == 24));
  if (!ok_size) throw ShapeError("group size " + std::to_string(p) + " invalid for task " + std::string(to_string(inst.task)));
  std::set<Permutation> distinct(perms.begin(), perms.end());
  if (distinct.size() != p) throw InvalidPermutation("duplicate permutation in group");
  for (const auto& perm : perms) {
    if (perm.n() != inst.n() || !perm.is_bijection()) throw InvalidPermutation("permutation does not fit instance");
  }
  return {inst.id, std::move(perms), protocol};
}

struct Slot {
  int position = 1;  // 1-based display position
  char symbol = 'A';
  int semantic = 1;  // 1-based candidate index

  bool operator==(const Slot&) const = default;
};

/// One rendered presentation of an instance. Slots are listed in display order.
struct PromptVariant {
  std::string instance_id;
  int permutation_index = 0;
  std::vector<Slot> slots;

  int n() const noexcept { return static_cast<int>(slots.size()); }

  bool has_symbol(char symbol) const {
    return std::any_of(slots.begin(), slots.end(), [&](const Slot& s) { return s.symbol == symbol; });
  }
};

inline PromptVariant apply_permutation(const Instance& inst, const Permutation& perm, Protocol protocol,
                                       int permutation_index = 0) {
  if (perm.n() != inst.n() || !perm.is_bijection()) {
    throw InvalidPermutation("permutation " + std::to_string(perm.n()) + " does not fit instance '" + inst.id +
                             "' with " + std::to_string(inst.n()) + " candidates");
  }
  PromptVariant v{inst.id, permutation_index, {}};
  v.slots.reserve(perm.order.size());
  for (int k = 1; k <= perm.n(); ++k) {
    const int moved = perm.order[static_cast<std::size_t>(k - 1)];
    switch (protocol) {
      case Protocol::coupled: v.slots.push_back({k, symbol_at(k), moved}); break;
      case Protocol::label_only: v.slots.push_back({k, symbol_at(moved), k}); break;
      case Protocol::order_only: v.slots.push_back({k, symbol_at(moved), moved}); break;
    }
  }
  return v;
}

// The inverse label map: which original candidate the label points to.
inline int label_to_semantic(const PromptVariant& variant, char label) {
  for (const auto& s : variant.slots) {
    if (s.symbol == label) return s.semantic;
  }
  throw ParseDomainError("label '" + std::string(1, label) + "' not present in variant of '" +
                         variant.instance_id + "'");
}

/// Strict answer format: the final non-empty line must read `<prefix> <symbol>`.
struct FormatSpec {
  std::string answer_prefix = "Answer:";
};

struct ParsedLabel {
  char symbol = 'A';
  bool well_formatted = false;

  bool operator==(const ParsedLabel&) const = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

inline std::string_view last_nonempty_line(std::string_view text) {
  text = trim(text);
  const auto nl = text.find_last_of('\n');
  return nl == std::string_view::npos ? text : trim(text.substr(nl + 1));
}

// First single-character word that is one of the variant's symbols. When
// `fold_case` is set, lowercase letters count too.
inline std::optional<char> first_symbol_token(std::string_view text, const PromptVariant& variant,
                                              bool fold_case) {
  const auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; };
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!is_word(text[i])) continue;
    std::size_t j = i;
    while (j < text.size() && is_word(text[j])) ++j;
    if (j - i == 1) {
      char c = text[i];
      if (fold_case) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (variant.has_symbol(c)) return c;
    }
    i = j;
  }
  return std::nullopt;
}

}  // namespace detail

/// Two tiers: a strict anchored match sets `well_formatted`; otherwise the
/// first standalone symbol is taken, uppercase tokens preferred over
/// lowercase ones. Returns nullopt when no symbol can be found.
inline std::optional<ParsedLabel> parse_label(std::string_view raw, const PromptVariant& variant,
                                              const FormatSpec& fmt = {}) {
  const std::string_view line = detail::last_nonempty_line(raw);
  const std::string_view prefix = fmt.answer_prefix;
  if (line.size() == prefix.size() + 2 && line.substr(0, prefix.size()) == prefix &&
      line[prefix.size()] == ' ' && variant.has_symbol(line.back())) {
    return ParsedLabel{line.back(), true};
  }
  if (auto s = detail::first_symbol_token(raw, variant, false)) return ParsedLabel{*s, false};
  if (auto s = detail::first_symbol_token(raw, variant, true)) return ParsedLabel{*s, false};
  return std::nullopt;
}

struct Response {
  std::string raw_text;
  std::optional<char> parsed_label;
  std::optional<int> semantic_choice;
  int length_units = 0;
  bool well_formatted = false;
};

// The single path from raw text to a graded response; the simulator and the
// log grader both go through here.
inline Response make_response(std::string raw_text, const PromptVariant& variant, int length_units,
                              const FormatSpec& fmt = {}) {
  Response r;
  r.length_units = length_units;
  if (auto parsed = parse_label(raw_text, variant, fmt)) {
    r.parsed_label = parsed->symbol;
    r.semantic_choice = label_to_semantic(variant, parsed->symbol);
    r.well_formatted = parsed->well_formatted;
  }
  r.raw_text = std::move(raw_text);
  return r;
}

// Whitespace-delimited token count, used as the length of external responses.
inline int count_length_units(std::string_view text) {
  int count = 0;
  bool in_token = false;
  for (char c : text) {
    const bool ws = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!ws && !in_token) ++count;
    in_token = !ws;
  }
  return count;
}

}  // namespace pagrpo
