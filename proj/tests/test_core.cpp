#include <gtest/gtest.h>

#include <regex>
#include <set>

#include "oracles.hpp"

using namespace pagrpo;

namespace {

std::vector<Slot> slots_of(const std::string& perm, Protocol p) {
  return apply_permutation(oracle::plain_instance(Task::mcq), Permutation::from_string(perm), p).slots;
}

}  // namespace

TEST(Permutations, StructuredFiveOrders) {
  const auto s = mcq_permutation_set(McqPermMode::structured5);
  std::vector<std::string> names;
  for (const auto& p : s) names.push_back(p.to_string());
  EXPECT_EQ(names, (std::vector<std::string>{"ABCD", "BCDA", "CDAB", "DABC", "DCBA"}));
}

TEST(Permutations, CyclicFourIsPrefixOfStructured) {
  const auto c = mcq_permutation_set(McqPermMode::cyclic4);
  const auto s = mcq_permutation_set(McqPermMode::structured5);
  ASSERT_EQ(c.size(), 4u);
  EXPECT_TRUE(std::equal(c.begin(), c.end(), s.begin()));
}

TEST(Permutations, FullTwentyFour) {
  const auto f = mcq_permutation_set(McqPermMode::full24);
  ASSERT_EQ(f.size(), 24u);
  EXPECT_EQ(f.front(), Permutation::identity(4));
  EXPECT_EQ(std::set<Permutation>(f.begin(), f.end()).size(), 24u);
  EXPECT_TRUE(std::is_sorted(f.begin(), f.end()));
  for (const auto& p : f) EXPECT_TRUE(p.is_bijection());
}

TEST(Permutations, JudgePair) {
  const auto j = judge_permutation_set();
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[0].to_string(), "AB");
  EXPECT_EQ(j[1].to_string(), "BA");
  EXPECT_EQ(j[0], Permutation::identity(2));
}

TEST(Permutations, FromStringRejectsNonBijections) {
  EXPECT_THROW(Permutation::from_string("AABC"), InvalidPermutation);
  EXPECT_THROW(Permutation::from_string("ABCE"), InvalidPermutation);
  EXPECT_THROW(Permutation::from_string(""), InvalidPermutation);
  EXPECT_EQ(Permutation::from_string("DCBA").order, (std::vector<int>{4, 3, 2, 1}));
}

TEST(Permutations, SetTaskMismatchIsConfigError) {
  EXPECT_THROW(permutation_set(PermSet::structured5, Task::judge), ConfigError);
  EXPECT_THROW(permutation_set(PermSet::judge_pair, Task::mcq), ConfigError);
  EXPECT_EQ(permutation_set(PermSet::identity, Task::judge).size(), 1u);
  EXPECT_EQ(parse_perm_set("5"), PermSet::structured5);
  EXPECT_THROW(parse_perm_set("six"), ConfigError);
}

TEST(Groups, SizeAndDistinctness) {
  const Instance mcq = oracle::plain_instance(Task::mcq);
  EXPECT_EQ(make_group(mcq, mcq_permutation_set(McqPermMode::structured5)).size(), 5u);
  EXPECT_THROW(make_group(mcq, {Permutation::identity(4), Permutation::from_string("BACD")}), ShapeError);
  EXPECT_THROW(make_group(mcq, std::vector<Permutation>(4, Permutation::identity(4))), InvalidPermutation);
  const Instance judge = oracle::plain_instance(Task::judge);
  EXPECT_EQ(make_group(judge, judge_permutation_set()).size(), 2u);
  EXPECT_THROW(make_group(judge, mcq_permutation_set(McqPermMode::cyclic4)), ShapeError);
}

TEST(ApplyPermutation, CoupledShift) {
  EXPECT_EQ(slots_of("BCDA", Protocol::coupled),
            (std::vector<Slot>{{1, 'A', 2}, {2, 'B', 3}, {3, 'C', 4}, {4, 'D', 1}}));
}

TEST(ApplyPermutation, IdentityUnderEveryProtocol) {
  const std::vector<Slot> expected{{1, 'A', 1}, {2, 'B', 2}, {3, 'C', 3}, {4, 'D', 4}};
  for (Protocol p : kAllProtocols) EXPECT_EQ(slots_of("ABCD", p), expected) << to_string(p);
}

TEST(ApplyPermutation, OrderOnlyShift) {
  EXPECT_EQ(slots_of("BCDA", Protocol::order_only),
            (std::vector<Slot>{{1, 'B', 2}, {2, 'C', 3}, {3, 'D', 4}, {4, 'A', 1}}));
}

TEST(ApplyPermutation, LabelOnlyKeepsContentInPlace) {
  for (const auto& perm : all_permutations(4)) {
    const auto v = apply_permutation(oracle::plain_instance(Task::mcq), perm, Protocol::label_only);
    for (const auto& s : v.slots) EXPECT_EQ(s.semantic, s.position);
  }
}

TEST(ApplyPermutation, RejectsWrongLength) {
  EXPECT_THROW(apply_permutation(oracle::plain_instance(Task::judge), Permutation::identity(4), Protocol::coupled),
               InvalidPermutation);
}

TEST(LabelToSemantic, Examples) {
  const Instance inst = oracle::plain_instance(Task::mcq);
  const auto v = [&](const char* p) { return apply_permutation(inst, Permutation::from_string(p), Protocol::coupled); };
  EXPECT_EQ(label_to_semantic(v("BCDA"), 'A'), 2);
  EXPECT_EQ(label_to_semantic(v("ABCD"), 'C'), 3);
  EXPECT_EQ(label_to_semantic(v("DCBA"), 'A'), 4);
  const auto judge = apply_permutation(oracle::plain_instance(Task::judge), Permutation::identity(2), Protocol::coupled);
  EXPECT_THROW(label_to_semantic(judge, 'C'), ParseDomainError);
}

TEST(ParseLabel, StrictAndLenient) {
  const auto v = apply_permutation(oracle::plain_instance(Task::mcq), Permutation::identity(4), Protocol::coupled);
  EXPECT_EQ(parse_label("Answer: B", v), (ParsedLabel{'B', true}));
  EXPECT_EQ(parse_label("i think b maybe", v), (ParsedLabel{'B', false}));
  EXPECT_FALSE(parse_label("no idea", v).has_value());
  EXPECT_EQ(parse_label("reasoning first\nAnswer: D\n", v), (ParsedLabel{'D', true}));
  EXPECT_EQ(parse_label("Answer: D\nmore text", v), (ParsedLabel{'D', false}));
  EXPECT_EQ(parse_label("The answer is probably C.", v), (ParsedLabel{'C', false}));
  EXPECT_EQ(parse_label("a guess: C", v), (ParsedLabel{'C', false}));
}

TEST(ParseLabel, CustomPrefix) {
  const auto v = apply_permutation(oracle::plain_instance(Task::mcq), Permutation::identity(4), Protocol::coupled);
  EXPECT_EQ(parse_label("Final: A", v, FormatSpec{"Final:"}), (ParsedLabel{'A', true}));
  EXPECT_EQ(parse_label("Answer: A", v, FormatSpec{"Final:"}), (ParsedLabel{'A', false}));
}

// The lenient tier over a small corpus, checked against std::regex.
TEST(ParseLabel, LenientMatchesRegexOracle) {
  const auto v = apply_permutation(oracle::plain_instance(Task::mcq), Permutation::identity(4), Protocol::coupled);
  const std::vector<std::string> corpus{"i think b maybe", "option c is right", "x y d", "so, a", "B or C",
                                        "maybe (d)", "ab cd e", "none", "I pick c", "d."};
  const std::regex upper("(^|[^A-Za-z0-9_])([A-D])(?![A-Za-z0-9_])");
  const std::regex lower("(^|[^A-Za-z0-9_])([a-d])(?![A-Za-z0-9_])");
  for (const auto& text : corpus) {
    std::optional<char> expected;
    std::smatch m;
    if (std::regex_search(text, m, upper)) expected = m[2].str()[0];
    else if (std::regex_search(text, m, lower)) expected = static_cast<char>(std::toupper(m[2].str()[0]));
    const auto got = parse_label(text, v);
    EXPECT_EQ(got ? std::optional<char>(got->symbol) : std::nullopt, expected) << text;
    if (got) {
      EXPECT_FALSE(got->well_formatted);
    }
  }
}

TEST(Response, MakeResponseMapsToSemantic) {
  const auto v = apply_permutation(oracle::plain_instance(Task::mcq), Permutation::from_string("DCBA"), Protocol::coupled);
  const Response r = make_response("Answer: A", v, 3);
  EXPECT_EQ(r.parsed_label, 'A');
  EXPECT_EQ(r.semantic_choice, 4);
  EXPECT_TRUE(r.well_formatted);
  EXPECT_EQ(r.length_units, 3);
  const Response blank = make_response("no idea", v, 2);
  EXPECT_FALSE(blank.semantic_choice.has_value());
  EXPECT_FALSE(blank.well_formatted);
  EXPECT_EQ(count_length_units("  one two\tthree\n"), 3);
}

TEST(Instance, Validation) {
  Instance inst = oracle::plain_instance(Task::mcq);
  EXPECT_NO_THROW(validate(inst));
  inst.ground_truth = 5;
  EXPECT_THROW(validate(inst), InputError);
  inst = oracle::plain_instance(Task::judge);
  inst.candidates.push_back("extra");
  EXPECT_THROW(validate(inst), InputError);
  EXPECT_THROW(validate_unique_ids({oracle::plain_instance(Task::mcq), oracle::plain_instance(Task::mcq)}), InputError);
  EXPECT_THROW(parse_task("essay"), InputError);
}
