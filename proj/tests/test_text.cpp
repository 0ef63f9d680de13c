#include <catch_amalgamated.hpp>

#include "valign/text.hpp"
#include "valign/types.hpp"

using namespace valign;

TEST_CASE("trim and whitespace splitting") {
  CHECK(text::trim("  a b \n") == "a b");
  CHECK(text::trim("   ").empty());
  CHECK(text::split_whitespace(" one\ttwo\n three ") == std::vector<std::string>{"one", "two", "three"});
  CHECK(text::split_whitespace("").empty());
}

TEST_CASE("count_tokens agrees with split_whitespace") {
  for (const char* s : {"", "  ", "a", "a b", " a  b\tc\n", "I agree."}) {
    CHECK(text::count_tokens(s) == text::split_whitespace(s).size());
  }
}

TEST_CASE("normalize collapses whitespace and case") {
  CHECK(text::normalize("  Women   SHOULD\tcook ") == "women should cook");
  CHECK(text::normalize("a b") == text::normalize("A  B"));
  CHECK(text::normalize("a.b") != text::normalize("a b"));
}

TEST_CASE("strip_punct only touches the edges") {
  CHECK(text::strip_punct("\"Sexist.\"") == "Sexist");
  CHECK(text::strip_punct("non-sexist,") == "non-sexist");
  CHECK(text::strip_punct("...").empty());
}

TEST_CASE("label and stance names round-trip") {
  for (auto l : kLabelOrder) CHECK(parse_label(to_string(l)) == l);
  for (auto s : {Stance::value, Stance::counter_value}) CHECK(parse_stance(to_string(s)) == s);
  for (auto o : {Origin::generated, Origin::human, Origin::synthetic_na}) CHECK(parse_origin(to_string(o)) == o);
  CHECK_THROWS(parse_label("Sexist"));
  CHECK(index_of(Label::sexist) == 0);
  CHECK(index_of(Label::na) == 2);
}
