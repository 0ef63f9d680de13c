#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "valign/error.hpp"

namespace valign {

enum class Stance { value, counter_value };

enum class Label { sexist = 0, non_sexist = 1, na = 2 };

enum class Origin { generated, human, synthetic_na };

inline constexpr std::size_t kNumLabels = 3;
inline constexpr std::array<Label, kNumLabels> kLabelOrder{Label::sexist, Label::non_sexist, Label::na};

constexpr std::size_t index_of(Label label) { return static_cast<std::size_t>(label); }

inline std::string_view to_string(Stance s) {
  return s == Stance::value ? "value" : "counter_value";
}

inline std::string_view to_string(Label l) {
  switch (l) {
    case Label::sexist: return "sexist";
    case Label::non_sexist: return "non_sexist";
    case Label::na: return "na";
  }
  return "?";
}

inline std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::generated: return "generated";
    case Origin::human: return "human";
    case Origin::synthetic_na: return "synthetic_na";
  }
  return "?";
}

inline Stance parse_stance(std::string_view s) {
  if (s == "value") return Stance::value;
  if (s == "counter_value") return Stance::counter_value;
  throw InputError("unknown stance '" + std::string(s) + "'");
}

inline Label parse_label(std::string_view s) {
  if (s == "sexist") return Label::sexist;
  if (s == "non_sexist") return Label::non_sexist;
  if (s == "na") return Label::na;
  throw InputError("unknown label '" + std::string(s) + "'");
}

inline Origin parse_origin(std::string_view s) {
  if (s == "generated") return Origin::generated;
  if (s == "human") return Origin::human;
  if (s == "synthetic_na") return Origin::synthetic_na;
  throw InputError("unknown origin '" + std::string(s) + "'");
}

}  // namespace valign
