#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>

namespace manip {

enum class Color { Red, Blue, Cyan, Green, Magenta, Yellow, White };
enum class Shape { Cube, Lego, Dice };
enum class Rel { Left, Right, Front, Behind };
enum class Act { MovLeft, MovRight, MovFront, MovBehind, MovTop };

inline constexpr std::size_t kNumColors = 7;
inline constexpr std::size_t kNumShapes = 3;
inline constexpr std::size_t kNumRels = 4;
inline constexpr std::size_t kNumActs = 5;

// Object-level concepts share one index space: colors first, then shapes.
// The canonical ordering of filter chains follows these indices.
inline constexpr std::size_t kNumObjectConcepts = kNumColors + kNumShapes;

inline constexpr std::array<const char*, kNumColors> kColorNames = {
    "red", "blue", "cyan", "green", "magenta", "yellow", "white"};
inline constexpr std::array<const char*, kNumShapes> kShapeNames = {"cube", "lego", "dice"};
inline constexpr std::array<const char*, kNumRels> kRelNames = {"left", "right", "front",
                                                                "behind"};
inline constexpr std::array<const char*, kNumActs> kActNames = {
    "mov_left", "mov_right", "mov_front", "mov_behind", "mov_top"};

inline const char* to_token(Color c) { return kColorNames[static_cast<std::size_t>(c)]; }
inline const char* to_token(Shape s) { return kShapeNames[static_cast<std::size_t>(s)]; }
inline const char* to_token(Rel r) { return kRelNames[static_cast<std::size_t>(r)]; }
inline const char* to_token(Act a) { return kActNames[static_cast<std::size_t>(a)]; }

inline std::optional<Color> color_from_token(const std::string& t) {
  for (std::size_t i = 0; i < kNumColors; ++i) {
    if (t == kColorNames[i]) return static_cast<Color>(i);
  }
  return std::nullopt;
}

inline std::optional<Shape> shape_from_token(const std::string& t) {
  for (std::size_t i = 0; i < kNumShapes; ++i) {
    if (t == kShapeNames[i]) return static_cast<Shape>(i);
  }
  return std::nullopt;
}

inline std::optional<Rel> rel_from_token(const std::string& t) {
  for (std::size_t i = 0; i < kNumRels; ++i) {
    if (t == kRelNames[i]) return static_cast<Rel>(i);
  }
  return std::nullopt;
}

inline std::optional<Act> act_from_token(const std::string& t) {
  for (std::size_t i = 0; i < kNumActs; ++i) {
    if (t == kActNames[i]) return static_cast<Act>(i);
  }
  return std::nullopt;
}

// object-concept index space helpers (0..6 colors, 7..9 shapes)
inline std::size_t object_concept_index(Color c) { return static_cast<std::size_t>(c); }
inline std::size_t object_concept_index(Shape s) {
  return kNumColors + static_cast<std::size_t>(s);
}
inline bool object_concept_is_color(std::size_t idx) { return idx < kNumColors; }
inline const char* object_concept_token(std::size_t idx) {
  return idx < kNumColors ? kColorNames[idx] : kShapeNames[idx - kNumColors];
}

}  // namespace manip
