#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace synlm {

enum class TreeForm { kBinary, kNonBinary };
enum class Direction { kTopDown, kBottomUp };
enum class Composition { kInternal, kExternal };
enum class Masking { kMasked, kUnmasked };

// One of the sixteen compositional variants, e.g. "Bi-Up-Ex-Nm".
struct VariantConfig {
  TreeForm form = TreeForm::kBinary;
  Direction direction = Direction::kBottomUp;
  Composition composition = Composition::kExternal;
  Masking masking = Masking::kUnmasked;

  static VariantConfig parse(std::string_view name);
  std::string name() const;
  static std::array<VariantConfig, 16> all();

  friend bool operator==(const VariantConfig&, const VariantConfig&) = default;
};

std::string form_name(TreeForm f);
std::string direction_name(Direction d);

enum class CompositionMode { kNone, kInternal, kExternal };
enum class TreeTransform { kNone, kLeftBranching, kRightBranching };

// Everything that determines how a model sees its input: the sixteen
// compositional variants plus the seven baselines, which reuse the same
// model core with a causal mask and no composition.
struct ModelScheme {
  std::string name;
  bool structured = true;  // false only for token-lm
  TreeForm form = TreeForm::kNonBinary;
  Direction direction = Direction::kTopDown;
  CompositionMode composition = CompositionMode::kNone;
  Masking masking = Masking::kUnmasked;
  TreeTransform transform = TreeTransform::kNone;

  // Pointer candidates include the top stack item (width-1 spans).
  bool width1_starts = true;
  // Under M, the OPEN position of a composed constituent is hidden too.
  bool mask_open_positions = true;

  static ModelScheme parse(std::string_view name);
  static ModelScheme from_variant(const VariantConfig& v);
  static const std::vector<std::string>& baseline_names();

  bool has_pointer() const {
    return structured && form == TreeForm::kNonBinary && direction == Direction::kBottomUp;
  }
  bool internal() const { return composition == CompositionMode::kInternal; }
  bool external() const { return composition == CompositionMode::kExternal; }
  // Mask policy for compositional schemes; baselines use a causal mask.
  VariantConfig variant() const;
};

}  // namespace synlm
